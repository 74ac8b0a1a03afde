//! Statistical primitives: normal-distribution functions and the skewness /
//! kurtosis Z-transforms behind the D'Agostino–Pearson omnibus test.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("sample is constant; the statistic is undefined")]
    ConstantSample,
}

/// Complementary error function, evaluated by W. J. Cody's rational
/// approximations (absolute error below 1e-15 over the real line).
pub fn erfc(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.16112374387056560e0,
        1.13864154151050156e2,
        3.77485237685302021e2,
        3.20937758913846947e3,
        1.85777706184603153e-1,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e1,
        2.44024637934444173e2,
        1.28261652607737228e3,
        2.84423683343917062e3,
    ];
    const C: [f64; 9] = [
        5.64188496988670089e-1,
        8.88314979438837594e0,
        6.61191906371416295e1,
        2.98635138197400131e2,
        8.81952221241769090e2,
        1.71204761263407058e3,
        2.05107837782607147e3,
        1.23033935479799725e3,
        2.15311535474403846e-8,
    ];
    const D: [f64; 8] = [
        1.57449261107098347e1,
        1.17693950891312499e2,
        5.37181101862009858e2,
        1.62138957456669019e3,
        3.29079923573345963e3,
        4.36261909014324716e3,
        3.43936767414372164e3,
        1.23033935480374942e3,
    ];
    const P: [f64; 6] = [
        3.05326634961232344e-1,
        3.60344899949804439e-1,
        1.25781726111229246e-1,
        1.60837851487422766e-2,
        6.58749161529837803e-4,
        1.63153871373020978e-2,
    ];
    const Q: [f64; 5] = [
        2.56852019228982242e0,
        1.87295284992346047e0,
        5.27905102951428412e-1,
        6.05183413124413191e-2,
        2.33520497626869185e-3,
    ];
    const SQRPI: f64 = 5.6418958354775628695e-1; // 1/sqrt(pi)
    const THRESH: f64 = 0.46875;
    const XBIG: f64 = 26.543;

    let y = x.abs();
    let result = if y <= THRESH {
        // erfc = 1 - erf on the central interval.
        let ysq = if y > 1.11e-16 { y * y } else { 0.0 };
        let mut xnum = A[4] * ysq;
        let mut xden = ysq;
        for i in 0..3 {
            xnum = (xnum + A[i]) * ysq;
            xden = (xden + B[i]) * ysq;
        }
        return 1.0 - x * (xnum + A[3]) / (xden + B[3]);
    } else if y <= 4.0 {
        let mut xnum = C[8] * y;
        let mut xden = y;
        for i in 0..7 {
            xnum = (xnum + C[i]) * y;
            xden = (xden + D[i]) * y;
        }
        let r = (xnum + C[7]) / (xden + D[7]);
        scaled_exp(y) * r
    } else if y < XBIG {
        let ysq = 1.0 / (y * y);
        let mut xnum = P[5] * ysq;
        let mut xden = ysq;
        for i in 0..4 {
            xnum = (xnum + P[i]) * ysq;
            xden = (xden + Q[i]) * ysq;
        }
        let r = ysq * (xnum + P[4]) / (xden + Q[4]);
        scaled_exp(y) * ((SQRPI - r) / y)
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

/// exp(-y^2) computed as exp(-hi^2) * exp(-(y-hi)(y+hi)) with hi = y rounded
/// to 1/16, which keeps the argument splitting exact (Cody's trick).
fn scaled_exp(y: f64) -> f64 {
    let hi = (y * 16.0).trunc() / 16.0;
    let del = (y - hi) * (y + hi);
    (-hi * hi).exp() * (-del).exp()
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided tail probability of a standard normal score:
/// `2 * (1 - Phi(|z|))`.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Survival function of the chi-square distribution with 2 degrees of
/// freedom (the reference distribution of the omnibus statistic).
pub fn chi2_sf_2dof(x: f64) -> f64 {
    (-0.5 * x).exp()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (divide by n-1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Central moment of order `k` with the divide-by-n convention.
fn central_moment(xs: &[f64], k: u32) -> f64 {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m).powi(k as i32)).sum::<f64>() / xs.len() as f64
}

/// Normal-approximation Z statistic for sample skewness
/// (D'Agostino's test, as standardized by the usual small-sample transform).
/// Requires n >= 8.
pub fn skewness_z(xs: &[f64]) -> Result<f64, StatsError> {
    let n = xs.len();
    if n < 8 {
        return Err(StatsError::TooFewSamples { need: 8, got: n });
    }
    let m2 = central_moment(xs, 2);
    if m2 == 0.0 {
        return Err(StatsError::ConstantSample);
    }
    let b1 = central_moment(xs, 3) / m2.powf(1.5);
    let nf = n as f64;
    let mut y = b1 * (((nf + 1.0) * (nf + 3.0)) / (6.0 * (nf - 2.0))).sqrt();
    let beta2 = 3.0 * (nf * nf + 27.0 * nf - 70.0) * (nf + 1.0) * (nf + 3.0)
        / ((nf - 2.0) * (nf + 5.0) * (nf + 7.0) * (nf + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    if y == 0.0 {
        y = 1.0;
    }
    Ok(delta * (y / alpha + ((y / alpha) * (y / alpha) + 1.0).sqrt()).ln())
}

/// Normal-approximation Z statistic for sample kurtosis
/// (Anscombe–Glynn transform). Requires n >= 5.
pub fn kurtosis_z(xs: &[f64]) -> Result<f64, StatsError> {
    let n = xs.len();
    if n < 5 {
        return Err(StatsError::TooFewSamples { need: 5, got: n });
    }
    let m2 = central_moment(xs, 2);
    if m2 == 0.0 {
        return Err(StatsError::ConstantSample);
    }
    let b2 = central_moment(xs, 4) / (m2 * m2);
    let nf = n as f64;
    let e = 3.0 * (nf - 1.0) / (nf + 1.0);
    let var_b2 =
        24.0 * nf * (nf - 2.0) * (nf - 3.0) / ((nf + 1.0) * (nf + 1.0) * (nf + 3.0) * (nf + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (nf * nf - 5.0 * nf + 2.0) / ((nf + 7.0) * (nf + 9.0))
        * ((6.0 * (nf + 3.0) * (nf + 5.0)) / (nf * (nf - 2.0) * (nf - 3.0))).sqrt();
    let a = 6.0
        + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    Ok((term1 - term2) / (2.0 / (9.0 * a)).sqrt())
}
