//! L2-regularized binary logistic regression with interpretable reporting.
//!
//! The predictor is `sigmoid(x . W + w0)` over standardized features. The
//! loss is the mean negative log-likelihood plus `lambda / (2m) * sum(w_j^2)`
//! with the bias unpenalized. Training is deterministic full-batch Newton
//! with a Cholesky solve, a Levenberg diagonal fallback, and a backtracking
//! line search; for `lambda > 0` the loss is strictly convex, so the optimum
//! is unique and run-to-run identical.

use crate::corpus::Chunk;
use crate::features::{
    fit_standardizer, vectorize, FeatureError, FeatureMatrix, Lexicon, Standardizer,
};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Version tag written into model files.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Probabilities are clamped to `[EPS_P, 1 - EPS_P]` inside the loss to
/// guard `log(0)`; reported predictions are not clamped.
pub const EPS_P: f64 = 1e-12;

const MAX_ITERATIONS: usize = 10_000;
const REL_LOSS_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training requires both classes; got only class {0}")]
    SingleClass(u8),
    #[error(
        "optimizer failed to converge after {iterations} iterations \
         (loss {last_loss:.6e}, gradient max-norm {grad_max_norm:.6e})"
    )]
    NonConvergence {
        iterations: usize,
        last_loss: f64,
        grad_max_norm: f64,
    },
    #[error("model lexicon does not match the matrix lexicon")]
    LexiconMismatch,
    #[error("model file {path} is malformed: {reason}")]
    MalformedModel { path: PathBuf, reason: String },
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Numerically stable logistic function, monotone and in (0, 1) for all
/// finite inputs.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Penalized loss over an already-standardized matrix: mean negative
/// log-likelihood with probabilities clamped to `[EPS_P, 1 - EPS_P]`, plus
/// `lambda / (2m) * sum(w_j^2)` (bias excluded).
pub fn loss(w: &[f64], w0: f64, x: &FeatureMatrix, lambda: f64) -> f64 {
    let m = x.m() as f64;
    let mut nll = 0.0;
    for (row, &y) in x.rows.iter().zip(&x.labels) {
        let z = dot(row, w) + w0;
        nll += nll_term(z, y);
    }
    let penalty = w.iter().map(|&wj| wj * wj).sum::<f64>();
    nll / m + lambda / (2.0 * m) * penalty
}

fn nll_term(z: f64, y: u8) -> f64 {
    let p = sigmoid(z).clamp(EPS_P, 1.0 - EPS_P);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Analytic gradient of [`loss`] at `(w, w0)`, returned as
/// `(grad_w, grad_w0)`: the mean of residual-scaled rows plus the
/// `lambda/m` ridge term on `w` (bias unpenalized).
pub fn loss_gradient(w: &[f64], w0: f64, x: &FeatureMatrix, lambda: f64) -> (Vec<f64>, f64) {
    let m = x.m() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut g0 = 0.0;
    for (row, &y) in x.rows.iter().zip(&x.labels) {
        let r = sigmoid(dot(row, w) + w0) - y as f64;
        g0 += r;
        for (g, &v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
    }
    for (g, &wj) in gw.iter_mut().zip(w) {
        *g = *g / m + lambda / m * wj;
    }
    (gw, g0 / m)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The full predictor: selected lexicon, weights, bias, regularization
/// strength, and the training-set standardizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub positive_label: String,
    pub negative_label: String,
    pub lambda: f64,
    pub bias: f64,
    pub lexicon: Lexicon,
    pub weights: Vec<f64>,
    pub standardizer: Standardizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl TrainedModel {
    /// Probability that the chunk belongs to the positive class.
    pub fn predict_proba(&self, chunk: &Chunk) -> Result<f64, ModelError> {
        let v = vectorize(chunk, &self.lexicon)?;
        self.predict_proba_raw(&v)
    }

    /// Probability from a raw (unstandardized) frequency vector.
    pub fn predict_proba_raw(&self, v: &[f64]) -> Result<f64, ModelError> {
        let xs = self.standardizer.apply(v)?;
        Ok(sigmoid(dot(&xs, &self.weights) + self.bias))
    }

    /// Serializes to JSON. All reals survive a round-trip bit-exactly
    /// (shortest round-trip decimal representation).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let model: TrainedModel = serde_json::from_str(json)?;
        model.check_shape().map_err(|reason| {
            ModelError::MalformedModel {
                path: PathBuf::from("<string>"),
                reason,
            }
        })?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let json = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let model: TrainedModel = serde_json::from_str(&json)?;
        model.check_shape().map_err(|reason| {
            ModelError::MalformedModel {
                path: path.to_path_buf(),
                reason,
            }
        })?;
        Ok(model)
    }

    fn check_shape(&self) -> Result<(), String> {
        let n = self.lexicon.len();
        if self.weights.len() != n {
            return Err(format!(
                "{} weights for {} lexicon entries",
                self.weights.len(),
                n
            ));
        }
        if self.standardizer.n() != n
            || self.standardizer.sds.len() != n
            || self.standardizer.constant.len() != n
        {
            return Err("standardizer width does not match the lexicon".to_string());
        }
        Ok(())
    }
}

/// Trains on raw frequency rows: fits the standardizer on the given rows,
/// standardizes, and minimizes the penalized loss to the documented
/// tolerances (relative loss change < 1e-10 or gradient max-norm < 1e-8,
/// capped at 10,000 iterations).
pub fn train(
    x: &FeatureMatrix,
    lambda: f64,
    positive_label: &str,
    negative_label: &str,
) -> Result<TrainedModel, ModelError> {
    let std = fit_standardizer(x)?;
    let xs = standardize_dmat(&x.rows, None, &std)?;
    let fit = newton_fit(&xs, &x.labels, None, lambda, None)?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        positive_label: positive_label.to_string(),
        negative_label: negative_label.to_string(),
        lambda,
        bias: fit.w0,
        lexicon: x.lexicon.clone(),
        weights: fit.w,
        standardizer: std,
        notes: None,
    })
}

/// One row of the ranked weight table.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureReportRow {
    pub ngram: String,
    pub weight: f64,
    /// Positive-class mean usage per 1,000 characters in the given matrix.
    pub positive_per_1000: f64,
    /// Negative-class mean usage per 1,000 characters.
    pub negative_per_1000: f64,
}

/// Ranked weight table: features sorted by descending weight, each with the
/// per-class mean frequency (per 1,000 characters) in the training matrix.
pub fn feature_report(
    model: &TrainedModel,
    train: &FeatureMatrix,
) -> Result<(f64, Vec<FeatureReportRow>), ModelError> {
    if model.lexicon != train.lexicon {
        return Err(ModelError::LexiconMismatch);
    }
    for &class in &[0u8, 1u8] {
        if !train.labels.contains(&class) {
            return Err(ModelError::SingleClass(1 - class));
        }
    }
    let class_mean = |class: u8, j: usize| -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (row, &y) in train.rows.iter().zip(&train.labels) {
            if y == class {
                sum += row[j];
                count += 1;
            }
        }
        sum / count as f64 * 1000.0
    };
    let mut rows: Vec<FeatureReportRow> = model
        .lexicon
        .ngrams()
        .iter()
        .enumerate()
        .map(|(j, g)| FeatureReportRow {
            ngram: g.clone(),
            weight: model.weights[j],
            positive_per_1000: class_mean(1, j),
            negative_per_1000: class_mean(0, j),
        })
        .collect();
    rows.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    Ok((model.bias, rows))
}

/// Pearson correlation matrix of the matrix columns (standardization leaves
/// Pearson correlations unchanged, so raw frequencies are used directly).
/// Constant columns correlate 0 with everything and 1 with themselves.
pub fn correlation_matrix(x: &FeatureMatrix) -> Vec<Vec<f64>> {
    let m = x.m();
    let n = x.n();
    let means: Vec<f64> = (0..n)
        .map(|j| x.rows.iter().map(|r| r[j]).sum::<f64>() / m as f64)
        .collect();
    let sds: Vec<f64> = (0..n)
        .map(|j| {
            (x.rows
                .iter()
                .map(|r| {
                    let d = r[j] - means[j];
                    d * d
                })
                .sum::<f64>()
                / m as f64)
                .sqrt()
        })
        .collect();
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        out[j][j] = 1.0;
        for k in (j + 1)..n {
            if sds[j] == 0.0 || sds[k] == 0.0 {
                continue;
            }
            let cov = x
                .rows
                .iter()
                .map(|r| (r[j] - means[j]) * (r[k] - means[k]))
                .sum::<f64>()
                / m as f64;
            let r = (cov / (sds[j] * sds[k])).clamp(-1.0, 1.0);
            out[j][k] = r;
            out[k][j] = r;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Internal dense kernels shared with the selection module.

/// Row-major dense matrix used on the optimizer hot path.
#[derive(Debug, Clone)]
pub(crate) struct DMat {
    pub m: usize,
    pub n: usize,
    a: Vec<f64>,
}

impl DMat {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }
}

/// Standardizes `rows` (optionally skipping one index, for leave-one-out
/// folds) into a dense matrix.
pub(crate) fn standardize_dmat(
    rows: &[Vec<f64>],
    skip: Option<usize>,
    std: &Standardizer,
) -> Result<DMat, FeatureError> {
    let n = std.n();
    let m = rows.len() - usize::from(skip.is_some());
    // No constant-column branch here: these rows were part of the fit, so a
    // constant column holds exactly its recorded mean and (v - mean) / 1.0
    // is already exactly 0. (`Standardizer::apply` keeps the branch for
    // unseen data.)
    let mut a = vec![0.0; m * n];
    let mut out_rows = a.chunks_exact_mut(n);
    for (i, row) in rows.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        if row.len() != n {
            return Err(FeatureError::WidthMismatch(n, row.len()));
        }
        let out = out_rows.next().expect("m rows reserved");
        let row = &row[..n];
        let means = &std.means[..n];
        let sds = &std.sds[..n];
        for j in 0..n {
            out[j] = (row[j] - means[j]) / sds[j];
        }
    }
    Ok(DMat { m, n, a })
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonFit {
    pub w: Vec<f64>,
    pub w0: f64,
    #[allow(dead_code)]
    pub loss: f64,
}

/// Minimizes the penalized loss over a standardized matrix. `init` warm
/// starts the iteration (the optimum is unique for `lambda > 0`, so warm
/// starts change only the iteration count, never the result).
pub(crate) fn newton_fit(
    x: &DMat,
    y: &[u8],
    skip: Option<usize>,
    lambda: f64,
    init: Option<(&[f64], f64)>,
) -> Result<NewtonFit, ModelError> {
    let labels = gather_labels(y, skip);
    debug_assert_eq!(labels.len(), x.m);
    check_both_classes(&labels)?;

    let m = x.m;
    let n = x.n;
    let mf = m as f64;
    let dim = n + 1; // component 0 is the bias
    let (mut w, mut w0) = match init {
        Some((w_init, w0_init)) => (w_init.to_vec(), w0_init),
        None => (vec![0.0; n], 0.0),
    };

    let mut z = vec![0.0; m];
    let mut p = vec![0.0; m];
    let mut s = vec![0.0; m];
    let mut grad = vec![0.0; dim];
    let mut h = vec![0.0; dim * dim];
    let mut hwork = vec![0.0; dim * dim];
    let mut step = vec![0.0; dim];
    let mut dz = vec![0.0; m];

    let mut prev_loss = f64::INFINITY;
    for iter in 0..MAX_ITERATIONS {
        // Current loss and gradient.
        let mut nll = 0.0;
        for i in 0..m {
            let zi = dot(x.row(i), &w) + w0;
            z[i] = zi;
            let pi = sigmoid(zi);
            p[i] = pi;
            s[i] = pi * (1.0 - pi);
            nll += nll_term(zi, labels[i]);
        }
        let penalty: f64 = w.iter().map(|&wj| wj * wj).sum();
        let current = nll / mf + lambda / (2.0 * mf) * penalty;

        if iter > 0 && (prev_loss - current).abs() <= REL_LOSS_TOL * prev_loss.abs().max(1.0) {
            return Ok(NewtonFit {
                w,
                w0,
                loss: current,
            });
        }
        prev_loss = current;

        grad.fill(0.0);
        for i in 0..m {
            let r = p[i] - labels[i] as f64;
            grad[0] += r;
            axpy(&mut grad[1..], r, x.row(i));
        }
        for g in grad.iter_mut() {
            *g /= mf;
        }
        for j in 0..n {
            grad[1 + j] += lambda / mf * w[j];
        }
        let grad_max = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if grad_max < GRAD_TOL {
            return Ok(NewtonFit {
                w,
                w0,
                loss: current,
            });
        }

        // Hessian: [sum(s)  sum(s x^T); sum(s x)  X^T S X] / m + (lambda/m) I
        // on the weight block. Only the upper triangle is accumulated.
        h.fill(0.0);
        for i in 0..m {
            let xi = x.row(i);
            let si = s[i];
            h[0] += si;
            axpy(&mut h[1..dim], si, xi);
            for j in 0..n {
                let v = si * xi[j];
                let row_start = (1 + j) * dim + 1 + j;
                axpy(&mut h[row_start..(1 + j) * dim + dim], v, &xi[j..]);
            }
        }
        for v in h.iter_mut() {
            *v /= mf;
        }
        for j in 0..n {
            h[(1 + j) * dim + 1 + j] += lambda / mf;
        }
        for r in 0..dim {
            for c in (r + 1)..dim {
                h[c * dim + r] = h[r * dim + c];
            }
        }

        // Newton direction, with a Levenberg diagonal bump if the factor
        // fails (possible only at numerical extremes).
        let mut tau = 0.0;
        let solved = loop {
            hwork.copy_from_slice(&h);
            if tau > 0.0 {
                for r in 0..dim {
                    hwork[r * dim + r] += tau;
                }
            }
            if cholesky_solve(&mut hwork, dim, &grad, &mut step) {
                break true;
            }
            tau = if tau == 0.0 { 1e-10 } else { tau * 100.0 };
            if tau > 1e12 {
                break false;
            }
        };
        if !solved {
            return Err(ModelError::NonConvergence {
                iterations: iter,
                last_loss: current,
                grad_max_norm: grad_max,
            });
        }
        for v in step.iter_mut() {
            *v = -*v;
        }

        // Backtracking (Armijo) line search along the Newton direction.
        for i in 0..m {
            dz[i] = dot(x.row(i), &step[1..]) + step[0];
        }
        let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut nll_t = 0.0;
            for i in 0..m {
                nll_t += nll_term(z[i] + t * dz[i], labels[i]);
            }
            let mut penalty_t = 0.0;
            for j in 0..n {
                let wj = w[j] + t * step[1 + j];
                penalty_t += wj * wj;
            }
            let trial = nll_t / mf + lambda / (2.0 * mf) * penalty_t;
            if trial <= current + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No representable step improves the loss: we are at the
            // numerical optimum.
            return Ok(NewtonFit {
                w,
                w0,
                loss: current,
            });
        }
        w0 += t * step[0];
        for j in 0..n {
            w[j] += t * step[1 + j];
        }
    }

    Err(ModelError::NonConvergence {
        iterations: MAX_ITERATIONS,
        last_loss: prev_loss,
        grad_max_norm: f64::NAN,
    })
}

/// Iteration cap for the fixed-Hessian fold refits; warm-started folds
/// typically converge in 3-5 steps, and anything slower falls back to the
/// exact Newton solver well before this.
const FIXED_H_MAX_ITERATIONS: usize = 40;

/// Prefactored curvature shared across leave-one-out folds: the factor of
/// `M = sum_i s_i x̃_i x̃_iᵀ + λ diag(0,1,..,1)` (the penalized full-data
/// Hessian at the warm optimum, scaled by m) together with each sample's
/// rank-one contribution `√s_i x̃_i`, so a fold's curvature `M - v_i v_iᵀ`
/// comes from one O(dim²) downdate instead of a fresh O(m dim²) build.
#[derive(Debug, Clone)]
pub(crate) struct FoldSolver {
    l: Vec<f64>,
    dim: usize,
    v: Vec<f64>,
}

/// One fold's downdated factor; solves `H_fold step = grad` in the fold's
/// own standardized coordinates. The change of basis between the full-data
/// and fold standardizations is the triangular map `x_fold = d∘x_full + c`,
/// applied around the substitution as two O(n) transforms, and the `m - 1`
/// normalization of the fold objective is folded into the scale.
pub(crate) struct FoldFactor {
    l: Vec<f64>,
    dim: usize,
    scale: f64,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl FoldSolver {
    /// Removes sample `i` from the factored curvature and records the basis
    /// change from the full-data standardizer to the fold's. None when the
    /// downdate loses positive definiteness (callers then refit exactly).
    pub(crate) fn for_fold(
        &self,
        i: usize,
        full_std: &Standardizer,
        fold_std: &Standardizer,
    ) -> Option<FoldFactor> {
        let n = self.dim - 1;
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for j in 0..n {
            c[j] = (full_std.means[j] - fold_std.means[j]) / fold_std.sds[j];
            d[j] = full_std.sds[j] / fold_std.sds[j];
            if !c[j].is_finite() || !(d[j] > 0.0 && d[j].is_finite()) {
                return None;
            }
        }
        let mut l = self.l.clone();
        let mut v = self.v[i * self.dim..(i + 1) * self.dim].to_vec();
        if !cholesky_downdate(&mut l, self.dim, &mut v) {
            return None;
        }
        let m = self.v.len() / self.dim;
        Some(FoldFactor {
            l,
            dim: self.dim,
            scale: (m - 1) as f64,
            c,
            d,
        })
    }
}

impl FoldFactor {
    /// Solves `(Tᵀ M̃ T / scale) out = rhs` where `M̃` is the downdated
    /// curvature (factored in `l`, full-data coordinates) and `T` maps fold
    /// coordinates to full-data ones.
    fn solve(&self, rhs: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let n = self.dim - 1;
        scratch[0] = rhs[0];
        for j in 0..n {
            scratch[1 + j] = (rhs[1 + j] - self.c[j] * rhs[0]) / self.d[j];
        }
        cholesky_substitute(&self.l, self.dim, scratch, out);
        let mut bias = out[0];
        for j in 0..n {
            out[1 + j] /= self.d[j];
            bias -= self.c[j] * out[1 + j];
        }
        out[0] = bias;
        for o in out.iter_mut() {
            *o *= self.scale;
        }
    }

    /// Re-expresses the full-data optimum in the fold's coordinates so the
    /// warm start reproduces its predictions exactly.
    pub(crate) fn warm_start(&self, w: &[f64], w0: f64) -> (Vec<f64>, f64) {
        let n = self.dim - 1;
        let mut wf = vec![0.0; n];
        let mut bias = w0;
        for j in 0..n {
            wf[j] = w[j] / self.d[j];
            bias -= wf[j] * self.c[j];
        }
        (wf, bias)
    }
}

/// Builds and factors the scaled Hessian of the penalized objective over
/// all of `x` at `(w, w0)`, recording per-sample downdate vectors. Returns
/// None when the factorization fails (callers then use the exact per-fold
/// solver).
pub(crate) fn factor_fold_solver(x: &DMat, lambda: f64, w: &[f64], w0: f64) -> Option<FoldSolver> {
    let m = x.m;
    let n = x.n;
    let dim = n + 1;
    let mut h = vec![0.0; dim * dim];
    let mut v = vec![0.0; m * dim];
    for i in 0..m {
        let xi = x.row(i);
        let zi = dot(xi, w) + w0;
        let pi = sigmoid(zi);
        let si = pi * (1.0 - pi);
        h[0] += si;
        axpy(&mut h[1..dim], si, xi);
        for j in 0..n {
            let hij = si * xi[j];
            let row_start = (1 + j) * dim + 1 + j;
            axpy(&mut h[row_start..(1 + j) * dim + dim], hij, &xi[j..]);
        }
        let root = si.sqrt();
        v[i * dim] = root;
        for j in 0..n {
            v[i * dim + 1 + j] = root * xi[j];
        }
    }
    for j in 0..n {
        h[(1 + j) * dim + 1 + j] += lambda;
    }
    for r in 0..dim {
        for c in (r + 1)..dim {
            h[c * dim + r] = h[r * dim + c];
        }
    }
    if cholesky_factor(&mut h, dim) {
        Some(FoldSolver { l: h, dim, v })
    } else {
        None
    }
}

/// Rank-one Cholesky downdate: rewrites `l` (lower triangle, row-major) so
/// that `l lᵀ` becomes `l lᵀ - v vᵀ`, consuming `v` as workspace. Returns
/// false when the result is not numerically positive definite.
fn cholesky_downdate(l: &mut [f64], dim: usize, v: &mut [f64]) -> bool {
    for k in 0..dim {
        let lkk = l[k * dim + k];
        let vk = v[k];
        let d2 = (lkk - vk) * (lkk + vk);
        if d2 <= 0.0 || !lkk.is_finite() {
            return false;
        }
        let r = d2.sqrt();
        let c = r / lkk;
        let s = vk / lkk;
        l[k * dim + k] = r;
        for j in (k + 1)..dim {
            let ljk = (l[j * dim + k] - s * v[j]) / c;
            v[j] = c * v[j] - s * ljk;
            l[j * dim + k] = ljk;
        }
    }
    true
}

/// Leave-one-out fold refit with a fixed approximate Hessian: iterates
/// `theta <- theta - H̃⁻¹ ∇f(theta)` where `H̃` is the downdated warm-point
/// curvature for this fold and `∇f` the exact fold gradient. `H̃` differs
/// from the true fold Hessian only by the standardizer shift and the drift
/// of the iterate — both O(1/m) — so the iteration contracts rapidly toward
/// the same unique optimum the exact solver finds, and convergence is still
/// declared by the exact gradient criterion. Any sign of non-contraction
/// falls back to the exact solver. Returns `(w, w0)`; fold scoring never
/// reads the loss, so it is not computed.
pub(crate) fn newton_fit_fixed(
    x: &DMat,
    y: &[u8],
    skip: Option<usize>,
    lambda: f64,
    init: (&[f64], f64),
    factor: &FoldFactor,
) -> Result<(Vec<f64>, f64), ModelError> {
    let labels = gather_labels(y, skip);
    debug_assert_eq!(labels.len(), x.m);
    check_both_classes(&labels)?;

    let m = x.m;
    let n = x.n;
    let mf = m as f64;
    let dim = n + 1;
    debug_assert_eq!(dim, factor.dim);
    let (mut w, mut w0) = (init.0.to_vec(), init.1);
    let mut grad = vec![0.0; dim];
    let mut step = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let mut prev_grad_max = f64::INFINITY;

    for _it in 0..FIXED_H_MAX_ITERATIONS {
        grad.fill(0.0);
        for i in 0..m {
            let xi = x.row(i);
            let r = sigmoid(dot(xi, &w) + w0) - labels[i] as f64;
            grad[0] += r;
            axpy(&mut grad[1..], r, xi);
        }
        for g in grad.iter_mut() {
            *g /= mf;
        }
        for j in 0..n {
            grad[1 + j] += lambda / mf * w[j];
        }
        let grad_max = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if grad_max < GRAD_TOL {
            return Ok((w, w0));
        }
        if grad_max > 0.7 * prev_grad_max {
            // Contraction stalled (curvature mismatch); hand over to the
            // exact solver from the current iterate.
            let fit = newton_fit(x, y, skip, lambda, Some((&w, w0)))?;
            return Ok((fit.w, fit.w0));
        }
        prev_grad_max = grad_max;
        factor.solve(&grad, &mut step, &mut scratch);
        w0 -= step[0];
        for j in 0..n {
            w[j] -= step[1 + j];
        }
    }
    let fit = newton_fit(x, y, skip, lambda, Some((&w, w0)))?;
    Ok((fit.w, fit.w0))
}

fn gather_labels(y: &[u8], skip: Option<usize>) -> Vec<u8> {
    match skip {
        None => y.to_vec(),
        Some(s) => y
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != s)
            .map(|(_, &v)| v)
            .collect(),
    }
}

fn check_both_classes(labels: &[u8]) -> Result<(), ModelError> {
    let has_pos = labels.contains(&1);
    let has_neg = labels.contains(&0);
    if !has_pos {
        return Err(ModelError::SingleClass(0));
    }
    if !has_neg {
        return Err(ModelError::SingleClass(1));
    }
    Ok(())
}

/// `out[k] += a * xs[k]` over equal-length slices (vectorizer-friendly).
#[inline]
fn axpy(out: &mut [f64], a: f64, xs: &[f64]) {
    debug_assert_eq!(out.len(), xs.len());
    for (o, &x) in out.iter_mut().zip(xs) {
        *o += a * x;
    }
}

/// In-place Cholesky factorization and solve of `h * out = rhs` for a
/// symmetric positive-definite `h` (dim x dim, row-major). Returns false if
/// the matrix is not numerically positive definite.
fn cholesky_solve(h: &mut [f64], dim: usize, rhs: &[f64], out: &mut [f64]) -> bool {
    if !cholesky_factor(h, dim) {
        return false;
    }
    cholesky_substitute(h, dim, rhs, out);
    true
}

/// Lower-triangular Cholesky factor, stored in place. Returns false if the
/// matrix is not numerically positive definite.
fn cholesky_factor(h: &mut [f64], dim: usize) -> bool {
    for k in 0..dim {
        let mut d = h[k * dim + k];
        for t in 0..k {
            let l = h[k * dim + t];
            d -= l * l;
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let lkk = d.sqrt();
        h[k * dim + k] = lkk;
        for r in (k + 1)..dim {
            let mut v = h[r * dim + k];
            for t in 0..k {
                v -= h[r * dim + t] * h[k * dim + t];
            }
            h[r * dim + k] = v / lkk;
        }
    }
    true
}

/// Solves `L L^T out = rhs` given the lower factor from [`cholesky_factor`].
fn cholesky_substitute(l: &[f64], dim: usize, rhs: &[f64], out: &mut [f64]) {
    // Forward substitution: L u = rhs.
    for r in 0..dim {
        let mut v = rhs[r];
        for t in 0..r {
            v -= l[r * dim + t] * out[t];
        }
        out[r] = v / l[r * dim + r];
    }
    // Back substitution: L^T x = u.
    for r in (0..dim).rev() {
        let mut v = out[r];
        for t in (r + 1)..dim {
            v -= l[t * dim + r] * out[t];
        }
        out[r] = v / l[r * dim + r];
    }
}
