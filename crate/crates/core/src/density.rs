//! Stylome density and the collaboration/intervention hypothesis test.
//!
//! The stylome density of a chunk is the total number of occurrences of the
//! selected discriminative n-grams divided by its character count. Densities
//! of single-authored chunks are modeled as a normal reference distribution;
//! a questioned document's density is then z-tested against it. Low density
//! indicates a "diluted" personal style, the signature of deep collaboration
//! or external editing.

use crate::corpus::Chunk;
use crate::exec;
use crate::features::{count_ngram, Lexicon};
use crate::stats::{self, StatsError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("chunk of '{0}' has no countable characters")]
    ZeroLengthChunk(String),
    #[error("reference fitting needs at least {need} densities, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("sample is constant; the reference scale would be zero")]
    ConstantSample,
    #[error("reference sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
}

impl From<StatsError> for DensityError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::TooFewSamples { need, got } => DensityError::TooFewSamples { need, got },
            StatsError::ConstantSample => DensityError::ConstantSample,
        }
    }
}

/// Normal model of single-authored stylome densities, fitted on chunks from
/// the train and validation splits only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDistribution {
    pub mu: f64,
    pub sigma: f64,
    /// Number of densities the fit used; 0 when built from explicit
    /// parameters.
    pub sample_size: usize,
    /// Omnibus normality statistic of the fitted sample, when available.
    #[serde(default)]
    pub normality_k2: Option<f64>,
    #[serde(default)]
    pub normality_p: Option<f64>,
}

impl ReferenceDistribution {
    /// Builds a reference from explicit parameters (e.g. published values)
    /// rather than a fitted sample.
    pub fn from_params(mu: f64, sigma: f64) -> Result<Self, DensityError> {
        if !(sigma > 0.0) {
            return Err(DensityError::NonPositiveSigma(sigma));
        }
        Ok(ReferenceDistribution {
            mu,
            sigma,
            sample_size: 0,
            normality_k2: None,
            normality_p: None,
        })
    }

    /// True when the fitted sample failed the normality check at 0.05.
    /// Callers should surface this as a warning; the z-test still runs.
    pub fn normality_warning(&self) -> bool {
        self.normality_p.is_some_and(|p| p < 0.05)
    }
}

/// Outcome of testing one density against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTestResult {
    pub density: f64,
    pub z: f64,
    pub p_two_sided: f64,
    /// Equivalent to `p_two_sided < 0.05` regardless of any configured
    /// reporting level.
    pub reject_at_0_05: bool,
}

/// Total occurrences of the lexicon's n-grams in the chunk divided by the
/// chunk's character count (masks stay in the denominator, separators do
/// not). Occurrences are counted independently, so overlapping features all
/// contribute.
pub fn stylome_density(chunk: &Chunk, features: &Lexicon) -> Result<f64, DensityError> {
    if chunk.length == 0 {
        return Err(DensityError::ZeroLengthChunk(chunk.parent_id.clone()));
    }
    let total: usize = features
        .ngrams()
        .iter()
        .map(|g| count_ngram(&chunk.text, g))
        .sum();
    Ok(total as f64 / chunk.length as f64)
}

/// Densities of many chunks (computed in parallel when enabled).
pub fn densities(chunks: &[Chunk], features: &Lexicon) -> Result<Vec<f64>, DensityError> {
    exec::map_slice(chunks, |c| stylome_density(c, features))
        .into_iter()
        .collect()
}

/// D'Agostino–Pearson omnibus normality test: K² = Z₁(skewness)² +
/// Z₂(kurtosis)², with the p-value from chi-square (2 dof). Needs n ≥ 8 and
/// a non-constant sample.
pub fn normality_test(sample: &[f64]) -> Result<(f64, f64), DensityError> {
    if sample.len() >= 2 && sample.iter().all(|v| v.to_bits() == sample[0].to_bits()) {
        return Err(DensityError::ConstantSample);
    }
    let z1 = stats::skewness_z(sample)?;
    let z2 = stats::kurtosis_z(sample)?;
    let k2 = z1 * z1 + z2 * z2;
    Ok((k2, stats::chi2_sf_2dof(k2)))
}

/// Fits the reference: sample mean, sample standard deviation (divide by
/// n−1), and the normality check. Needs at least 8 densities. A normality
/// p below 0.05 is recorded for [`ReferenceDistribution::normality_warning`],
/// not raised as an error.
pub fn fit_reference(densities: &[f64]) -> Result<ReferenceDistribution, DensityError> {
    let n = densities.len();
    if n < 8 {
        return Err(DensityError::TooFewSamples { need: 8, got: n });
    }
    if densities
        .iter()
        .all(|v| v.to_bits() == densities[0].to_bits())
    {
        return Err(DensityError::ConstantSample);
    }
    let mu = stats::mean(densities);
    let sigma = stats::sample_variance(densities).sqrt();
    if !(sigma > 0.0) {
        return Err(DensityError::ConstantSample);
    }
    let (k2, p) = normality_test(densities)?;
    Ok(ReferenceDistribution {
        mu,
        sigma,
        sample_size: n,
        normality_k2: Some(k2),
        normality_p: Some(p),
    })
}

/// Two-sided z-test of a density against the reference:
/// z = (density − μ)/σ, p = 2·(1 − Φ(|z|)).
pub fn z_test(density: f64, reference: &ReferenceDistribution) -> DensityTestResult {
    let z = (density - reference.mu) / reference.sigma;
    let p = stats::two_sided_p(z);
    DensityTestResult {
        density,
        z,
        p_two_sided: p,
        reject_at_0_05: p < 0.05,
    }
}
