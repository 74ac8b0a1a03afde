//! Interpretable authorship attribution for classical Chinese prose.
//!
//! The pipeline characterizes authors by the relative frequencies of
//! function-character n-grams (single characters and two-character
//! compounds), trains an L2-regularized logistic classifier on standardized
//! frequencies, selects discriminative features by two-phase recursive
//! elimination under leave-one-out cross-validation, tests questioned
//! documents for collaboration or editorial intervention via a stylome
//! density z-test, and renders per-character evidence as self-contained
//! HTML.
//!
//! Modules follow the pipeline order:
//!
//! 1. [`corpus`] — documents, masking of lacunae, paragraph-aligned
//!    chunking, manifest loading.
//! 2. [`features`] — n-gram lexicons, counting, frequency vectors, pruning,
//!    standardization.
//! 3. [`model`] — the regularized logistic classifier and its
//!    deterministic trainer.
//! 4. [`selection`] — recursive feature elimination with LOOCV scoring.
//! 5. [`density`] — stylome density, the normal reference fit, and the
//!    two-sided z-test.
//! 6. [`report`] — per-character annotation, HTML rendering, attribution
//!    reports.
//!
//! Everything is deterministic: training uses a fixed-order Newton solver,
//! no randomness enters the pipeline, and identical inputs produce
//! byte-identical outputs. With the default `parallel` feature, data-level
//! loops fan out via rayon; per-item arithmetic is unchanged, so results
//! are bit-identical to the sequential build (`--no-default-features`).

pub mod corpus;
pub mod density;
mod exec;
pub mod features;
pub mod model;
pub mod report;
pub mod selection;
pub mod stats;
