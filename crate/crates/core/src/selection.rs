//! Two-phase recursive feature elimination with leave-one-out
//! cross-validation.
//!
//! Elimination repeatedly fits the regularized model and drops the features
//! with the smallest absolute standardized weight. The search restarts from
//! the full pruned lexicon at every scheduled target count (features pruned
//! at one floor may be recovered at another); a coarse phase descends in
//! 5-feature steps and a fine phase in single steps. Because each fit has a
//! unique optimum, the drop sequence from the full set is one deterministic
//! path per phase, so restarts are evaluated by walking that shared path —
//! exactly equivalent to eliminating from scratch at every floor.

use crate::exec;
use crate::features::{fit_standardizer_skip, FeatureError, FeatureMatrix, Lexicon, Standardizer};
use crate::model::{
    factor_fold_solver, newton_fit, newton_fit_fixed, sigmoid, standardize_dmat, FoldSolver,
    ModelError, NewtonFit,
};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("leave-one-out cross-validation needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("elimination target {k_target} is not below the current feature count {current}")]
    TargetNotBelow { k_target: usize, current: usize },
    #[error("elimination target must be at least 1")]
    ZeroTarget,
    #[error("elimination step must be at least 1")]
    ZeroStep,
    #[error("validation matrix lexicon does not match the training lexicon")]
    LexiconMismatch,
    #[error("invalid selection schedule: {0}")]
    BadSchedule(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Target counts visited by [`select_features`]: a coarse descent in
/// `coarse_step` decrements followed by a fine descent in single decrements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSchedule {
    pub coarse_start: usize,
    pub coarse_step: usize,
    pub coarse_floor: usize,
    pub fine_start: usize,
    pub fine_end: usize,
}

impl Default for SelectionSchedule {
    fn default() -> Self {
        SelectionSchedule {
            coarse_start: 100,
            coarse_step: 5,
            coarse_floor: 25,
            fine_start: 45,
            fine_end: 25,
        }
    }
}

impl SelectionSchedule {
    fn validate(&self) -> Result<(), SelectionError> {
        if self.coarse_step < 1 {
            return Err(SelectionError::BadSchedule(
                "coarse_step must be at least 1".into(),
            ));
        }
        if self.coarse_floor < 1 || self.fine_end < 1 {
            return Err(SelectionError::BadSchedule(
                "target floors must be at least 1".into(),
            ));
        }
        if self.coarse_start < self.coarse_floor {
            return Err(SelectionError::BadSchedule(
                "coarse_start is below coarse_floor".into(),
            ));
        }
        if self.fine_start < self.fine_end {
            return Err(SelectionError::BadSchedule(
                "fine_start is below fine_end".into(),
            ));
        }
        Ok(())
    }
}

/// One evaluated restart: the target count, both accuracies, and the
/// surviving n-grams.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub target_count: usize,
    pub loocv_acc: f64,
    pub val_acc: f64,
    pub surviving: Vec<String>,
}

/// Full record of the elimination search, exportable as CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionTrace {
    pub rows: Vec<TraceRow>,
}

impl SelectionTrace {
    /// CSV with columns `round,target_count,loocv_acc,val_acc,surviving`;
    /// surviving n-grams are joined by `|`.
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["round", "target_count", "loocv_acc", "val_acc", "surviving"])
            .expect("writing to a Vec cannot fail");
        for row in &self.rows {
            wtr.write_record([
                row.round.to_string(),
                row.target_count.to_string(),
                row.loocv_acc.to_string(),
                row.val_acc.to_string(),
                row.surviving.join("|"),
            ])
            .expect("writing to a Vec cannot fail");
        }
        String::from_utf8(wtr.into_inner().expect("no flush failure on Vec"))
            .expect("CSV output is UTF-8")
    }
}

/// A fitted model on some column subset: the standardizer plus the optimum.
#[derive(Debug, Clone)]
struct FullFit {
    std: Standardizer,
    fit: NewtonFit,
}

fn fit_full(
    x: &FeatureMatrix,
    lambda: f64,
    init: Option<(&[f64], f64)>,
) -> Result<FullFit, SelectionError> {
    let std = fit_standardizer_skip(&x.rows, None)?;
    let xs = standardize_dmat(&x.rows, None, &std)?;
    let fit = newton_fit(&xs, &x.labels, None, lambda, init)?;
    Ok(FullFit { std, fit })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Prediction correctness at threshold 0.5; a probability of exactly 0.5
/// counts as incorrect.
fn correct_at_half(p: f64, y: u8) -> bool {
    (y == 1 && p > 0.5) || (y == 0 && p < 0.5)
}

/// Leave-one-out accuracy: each sample is predicted by a model fitted on the
/// other m-1 samples (standardizer refitted on them); threshold 0.5 with
/// exact ties counted incorrect. Folds whose training remainder holds only
/// one class are scored against the remainder's majority class.
pub fn loocv_accuracy(x: &FeatureMatrix, lambda: f64) -> Result<f64, SelectionError> {
    loocv_accuracy_warm(x, lambda, None)
}

fn loocv_accuracy_warm(
    x: &FeatureMatrix,
    lambda: f64,
    warm: Option<&FullFit>,
) -> Result<f64, SelectionError> {
    let m = x.m();
    if m < 2 {
        return Err(SelectionError::TooFewSamples(m));
    }
    let both_classes = x.labels.contains(&0) && x.labels.contains(&1);
    let warm_storage;
    let warm: Option<&FullFit> = if both_classes {
        match warm {
            Some(f) => Some(f),
            None => {
                warm_storage = fit_full(x, lambda, None)?;
                Some(&warm_storage)
            }
        }
    } else {
        None
    };
    // The full-data curvature at the optimum, factored once, lets every
    // fold refit run as cheap fixed-Hessian iterations (the fold Hessians
    // are O(1/m) away); convergence is still judged by the exact per-fold
    // gradient, with automatic fallback to the exact solver.
    let solver: Option<FoldSolver> = match warm {
        Some(f) => {
            let xs_full = standardize_dmat(&x.rows, None, &f.std)?;
            factor_fold_solver(&xs_full, lambda, &f.fit.w, f.fit.w0)
        }
        None => None,
    };
    let folds = exec::map_range(m, |i| fold_correct(x, lambda, i, warm, solver.as_ref()));
    let mut correct = 0usize;
    for fold in folds {
        if fold? {
            correct += 1;
        }
    }
    Ok(correct as f64 / m as f64)
}

fn fold_correct(
    x: &FeatureMatrix,
    lambda: f64,
    i: usize,
    warm: Option<&FullFit>,
    solver: Option<&FoldSolver>,
) -> Result<bool, SelectionError> {
    let y_i = x.labels[i];
    let mut pos = 0usize;
    let mut neg = 0usize;
    for (k, &y) in x.labels.iter().enumerate() {
        if k != i {
            if y == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
    }
    if pos == 0 || neg == 0 {
        // Degenerate remainder: score against its majority class.
        let majority = u8::from(pos >= neg);
        return Ok(y_i == majority);
    }
    let std = fit_standardizer_skip(&x.rows, Some(i))?;
    let xs = standardize_dmat(&x.rows, Some(i), &std)?;
    let fold_factor = match (warm, solver) {
        (Some(f), Some(s)) => s.for_fold(i, &f.std, &std),
        _ => None,
    };
    let (w, w0) = match (warm, fold_factor) {
        (Some(f), Some(factor)) => {
            let (wi, w0i) = factor.warm_start(&f.fit.w, f.fit.w0);
            newton_fit_fixed(&xs, &x.labels, Some(i), lambda, (&wi, w0i), &factor)?
        }
        _ => {
            let init = warm.map(|f| (f.fit.w.as_slice(), f.fit.w0));
            let fit = newton_fit(&xs, &x.labels, Some(i), lambda, init)?;
            (fit.w, fit.w0)
        }
    };
    let xi = std.apply(&x.rows[i])?;
    let p = sigmoid(dot(&xi, &w) + w0);
    Ok(correct_at_half(p, y_i))
}

/// Sorts the active positions by elimination priority: ascending |weight|,
/// ties dropping the later lexicon-order feature first, and returns the
/// survivors (as lexicon column indices) after removing `drop_n`.
fn drop_smallest(active: &[usize], weights: &[f64], drop_n: usize) -> (Vec<usize>, Vec<usize>) {
    debug_assert_eq!(active.len(), weights.len());
    let mut order: Vec<usize> = (0..active.len()).collect();
    order.sort_by(|&a, &b| {
        weights[a]
            .abs()
            .total_cmp(&weights[b].abs())
            .then(active[b].cmp(&active[a]))
    });
    let dropped: HashSet<usize> = order[..drop_n].iter().copied().collect();
    let mut survivors = Vec::with_capacity(active.len() - drop_n);
    let mut kept_positions = Vec::with_capacity(active.len() - drop_n);
    for (pos, &col) in active.iter().enumerate() {
        if !dropped.contains(&pos) {
            survivors.push(col);
            kept_positions.push(pos);
        }
    }
    (survivors, kept_positions)
}

/// The deterministic elimination path from the full feature set for one
/// step size. Backbone nodes are the sets reached by repeated full-`step`
/// drops; a target between nodes is reached by one final partial drop, which
/// is exactly what eliminating from scratch to that target would do.
struct EliminationPath<'a> {
    x: &'a FeatureMatrix,
    lambda: f64,
    step: usize,
    nodes: Vec<(Vec<usize>, FullFit)>,
}

impl<'a> EliminationPath<'a> {
    fn new(
        x: &'a FeatureMatrix,
        lambda: f64,
        step: usize,
        root: FullFit,
    ) -> EliminationPath<'a> {
        let active: Vec<usize> = (0..x.n()).collect();
        EliminationPath {
            x,
            lambda,
            step,
            nodes: vec![(active, root)],
        }
    }

    fn survivors_at(&mut self, target: usize) -> Result<Vec<usize>, SelectionError> {
        let n = self.x.n();
        debug_assert!(target >= 1 && target < n);
        let depth = (n - target) / self.step;
        while self.nodes.len() <= depth {
            let (active, full) = self.nodes.last().expect("path has a root");
            let (survivors, kept) = drop_smallest(active, &full.fit.w, self.step);
            let init_w: Vec<f64> = kept.iter().map(|&p| full.fit.w[p]).collect();
            let init_w0 = full.fit.w0;
            let sub = self.x.select_columns(&survivors);
            let next = fit_full(&sub, self.lambda, Some((&init_w, init_w0)))?;
            self.nodes.push((survivors, next));
        }
        let (active, full) = &self.nodes[depth];
        if active.len() == target {
            return Ok(active.clone());
        }
        let (survivors, _) = drop_smallest(active, &full.fit.w, active.len() - target);
        Ok(survivors)
    }
}

/// One elimination restart: from the full set of `x`, repeatedly fit and
/// drop the `step` (or fewer, on the final drop) features of smallest
/// absolute weight until exactly `k_target` remain. Returns the surviving
/// column indices in lexicon order.
pub fn rfe_round(
    x: &FeatureMatrix,
    lambda: f64,
    k_target: usize,
    step: usize,
) -> Result<Vec<usize>, SelectionError> {
    if k_target < 1 {
        return Err(SelectionError::ZeroTarget);
    }
    if step < 1 {
        return Err(SelectionError::ZeroStep);
    }
    if k_target >= x.n() {
        return Err(SelectionError::TargetNotBelow {
            k_target,
            current: x.n(),
        });
    }
    let root = fit_full(x, lambda, None)?;
    EliminationPath::new(x, lambda, step, root).survivors_at(k_target)
}

/// Runs the two-phase elimination search and returns the subset with the
/// best validation accuracy (ties broken toward fewer features, then toward
/// earlier discovery), along with the full trace.
///
/// Every restart begins from the full lexicon of `train`. Scheduled targets
/// at or above the current feature count cannot eliminate anything and are
/// skipped; the full set itself is always evaluated as the first round, so a
/// lexicon smaller than every scheduled floor still yields one candidate.
pub fn select_features(
    train: &FeatureMatrix,
    val: &FeatureMatrix,
    lambda: f64,
    schedule: &SelectionSchedule,
) -> Result<(Lexicon, SelectionTrace), SelectionError> {
    if train.lexicon != val.lexicon {
        return Err(SelectionError::LexiconMismatch);
    }
    schedule.validate()?;
    let n = train.n();

    let full_active: Vec<usize> = (0..n).collect();
    let root = fit_full(train, lambda, None)?;
    let mut coarse = EliminationPath::new(train, lambda, schedule.coarse_step, root.clone());
    let mut fine = EliminationPath::new(train, lambda, 1, root.clone());

    let mut trace = SelectionTrace::default();
    let mut best: Option<(f64, usize, usize)> = None; // (val_acc, count, round)
    let mut best_survivors: Vec<usize> = Vec::new();

    let run_round = |survivors: Vec<usize>,
                         precomputed: Option<&FullFit>,
                         trace: &mut SelectionTrace,
                         best: &mut Option<(f64, usize, usize)>,
                         best_survivors: &mut Vec<usize>|
     -> Result<(), SelectionError> {
        let round = trace.rows.len() + 1;
        let x_sub = train.select_columns(&survivors);
        let full_storage;
        let full = match precomputed {
            Some(f) => f,
            None => {
                full_storage = fit_full(&x_sub, lambda, None)?;
                &full_storage
            }
        };
        let loocv_acc = loocv_accuracy_warm(&x_sub, lambda, Some(full))?;
        let mut correct = 0usize;
        for (row, &y) in val.rows.iter().zip(&val.labels) {
            let sub: Vec<f64> = survivors.iter().map(|&j| row[j]).collect();
            let xs = full.std.apply(&sub)?;
            let p = sigmoid(dot(&xs, &full.fit.w) + full.fit.w0);
            if correct_at_half(p, y) {
                correct += 1;
            }
        }
        let val_acc = correct as f64 / val.m() as f64;
        let count = survivors.len();
        let better = match best {
            None => true,
            Some((bv, bc, _)) => val_acc > *bv || (val_acc == *bv && count < *bc),
        };
        if better {
            *best = Some((val_acc, count, round));
            *best_survivors = survivors.clone();
        }
        trace.rows.push(TraceRow {
            round,
            target_count: count,
            loocv_acc,
            val_acc,
            surviving: survivors
                .iter()
                .map(|&j| train.lexicon.ngrams()[j].clone())
                .collect(),
        });
        Ok(())
    };

    // Round 1: the full pruned lexicon as the baseline candidate.
    run_round(
        full_active,
        Some(&root),
        &mut trace,
        &mut best,
        &mut best_survivors,
    )?;

    // Coarse phase: restarts at coarse_start, coarse_start - step, ...
    let mut target = schedule.coarse_start;
    loop {
        if target < n {
            let survivors = coarse.survivors_at(target)?;
            run_round(survivors, None, &mut trace, &mut best, &mut best_survivors)?;
        }
        if target < schedule.coarse_floor + schedule.coarse_step {
            break;
        }
        target -= schedule.coarse_step;
    }

    // Fine phase: single-step restarts over [fine_end, fine_start].
    for target in (schedule.fine_end..=schedule.fine_start).rev() {
        if target < n {
            let survivors = fine.survivors_at(target)?;
            run_round(survivors, None, &mut trace, &mut best, &mut best_survivors)?;
        }
    }

    let lexicon = train.lexicon.subset(&best_survivors);
    Ok((lexicon, trace))
}
