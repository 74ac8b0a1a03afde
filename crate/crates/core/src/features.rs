//! Function-character n-gram lexicon and frequency vectorization.
//!
//! Features are relative frequencies: occurrences of an n-gram divided by the
//! chunk's character count (masks included in the denominator, paragraph
//! separators excluded). N-grams are counted independently and may overlap —
//! an occurrence of a bigram also counts toward each of its constituent
//! unigrams when those are separate lexicon entries.

use crate::corpus::{self, Chunk, MASK, PARAGRAPH_SEP};
use crate::exec;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("lexicon entry '{0}' must be 1 or 2 characters, got {1}")]
    BadNgramLength(String, usize),
    #[error("lexicon entry '{0}' contains a reserved character (mask or paragraph separator)")]
    ReservedCharacter(String),
    #[error("duplicate lexicon entry '{0}'")]
    DuplicateNgram(String),
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("no lexicon entry occurs in the training chunks")]
    NoUsableFeatures,
    #[error("chunk '{0}' has zero non-separator characters")]
    ZeroLengthChunk(String),
    #[error("feature matrix row {0} has {1} values but the lexicon has {2} entries")]
    RowWidthMismatch(usize, usize, usize),
    #[error("feature matrix has {rows} rows but {labels} labels")]
    LabelCountMismatch { rows: usize, labels: usize },
    #[error("labels must be 0 or 1, got {0}")]
    BadLabel(u8),
    #[error("feature matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("standardizer fitting needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("standardizer has {0} columns but the vector has {1}")]
    WidthMismatch(usize, usize),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// An ordered set of candidate function-character n-grams (1 or 2 characters
/// each). Order is stable and defines feature-vector column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Lexicon {
    ngrams: Vec<String>,
}

impl Lexicon {
    /// Validates and wraps an ordered n-gram list.
    pub fn new(ngrams: Vec<String>) -> Result<Self, FeatureError> {
        if ngrams.is_empty() {
            return Err(FeatureError::EmptyLexicon);
        }
        let mut seen = HashSet::new();
        for g in &ngrams {
            let len = g.chars().count();
            if !(1..=2).contains(&len) {
                return Err(FeatureError::BadNgramLength(g.clone(), len));
            }
            if g.chars().any(|c| c == MASK || c == PARAGRAPH_SEP) {
                return Err(FeatureError::ReservedCharacter(g.clone()));
            }
            if !seen.insert(g.clone()) {
                return Err(FeatureError::DuplicateNgram(g.clone()));
            }
        }
        Ok(Lexicon { ngrams })
    }

    /// Parses the lexicon file format: UTF-8, one n-gram per line, `#` starts
    /// a comment line, blank lines ignored.
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let ngrams = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Lexicon::new(ngrams)
    }

    pub fn from_file(path: &Path) -> Result<Self, FeatureError> {
        let text = fs::read_to_string(path).map_err(|source| FeatureError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Lexicon::parse(&text)
    }

    pub fn ngrams(&self) -> &[String] {
        &self.ngrams
    }

    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    /// Sub-lexicon at the given column indices (ascending order expected).
    pub fn subset(&self, indices: &[usize]) -> Lexicon {
        Lexicon {
            ngrams: indices.iter().map(|&i| self.ngrams[i].clone()).collect(),
        }
    }
}

impl TryFrom<Vec<String>> for Lexicon {
    type Error = FeatureError;

    fn try_from(ngrams: Vec<String>) -> Result<Self, Self::Error> {
        Lexicon::new(ngrams)
    }
}

impl From<Lexicon> for Vec<String> {
    fn from(lex: Lexicon) -> Vec<String> {
        lex.ngrams
    }
}

/// Counts possibly-overlapping occurrences of `ngram` (1 or 2 characters) in
/// `text`. Mask characters never match, and a bigram cannot straddle a
/// paragraph separator because the separator never equals either of its
/// characters.
pub fn count_ngram(text: &str, ngram: &str) -> usize {
    let mut it = ngram.chars();
    let first = match it.next() {
        Some(c) => c,
        None => return 0,
    };
    let second = it.next();
    debug_assert!(it.next().is_none(), "n-grams are at most 2 characters");
    match second {
        None => {
            if first == MASK {
                0
            } else {
                text.chars().filter(|&c| c == first).count()
            }
        }
        Some(second) => {
            if first == MASK || second == MASK {
                return 0;
            }
            let mut count = 0;
            let mut prev = None;
            for c in text.chars() {
                if prev == Some(first) && c == second {
                    count += 1;
                }
                prev = Some(c);
            }
            count
        }
    }
}

/// Relative-frequency vector of a chunk under a lexicon: occurrences divided
/// by the chunk's non-separator character count.
pub fn vectorize(chunk: &Chunk, lex: &Lexicon) -> Result<Vec<f64>, FeatureError> {
    let denom = corpus::non_separator_len(&chunk.text);
    if denom == 0 {
        return Err(FeatureError::ZeroLengthChunk(chunk.parent_id.clone()));
    }
    Ok(lex
        .ngrams()
        .iter()
        .map(|g| count_ngram(&chunk.text, g) as f64 / denom as f64)
        .collect())
}

/// Vectorizes a batch of chunks (in parallel when enabled), preserving order.
pub fn vectorize_chunks(chunks: &[Chunk], lex: &Lexicon) -> Result<Vec<Vec<f64>>, FeatureError> {
    exec::map_slice(chunks, |c| vectorize(c, lex))
        .into_iter()
        .collect()
}

/// Drops lexicon entries that never occur in the training chunks, preserving
/// order. Errors if nothing survives.
pub fn prune_lexicon(lex: &Lexicon, train: &[Chunk]) -> Result<Lexicon, FeatureError> {
    let totals = exec::map_slice(lex.ngrams(), |g| {
        train.iter().map(|c| count_ngram(&c.text, g)).sum::<usize>()
    });
    let kept: Vec<String> = lex
        .ngrams()
        .iter()
        .zip(&totals)
        .filter(|(_, &n)| n >= 1)
        .map(|(g, _)| g.clone())
        .collect();
    if kept.is_empty() {
        return Err(FeatureError::NoUsableFeatures);
    }
    Ok(Lexicon { ngrams: kept })
}

/// Row-major matrix of relative-frequency vectors with binary class labels
/// (1 = positive class, 0 = negative class). All rows share one lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub lexicon: Lexicon,
}

impl FeatureMatrix {
    pub fn new(
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
        lexicon: Lexicon,
    ) -> Result<Self, FeatureError> {
        if rows.is_empty() || lexicon.is_empty() {
            return Err(FeatureError::EmptyMatrix);
        }
        if rows.len() != labels.len() {
            return Err(FeatureError::LabelCountMismatch {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != lexicon.len() {
                return Err(FeatureError::RowWidthMismatch(i, row.len(), lexicon.len()));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(FeatureError::BadLabel(bad));
        }
        Ok(FeatureMatrix {
            rows,
            labels,
            lexicon,
        })
    }

    /// Vectorizes labeled chunks into a matrix.
    pub fn from_chunks(
        chunks: &[Chunk],
        labels: Vec<u8>,
        lex: &Lexicon,
    ) -> Result<Self, FeatureError> {
        let rows = vectorize_chunks(chunks, lex)?;
        FeatureMatrix::new(rows, labels, lex.clone())
    }

    /// Sample count.
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// Feature count.
    pub fn n(&self) -> usize {
        self.lexicon.len()
    }

    /// Restriction to the given columns (ascending indices), with the
    /// matching sub-lexicon.
    pub fn select_columns(&self, indices: &[usize]) -> FeatureMatrix {
        let rows = self
            .rows
            .iter()
            .map(|r| indices.iter().map(|&j| r[j]).collect())
            .collect();
        FeatureMatrix {
            rows,
            labels: self.labels.clone(),
            lexicon: self.lexicon.subset(indices),
        }
    }
}

/// Per-feature affine transform to zero mean and unit variance, fitted on
/// training rows only. Columns that are constant in training are recorded
/// with `sds = 1` and flagged; they standardize to exactly 0 for any input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub constant: Vec<bool>,
    /// Which variance estimator produced `sds` ("population": divide by m).
    pub variance_convention: String,
}

impl Standardizer {
    pub fn n(&self) -> usize {
        self.means.len()
    }

    /// Standardizes one raw vector: `(v_j - mean_j) / sd_j`, with constant
    /// columns mapping to exactly 0.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if v.len() != self.n() {
            return Err(FeatureError::WidthMismatch(self.n(), v.len()));
        }
        Ok(v.iter()
            .enumerate()
            .map(|(j, &x)| {
                if self.constant[j] {
                    0.0
                } else {
                    (x - self.means[j]) / self.sds[j]
                }
            })
            .collect())
    }

    /// Standardizes a batch of rows.
    pub fn apply_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, FeatureError> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

/// Fits per-column mean and population (divide-by-m) standard deviation on
/// the training matrix. Needs at least two rows.
pub fn fit_standardizer(train: &FeatureMatrix) -> Result<Standardizer, FeatureError> {
    fit_standardizer_skip(&train.rows, None)
}

/// Standardizer fit over `rows`, optionally leaving one row out (the
/// leave-one-out refit used by cross-validation). Same arithmetic as
/// [`fit_standardizer`] in the no-skip case.
pub(crate) fn fit_standardizer_skip(
    rows: &[Vec<f64>],
    skip: Option<usize>,
) -> Result<Standardizer, FeatureError> {
    let m = rows.len() - usize::from(skip.is_some());
    if m < 2 {
        return Err(FeatureError::TooFewRows(m));
    }
    let n = rows.first().map_or(0, Vec::len);
    // Row-major passes keep memory access sequential; each column's sum still
    // accumulates in row order, i.e. the same left-to-right fold a per-column
    // scan would produce.
    let mut first = vec![0.0f64; n];
    let mut same = vec![true; n];
    let mut sums = vec![0.0f64; n];
    let mut seen_first = false;
    for (i, row) in rows.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        if seen_first {
            let row = &row[..n];
            for j in 0..n {
                same[j] &= row[j] == first[j];
            }
            for j in 0..n {
                sums[j] += row[j];
            }
        } else {
            first.copy_from_slice(row);
            sums.copy_from_slice(row);
            seen_first = true;
        }
    }
    let mut means = vec![0.0; n];
    let mut sds = vec![1.0; n];
    let mut constant = vec![false; n];
    for j in 0..n {
        if same[j] {
            // Exact-constant column: record the value as the mean so the
            // training data itself maps to 0, and flag it so any other value
            // does too.
            means[j] = first[j];
            constant[j] = true;
        } else {
            means[j] = sums[j] / m as f64;
        }
    }
    let mut varsums = vec![0.0f64; n];
    for (i, row) in rows.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let row = &row[..n];
        for j in 0..n {
            let d = row[j] - means[j];
            varsums[j] += d * d;
        }
    }
    for j in 0..n {
        if constant[j] {
            continue;
        }
        let sd = (varsums[j] / m as f64).sqrt();
        if sd == 0.0 {
            // Numerically indistinguishable from constant.
            constant[j] = true;
        } else {
            sds[j] = sd;
        }
    }
    Ok(Standardizer {
        means,
        sds,
        constant,
        variance_convention: "population".to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Chunk;

    fn chunk(text: &str) -> Chunk {
        Chunk::new("c", 0, text)
    }

    fn lex(entries: &[&str]) -> Lexicon {
        Lexicon::new(entries.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn ngrams_count_independently() {
        assert_eq!(count_ngram("于是", "于"), 1);
        assert_eq!(count_ngram("于是", "是"), 1);
        assert_eq!(count_ngram("于是", "于是"), 1);
    }

    #[test]
    fn bigrams_overlap() {
        assert_eq!(count_ngram("焉焉焉", "焉焉"), 2);
    }

    #[test]
    fn masks_never_match() {
        assert_eq!(count_ngram("之☒之", "☒"), 0);
        assert_eq!(count_ngram("之☒之", "之"), 2);
        assert_eq!(count_ngram("之☒之", "之之"), 0);
    }

    #[test]
    fn bigrams_do_not_cross_paragraphs() {
        assert_eq!(count_ngram("于\n是", "于是"), 0);
        assert_eq!(count_ngram("于是\n于是", "于是"), 2);
    }

    #[test]
    fn vectorize_counts_masks_in_denominator() {
        let v = vectorize(&chunk("之☒☒之"), &lex(&["之"])).unwrap();
        assert_eq!(v, vec![0.5]);
    }

    #[test]
    fn vectorize_no_match_is_zero() {
        let v = vectorize(&chunk("甲乙丙丁"), &lex(&["之"])).unwrap();
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn vectorize_excludes_separators_from_denominator() {
        let v = vectorize(&chunk("之乎\n者也"), &lex(&["之"])).unwrap();
        assert_eq!(v, vec![0.25]);
    }

    #[test]
    fn prune_drops_absent_entries() {
        let pruned = prune_lexicon(&lex(&["之", "岂料"]), &[chunk("之乎者也")]).unwrap();
        assert_eq!(pruned.ngrams(), ["之".to_string()]);
    }

    #[test]
    fn prune_keeps_present_entry() {
        let pruned = prune_lexicon(&lex(&["也"]), &[chunk("也也也")]).unwrap();
        assert_eq!(pruned.ngrams(), ["也".to_string()]);
    }

    #[test]
    fn prune_errors_when_nothing_survives() {
        assert!(matches!(
            prune_lexicon(&lex(&["之"]), &[chunk("甲乙")]),
            Err(FeatureError::NoUsableFeatures)
        ));
    }

    #[test]
    fn lexicon_rejects_bad_entries() {
        assert!(Lexicon::new(vec!["之乎者".into()]).is_err());
        assert!(Lexicon::new(vec!["☒".into()]).is_err());
        assert!(Lexicon::new(vec!["之".into(), "之".into()]).is_err());
        assert!(Lexicon::new(vec![]).is_err());
    }

    #[test]
    fn lexicon_parses_comments_and_blanks() {
        let lx = Lexicon::parse("# header\n之\n\n于是\n").unwrap();
        assert_eq!(lx.ngrams(), ["之".to_string(), "于是".to_string()]);
    }

    #[test]
    fn standardizer_two_point_column() {
        let x = FeatureMatrix::new(vec![vec![1.0], vec![3.0]], vec![0, 1], lex(&["之"])).unwrap();
        let std = fit_standardizer(&x).unwrap();
        assert_eq!(std.means, vec![2.0]);
        assert_eq!(std.sds, vec![1.0]);
        assert_eq!(std.apply(&[3.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn standardizer_constant_column_maps_to_zero() {
        let x = FeatureMatrix::new(
            vec![vec![5.0], vec![5.0], vec![5.0]],
            vec![0, 1, 0],
            lex(&["之"]),
        )
        .unwrap();
        let std = fit_standardizer(&x).unwrap();
        assert!(std.constant[0]);
        assert_eq!(std.sds, vec![1.0]);
        assert_eq!(std.apply(&[5.0]).unwrap(), vec![0.0]);
        assert_eq!(std.apply(&[9.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn standardizer_requires_two_rows() {
        let x = FeatureMatrix::new(vec![vec![1.0]], vec![1], lex(&["之"])).unwrap();
        assert!(matches!(
            fit_standardizer(&x),
            Err(FeatureError::TooFewRows(1))
        ));
    }
}
