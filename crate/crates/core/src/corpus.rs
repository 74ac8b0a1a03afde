//! Corpus ingestion: documents, mask application, and paragraph-aware chunking.
//!
//! Text is treated as a sequence of Unicode scalar values. Paragraph
//! boundaries are newline characters (`\n`); source files carry one paragraph
//! per line. Quoted passages and lacunae are replaced one-for-one by the
//! [`MASK`] character so that character counts stay exact while foreign style
//! is excluded from matching.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Placeholder substituted one-for-one for quoted or illegible characters.
pub const MASK: char = '☒';

/// Author label reserved for documents of unknown attribution.
pub const UNKNOWN_AUTHOR: &str = "UNKNOWN";

/// Paragraph separator used in document text and chunk text.
pub const PARAGRAPH_SEP: char = '\n';

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("mask span ({0}, {1}) is out of bounds for text of {2} characters")]
    SpanOutOfBounds(usize, usize, usize),
    #[error("mask span ({0}, {1}) is inverted")]
    SpanInverted(usize, usize),
    #[error("mask spans ({0}, {1}) and ({2}, {3}) overlap")]
    SpanOverlap(usize, usize, usize, usize),
    #[error("document '{0}' has empty text")]
    EmptyText(String),
    #[error("document '{0}' is in split '{1}' but has no concrete author label")]
    UnlabeledDocument(String, String),
    #[error("cannot merge zero documents")]
    MergeEmpty,
    #[error("cannot merge documents with mixed author labels ('{0}' vs '{1}')")]
    MergeMixedAuthors(String, String),
    #[error("cannot merge documents from different splits ({0} vs {1})")]
    MergeMixedSplits(Split, Split),
    #[error("duplicate document id '{0}' in manifest")]
    DuplicateId(String),
    #[error("document '{id}' contains the mask character {MASK} natively at position {position}; masks must come from mask_spans")]
    NativeMask { id: String, position: usize },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    MalformedManifest {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Which part of the workflow a document belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Validation => write!(f, "validation"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// A labeled, mask-normalized text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    /// Author label; [`UNKNOWN_AUTHOR`] is only permitted in the test split.
    pub author: String,
    pub split: Split,
    pub title: String,
    /// One paragraph per line, joined by `\n`.
    pub text: String,
    pub pub_date: Option<String>,
}

impl Document {
    /// Builds a document, enforcing the labeling and non-emptiness rules.
    pub fn new(
        id: impl Into<String>,
        author: impl Into<String>,
        split: Split,
        title: impl Into<String>,
        text: impl Into<String>,
        pub_date: Option<String>,
    ) -> Result<Self, CorpusError> {
        let doc = Document {
            id: id.into(),
            author: author.into(),
            split,
            title: title.into(),
            text: text.into(),
            pub_date,
        };
        doc.validate()?;
        Ok(doc)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.text.is_empty() {
            return Err(CorpusError::EmptyText(self.id.clone()));
        }
        if self.split != Split::Test && self.author == UNKNOWN_AUTHOR {
            return Err(CorpusError::UnlabeledDocument(
                self.id.clone(),
                self.split.to_string(),
            ));
        }
        Ok(())
    }
}

/// A contiguous run of whole paragraphs: the unit of vectorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub parent_id: String,
    pub index: usize,
    /// Paragraphs joined by `\n`, exactly as they appear in the parent.
    pub text: String,
    /// Character count excluding paragraph separators; masks included.
    pub length: usize,
}

impl Chunk {
    /// Builds a chunk, deriving `length` from `text`.
    pub fn new(parent_id: impl Into<String>, index: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        let length = non_separator_len(&text);
        Chunk {
            parent_id: parent_id.into(),
            index,
            text,
            length,
        }
    }
}

/// Number of Unicode scalar values in `text` that are not paragraph
/// separators. Masks count; this is the frequency denominator.
pub fn non_separator_len(text: &str) -> usize {
    text.chars().filter(|&c| c != PARAGRAPH_SEP).count()
}

/// Replaces every character inside the given half-open `[start, end)`
/// character ranges with [`MASK`]. Character count is preserved.
pub fn apply_masks(text: &str, spans: &[(usize, usize)]) -> Result<String, CorpusError> {
    let mut chars: Vec<char> = text.chars().collect();
    let mut sorted: Vec<(usize, usize)> = spans.to_vec();
    sorted.sort_unstable();
    for (i, &(start, end)) in sorted.iter().enumerate() {
        if start > end {
            return Err(CorpusError::SpanInverted(start, end));
        }
        if end > chars.len() {
            return Err(CorpusError::SpanOutOfBounds(start, end, chars.len()));
        }
        if i > 0 {
            let (ps, pe) = sorted[i - 1];
            if start < pe {
                return Err(CorpusError::SpanOverlap(ps, pe, start, end));
            }
        }
    }
    for &(start, end) in &sorted {
        for c in &mut chars[start..end] {
            *c = MASK;
        }
    }
    Ok(chars.into_iter().collect())
}

/// Packs whole paragraphs greedily into chunks of roughly `target`
/// characters (separator characters are not counted).
///
/// Paragraphs are appended to the current chunk until appending the next one
/// would push the non-separator count past `target`; a single paragraph
/// longer than `target` becomes its own chunk. Every character of the
/// document appears in exactly one chunk, and joining the chunk texts with a
/// paragraph separator reconstructs the document text.
pub fn chunk_document(doc: &Document, target: usize) -> Vec<Chunk> {
    let mut chunks: Vec<Chunk> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut current_len = 0usize;

    let flush = |current: &mut Vec<&str>, current_len: &mut usize, chunks: &mut Vec<Chunk>| {
        if !current.is_empty() {
            let text = current.join("\n");
            chunks.push(Chunk::new(doc.id.clone(), chunks.len(), text));
            current.clear();
            *current_len = 0;
        }
    };

    for para in doc.text.split(PARAGRAPH_SEP) {
        let para_len = para.chars().count();
        if !current.is_empty() && current_len + para_len > target {
            flush(&mut current, &mut current_len, &mut chunks);
        }
        current.push(para);
        current_len += para_len;
    }
    flush(&mut current, &mut current_len, &mut chunks);
    chunks
}

/// Concatenates same-author, same-split documents into one, joining texts
/// with a single paragraph separator. Metadata (id, title) is joined; the
/// first document's publication date is kept.
pub fn merge_documents(docs: &[Document]) -> Result<Document, CorpusError> {
    let first = docs.first().ok_or(CorpusError::MergeEmpty)?;
    for doc in &docs[1..] {
        if doc.author != first.author {
            return Err(CorpusError::MergeMixedAuthors(
                first.author.clone(),
                doc.author.clone(),
            ));
        }
        if doc.split != first.split {
            return Err(CorpusError::MergeMixedSplits(first.split, doc.split));
        }
    }
    if docs.len() == 1 {
        return Ok(first.clone());
    }
    let ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    let titles: Vec<&str> = docs.iter().map(|d| d.title.as_str()).collect();
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    Document::new(
        ids.join("+"),
        first.author.clone(),
        first.split,
        titles.join(" + "),
        texts.join("\n"),
        first.pub_date.clone(),
    )
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    author: String,
    split: Split,
    title: String,
    #[serde(default)]
    pub_date: Option<String>,
    path: PathBuf,
    #[serde(default)]
    mask_spans: Vec<(usize, usize)>,
    /// Documents sharing a merge group (within one author and split) are
    /// concatenated into a single unit before chunking.
    #[serde(default)]
    merge_group: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    documents: Vec<ManifestEntry>,
}

/// Loads a corpus manifest: a JSON file listing documents with their text
/// file paths (relative to the manifest) and mask spans.
///
/// Text files are UTF-8 with one paragraph per line. Input texts must not
/// contain the mask character natively; masks are applied here from each
/// entry's `mask_spans` (half-open character ranges over the file text with
/// trailing newlines stripped). Entries sharing a `merge_group` are merged in
/// manifest order. Returned documents keep manifest order, with a merged
/// group appearing at its first member's position.
pub fn load_manifest(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest: Manifest =
        serde_json::from_str(&raw).map_err(|source| CorpusError::MalformedManifest {
            path: path.to_path_buf(),
            source,
        })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));

    let mut seen_ids = std::collections::HashSet::new();
    let mut docs: Vec<(Option<(String, String, Split)>, Document)> = Vec::new();
    for entry in &manifest.documents {
        if !seen_ids.insert(entry.id.clone()) {
            return Err(CorpusError::DuplicateId(entry.id.clone()));
        }
        let file = base.join(&entry.path);
        let raw_text = fs::read_to_string(&file).map_err(|source| CorpusError::Io {
            path: file.clone(),
            source,
        })?;
        let text = normalize_text(&raw_text);
        if let Some(position) = text.chars().position(|c| c == MASK) {
            return Err(CorpusError::NativeMask {
                id: entry.id.clone(),
                position,
            });
        }
        let masked = apply_masks(&text, &entry.mask_spans)?;
        let doc = Document::new(
            entry.id.clone(),
            entry.author.clone(),
            entry.split,
            entry.title.clone(),
            masked,
            entry.pub_date.clone(),
        )?;
        let group = entry
            .merge_group
            .as_ref()
            .map(|g| (entry.author.clone(), g.clone(), entry.split));
        docs.push((group, doc));
    }

    // Merge grouped entries, keeping each group at its first position.
    let mut out: Vec<Document> = Vec::new();
    let mut groups: BTreeMap<(String, String, Split), usize> = BTreeMap::new();
    let mut pending: Vec<Vec<Document>> = Vec::new();
    for (group, doc) in docs {
        match group {
            None => out.push(doc),
            Some(key) => match groups.get(&key) {
                Some(&slot) => pending[slot].push(doc),
                None => {
                    groups.insert(key, pending.len());
                    out.push(doc.clone());
                    pending.push(vec![doc]);
                }
            },
        }
    }
    for members in pending {
        if members.len() > 1 {
            let merged = merge_documents(&members)?;
            let pos = out.iter().position(|d| d.id == members[0].id).unwrap();
            out[pos] = merged;
            out.retain(|d| !members[1..].iter().any(|m| m.id == d.id));
        }
    }
    Ok(out)
}

/// Strips trailing newlines and normalizes CRLF line endings.
fn normalize_text(raw: &str) -> String {
    raw.replace("\r\n", "\n").trim_end_matches('\n').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document::new("d", "A", Split::Train, "t", text, None).unwrap()
    }

    #[test]
    fn apply_masks_identity_without_spans() {
        assert_eq!(apply_masks("abcd", &[]).unwrap(), "abcd");
    }

    #[test]
    fn apply_masks_substitutes_and_preserves_length() {
        let masked = apply_masks("今瞻禹域", &[(0, 2)]).unwrap();
        assert_eq!(masked, "☒☒禹域");
        assert_eq!(masked.chars().count(), 4);
    }

    #[test]
    fn apply_masks_quoted_run() {
        let text = "曰：「四字引文」也";
        let masked = apply_masks(text, &[(3, 7)]).unwrap();
        assert_eq!(masked, "曰：「☒☒☒☒」也");
        assert_eq!(masked.chars().count(), text.chars().count());
    }

    #[test]
    fn apply_masks_is_idempotent() {
        let spans = [(1, 3), (5, 6)];
        let once = apply_masks("甲乙丙丁戊己庚", &spans).unwrap();
        let twice = apply_masks(&once, &spans).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn apply_masks_rejects_bad_spans() {
        assert!(matches!(
            apply_masks("abc", &[(1, 9)]),
            Err(CorpusError::SpanOutOfBounds(1, 9, 3))
        ));
        assert!(matches!(
            apply_masks("abc", &[(2, 1)]),
            Err(CorpusError::SpanInverted(2, 1))
        ));
        assert!(matches!(
            apply_masks("abcdef", &[(0, 3), (2, 4)]),
            Err(CorpusError::SpanOverlap(0, 3, 2, 4))
        ));
    }

    #[test]
    fn chunking_single_short_paragraph() {
        let d = doc(&"之".repeat(300));
        let chunks = chunk_document(&d, 800);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].length, 300);
    }

    #[test]
    fn chunking_packs_greedily() {
        let para = "之".repeat(300);
        let d = doc(&vec![para; 5].join("\n"));
        let lens: Vec<usize> = chunk_document(&d, 800).iter().map(|c| c.length).collect();
        assert_eq!(lens, vec![600, 600, 300]);
    }

    #[test]
    fn chunking_never_splits_a_paragraph() {
        let d = doc(&"之".repeat(1700));
        let chunks = chunk_document(&d, 800);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].length, 1700);
    }

    #[test]
    fn chunking_reconstructs_document() {
        let d = doc("甲甲甲\n乙\n丙丙\n丁丁丁丁");
        let chunks = chunk_document(&d, 4);
        let joined = chunks
            .iter()
            .map(|c| c.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(joined, d.text);
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.index, i);
            assert_eq!(c.length, non_separator_len(&c.text));
        }
    }

    #[test]
    fn merge_singleton_is_identity() {
        let d = doc("甲乙");
        assert_eq!(merge_documents(&[d.clone()]).unwrap(), d);
    }

    #[test]
    fn merge_joins_with_separator() {
        let a = Document::new("a", "Z", Split::Validation, "A", "甲乙", None).unwrap();
        let b = Document::new("b", "Z", Split::Validation, "B", "丙", None).unwrap();
        let merged = merge_documents(&[a, b]).unwrap();
        assert_eq!(merged.text, "甲乙\n丙");
        assert_eq!(non_separator_len(&merged.text), 3);
        assert_eq!(merged.id, "a+b");
    }

    #[test]
    fn merge_rejects_mixed_authors() {
        let a = Document::new("a", "X", Split::Train, "A", "甲", None).unwrap();
        let b = Document::new("b", "Y", Split::Train, "B", "乙", None).unwrap();
        assert!(matches!(
            merge_documents(&[a, b]),
            Err(CorpusError::MergeMixedAuthors(_, _))
        ));
    }

    #[test]
    fn document_rejects_unknown_author_outside_test() {
        assert!(Document::new("d", UNKNOWN_AUTHOR, Split::Train, "t", "甲", None).is_err());
        assert!(Document::new("d", UNKNOWN_AUTHOR, Split::Test, "t", "甲", None).is_ok());
    }
}
