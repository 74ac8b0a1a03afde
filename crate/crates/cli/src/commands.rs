//! The six pipeline subcommands. Every command resolves its inputs from the
//! run configuration, stamps outputs with input hashes, and keeps row order
//! tied to manifest order so re-runs are byte-identical.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use sha2::{Digest, Sha256};

use xuci_core::corpus::{chunk_document, load_manifest, Chunk, Document, Split, UNKNOWN_AUTHOR};
use xuci_core::density::{
    fit_reference, stylome_density, z_test, DensityTestResult, ReferenceDistribution,
};
use xuci_core::features::{prune_lexicon, FeatureMatrix, Lexicon};
use xuci_core::model::TrainedModel;
use xuci_core::report::{annotate_text, attribution_report, render_html, RenderMetadata};
use xuci_core::selection::select_features;

use crate::config::RunConfig;
use crate::provenance::{file_sha256, Provenance};

// ---------------------------------------------------------------------------
// Shared plumbing

/// Starts a provenance block with the resolved config, then loads the corpus
/// and appends a digest of its normalized texts.
fn load_corpus(cfg: &RunConfig, prov: &mut Provenance) -> Result<Vec<Document>> {
    let manifest = cfg.manifest()?;
    prov.input("manifest", manifest)?;
    let docs = load_manifest(manifest)
        .with_context(|| format!("loading corpus manifest {}", manifest.display()))?;
    // One combined hash covers every text after masking, in manifest order,
    // so reports are traceable to document content and not just the
    // manifest file.
    let mut hasher = Sha256::new();
    for doc in &docs {
        hasher.update(doc.id.as_bytes());
        hasher.update([0]);
        hasher.update(doc.text.as_bytes());
        hasher.update([0]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    prov.note(format!("corpus sha256={hex} ({} documents, normalized)", docs.len()));
    Ok(docs)
}

fn base_provenance(cfg: &RunConfig) -> Provenance {
    let mut prov = Provenance::new();
    prov.config(&cfg.canonical_json());
    prov
}

fn docs_in_split<'a>(docs: &'a [Document], split: Split) -> Vec<&'a Document> {
    docs.iter().filter(|d| d.split == split).collect()
}

/// Resolves the binary class labels from the train split: exactly two
/// authors, positive class lexicographically first unless overridden.
fn class_labels(train_docs: &[&Document], positive: Option<&str>) -> Result<(String, String)> {
    let authors: BTreeSet<&str> = train_docs.iter().map(|d| d.author.as_str()).collect();
    if authors.len() != 2 {
        let found: Vec<&str> = authors.into_iter().collect();
        bail!(
            "expected exactly two authors in the train split, found {} ({})",
            found.len(),
            found.join(", ")
        );
    }
    let mut iter = authors.into_iter();
    let a = iter.next().expect("two authors").to_string();
    let b = iter.next().expect("two authors").to_string();
    match positive {
        None => Ok((a, b)),
        Some(p) if p == a => Ok((a, b)),
        Some(p) if p == b => Ok((b, a)),
        Some(p) => bail!("--positive-label '{p}' is not an author in the train split ({a}, {b})"),
    }
}

/// Chunks the documents and labels each chunk 1 for the positive author.
/// Errors on any author outside the two classes.
fn labeled_chunks(
    docs: &[&Document],
    target: usize,
    positive: &str,
    negative: &str,
) -> Result<(Vec<Chunk>, Vec<u8>)> {
    let mut chunks = Vec::new();
    let mut labels = Vec::new();
    for doc in docs {
        let y = if doc.author == positive {
            1
        } else if doc.author == negative {
            0
        } else {
            bail!(
                "document '{}' has author '{}', expected '{}' or '{}'",
                doc.id,
                doc.author,
                positive,
                negative
            );
        };
        for chunk in chunk_document(doc, target) {
            chunks.push(chunk);
            labels.push(y);
        }
    }
    Ok((chunks, labels))
}

/// A document treated as one chunk, the unit `attribute`, `density`, and
/// `render` score.
fn whole_doc_chunk(doc: &Document) -> Chunk {
    Chunk::new(doc.id.clone(), 0, doc.text.clone())
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating output directory {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn pretty_json_with_provenance<T: serde::Serialize>(value: &T, prov: &Provenance) -> Result<String> {
    let mut v = serde_json::to_value(value).context("serializing output")?;
    prov.attach_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).context("serializing output")?;
    s.push('\n');
    Ok(s)
}

/// How `attribute` and `density` obtain the reference distribution: a saved
/// file, explicit parameters, or a fit on the labeled train+validation
/// chunks.
#[derive(Debug, Clone, Default, Args)]
pub struct RefArgs {
    /// Reference distribution JSON (as written by `density`).
    #[arg(long, value_name = "FILE", conflicts_with_all = ["ref_mean", "ref_sd"])]
    pub reference: Option<PathBuf>,
    /// Explicit reference mean (requires --ref-sd).
    #[arg(long, requires = "ref_sd")]
    pub ref_mean: Option<f64>,
    /// Explicit reference standard deviation (requires --ref-mean).
    #[arg(long, requires = "ref_mean")]
    pub ref_sd: Option<f64>,
}

fn resolve_reference(
    args: &RefArgs,
    docs: &[Document],
    lex: &Lexicon,
    cfg: &RunConfig,
    prov: &mut Provenance,
) -> Result<ReferenceDistribution> {
    if let Some(path) = &args.reference {
        prov.input("reference", path)?;
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading reference {}", path.display()))?;
        let reference: ReferenceDistribution = serde_json::from_str(&raw)
            .with_context(|| format!("parsing reference {}", path.display()))?;
        if !(reference.sigma > 0.0) {
            bail!("reference {} has non-positive sigma", path.display());
        }
        return Ok(reference);
    }
    if let (Some(mu), Some(sigma)) = (args.ref_mean, args.ref_sd) {
        let reference = ReferenceDistribution::from_params(mu, sigma)?;
        prov.note(format!("reference mu={mu} sigma={sigma} (explicit parameters)"));
        return Ok(reference);
    }
    // Fit on every labeled chunk outside the test split.
    let mut sample_chunks = Vec::new();
    for doc in docs {
        if doc.split != Split::Test && doc.author != UNKNOWN_AUTHOR {
            sample_chunks.extend(chunk_document(doc, cfg.chunk_target));
        }
    }
    if sample_chunks.is_empty() {
        bail!("no labeled train/validation chunks to fit the reference on (pass --reference or --ref-mean/--ref-sd)");
    }
    let mut sample = Vec::with_capacity(sample_chunks.len());
    for chunk in &sample_chunks {
        sample.push(stylome_density(chunk, lex)?);
    }
    let reference = fit_reference(&sample).context("fitting the reference distribution")?;
    prov.note(format!(
        "reference fitted on {} train/validation chunks (mu={}, sigma={})",
        sample.len(),
        reference.mu,
        reference.sigma
    ));
    if reference.normality_warning() {
        eprintln!(
            "warning: reference sample fails the normality check (K2={:.3}, p={:.4}); z-test p-values may be off",
            reference.normality_k2.unwrap_or(f64::NAN),
            reference.normality_p.unwrap_or(f64::NAN)
        );
    }
    Ok(reference)
}

/// Split selector for `attribute` and `render`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

fn select_docs<'a>(
    docs: &'a [Document],
    split: Split,
    id: Option<&str>,
) -> Result<Vec<&'a Document>> {
    let in_split = docs_in_split(docs, split);
    match id {
        None => {
            if in_split.is_empty() {
                bail!("no documents in the {split} split");
            }
            Ok(in_split)
        }
        Some(id) => {
            let found: Vec<&Document> = in_split.into_iter().filter(|d| d.id == id).collect();
            if found.is_empty() {
                bail!("no document with id '{id}' in the {split} split");
            }
            Ok(found)
        }
    }
}

// ---------------------------------------------------------------------------
// ingest

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let mut prov = base_provenance(cfg);
    let docs = load_corpus(cfg, &mut prov)?;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["parent_id", "index", "author", "split", "length"])
        .expect("writing to a Vec cannot fail");
    let mut per_split = [0usize; 3];
    for doc in &docs {
        for chunk in chunk_document(doc, cfg.chunk_target) {
            wtr.write_record([
                chunk.parent_id.as_str(),
                &chunk.index.to_string(),
                &doc.author,
                &doc.split.to_string(),
                &chunk.length.to_string(),
            ])
            .expect("writing to a Vec cannot fail");
            per_split[match doc.split {
                Split::Train => 0,
                Split::Validation => 1,
                Split::Test => 2,
            }] += 1;
        }
    }
    let body = String::from_utf8(wtr.into_inner().expect("no flush failure on Vec"))
        .expect("CSV output is UTF-8");
    let out = format!("{}{}", prov.csv_header(), body);
    write_output(&cfg.output_dir.join("chunks.csv"), out.as_bytes())?;
    println!(
        "{} documents -> {} chunks (train {}, validation {}, test {})",
        docs.len(),
        per_split.iter().sum::<usize>(),
        per_split[0],
        per_split[1],
        per_split[2]
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// select

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    /// Author treated as the positive class (default: lexicographically
    /// first author in the train split).
    #[arg(long)]
    pub positive_label: Option<String>,
}

pub fn select(cfg: &RunConfig, args: &SelectArgs) -> Result<()> {
    let mut prov = base_provenance(cfg);
    let docs = load_corpus(cfg, &mut prov)?;
    let lex_path = cfg.lexicon_path()?;
    prov.input("candidate_lexicon", lex_path)?;
    let candidates = Lexicon::from_file(lex_path)
        .with_context(|| format!("loading lexicon {}", lex_path.display()))?;

    let train_docs = docs_in_split(&docs, Split::Train);
    let val_docs = docs_in_split(&docs, Split::Validation);
    if train_docs.is_empty() {
        bail!("the train split is empty");
    }
    if val_docs.is_empty() {
        bail!("the validation split is empty (feature selection scores candidates on it)");
    }
    let (positive, negative) = class_labels(&train_docs, args.positive_label.as_deref())?;
    let (train_chunks, train_labels) =
        labeled_chunks(&train_docs, cfg.chunk_target, &positive, &negative)?;
    let (val_chunks, val_labels) =
        labeled_chunks(&val_docs, cfg.chunk_target, &positive, &negative)?;

    let pruned = prune_lexicon(&candidates, &train_chunks).context("pruning the lexicon")?;
    prov.note(format!(
        "pruned candidate lexicon {} -> {} features (dropped n-grams unseen in train)",
        candidates.len(),
        pruned.len()
    ));
    prov.note(format!("positive_label={positive} negative_label={negative}"));

    let train_x = FeatureMatrix::from_chunks(&train_chunks, train_labels, &pruned)?;
    let val_x = FeatureMatrix::from_chunks(&val_chunks, val_labels, &pruned)?;
    let (selected, trace) = select_features(&train_x, &val_x, cfg.lambda, &cfg.schedule())
        .context("feature selection")?;

    let trace_out = format!("{}{}", prov.csv_header(), trace.to_csv());
    write_output(&cfg.output_dir.join("selection_trace.csv"), trace_out.as_bytes())?;

    let mut lex_out = prov.csv_header();
    for ngram in selected.ngrams() {
        lex_out.push_str(ngram);
        lex_out.push('\n');
    }
    write_output(&cfg.output_dir.join("selected_lexicon.txt"), lex_out.as_bytes())?;

    let best = trace
        .rows
        .iter()
        .find(|r| r.surviving.len() == selected.len() && r.surviving == selected.ngrams())
        .expect("the selected subset comes from a trace row");
    println!(
        "selected {} of {} features (round {}: LOOCV {:.3}, validation {:.3})",
        selected.len(),
        pruned.len(),
        best.round,
        best.loocv_acc,
        best.val_acc
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Author treated as the positive class (default: lexicographically
    /// first author in the train split).
    #[arg(long)]
    pub positive_label: Option<String>,
}

pub fn train(cfg: &RunConfig, args: &TrainArgs) -> Result<()> {
    let mut prov = base_provenance(cfg);
    let docs = load_corpus(cfg, &mut prov)?;
    let lex_path = cfg.lexicon_path()?;
    prov.input("lexicon", lex_path)?;
    let lex = Lexicon::from_file(lex_path)
        .with_context(|| format!("loading lexicon {}", lex_path.display()))?;

    let train_docs = docs_in_split(&docs, Split::Train);
    if train_docs.is_empty() {
        bail!("the train split is empty");
    }
    let (positive, negative) = class_labels(&train_docs, args.positive_label.as_deref())?;
    let (chunks, labels) = labeled_chunks(&train_docs, cfg.chunk_target, &positive, &negative)?;
    prov.note(format!("positive_label={positive} negative_label={negative}"));
    prov.note(format!("trained on {} chunks of {} features", chunks.len(), lex.len()));

    let x = FeatureMatrix::from_chunks(&chunks, labels, &lex)?;
    let mut model =
        xuci_core::model::train(&x, cfg.lambda, &positive, &negative).context("training")?;
    model.notes = Some(prov.notes());

    let mut json = model.to_json();
    json.push('\n');
    write_output(&cfg.output_dir.join("model.json"), json.as_bytes())?;

    let mut order: Vec<usize> = (0..model.weights.len()).collect();
    order.sort_by(|&a, &b| {
        model.weights[b]
            .abs()
            .partial_cmp(&model.weights[a].abs())
            .expect("finite weights")
            .then(a.cmp(&b))
    });
    let top: Vec<String> = order
        .iter()
        .take(5)
        .map(|&j| format!("{} {:+.3}", model.lexicon.ngrams()[j], model.weights[j]))
        .collect();
    println!(
        "trained '{positive}' (positive) vs '{negative}' on {} chunks; bias {:+.3}; top weights: {}",
        x.m(),
        model.bias,
        top.join(", ")
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// attribute

#[derive(Debug, Clone, Args)]
pub struct AttributeArgs {
    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Split containing the documents to score.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Score only this document id.
    #[arg(long)]
    pub id: Option<String>,
    #[command(flatten)]
    pub reference: RefArgs,
}

pub fn attribute(cfg: &RunConfig, args: &AttributeArgs) -> Result<()> {
    let mut prov = base_provenance(cfg);
    let docs = load_corpus(cfg, &mut prov)?;
    let model_hash = file_sha256(&args.model)?;
    prov.note(format!("model sha256={model_hash} {}", args.model.display()));
    let model = TrainedModel::load(&args.model)?;
    let reference = resolve_reference(&args.reference, &docs, &model.lexicon, cfg, &mut prov)?;

    let targets = select_docs(&docs, args.split.into(), args.id.as_deref())?;
    for doc in targets {
        let report = attribution_report(&model, &reference, doc, Some(model_hash.clone()))?;
        let json = pretty_json_with_provenance(&report, &prov)?;
        write_output(
            &cfg.output_dir.join("attribution").join(format!("{}.json", doc.id)),
            json.as_bytes(),
        )?;
        println!(
            "{}: P({}) = {:.3} -> {}; density {:.4}, z = {:+.2}, p = {:.4}{}",
            doc.id,
            report.positive_label,
            report.probability_positive,
            report.predicted_author,
            report.stylome_density,
            report.z,
            report.p_two_sided,
            if report.reject_at_0_05 { " (rejects reference)" } else { "" }
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// density

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub reference: RefArgs,
}

pub fn density(cfg: &RunConfig, args: &DensityArgs) -> Result<()> {
    let mut prov = base_provenance(cfg);
    let docs = load_corpus(cfg, &mut prov)?;
    let lex_path = cfg.lexicon_path()?;
    prov.input("lexicon", lex_path)?;
    let lex = Lexicon::from_file(lex_path)
        .with_context(|| format!("loading lexicon {}", lex_path.display()))?;
    let reference = resolve_reference(&args.reference, &docs, &lex, cfg, &mut prov)?;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["id", "split", "density", "z", "p_two_sided", "reject_at_0.05"])
        .expect("writing to a Vec cannot fail");
    let mut results: Vec<(&Document, DensityTestResult)> = Vec::with_capacity(docs.len());
    for doc in &docs {
        let chunk = whole_doc_chunk(doc);
        let d = stylome_density(&chunk, &lex)
            .with_context(|| format!("density of document '{}'", doc.id))?;
        let test = z_test(d, &reference);
        wtr.write_record([
            doc.id.as_str(),
            &doc.split.to_string(),
            &test.density.to_string(),
            &test.z.to_string(),
            &test.p_two_sided.to_string(),
            if test.reject_at_0_05 { "true" } else { "false" },
        ])
        .expect("writing to a Vec cannot fail");
        results.push((doc, test));
    }
    let body = String::from_utf8(wtr.into_inner().expect("no flush failure on Vec"))
        .expect("CSV output is UTF-8");
    let out = format!("{}{}", prov.csv_header(), body);
    write_output(&cfg.output_dir.join("density.csv"), out.as_bytes())?;

    let ref_json = pretty_json_with_provenance(&reference, &prov)?;
    write_output(&cfg.output_dir.join("reference.json"), ref_json.as_bytes())?;

    for (doc, test) in results {
        println!(
            "{} ({}): density {:.4}, z = {:+.2}, p = {:.4}{}",
            doc.id,
            doc.split,
            test.density,
            test.z,
            test.p_two_sided,
            if test.reject_at_0_05 { " (rejects reference)" } else { "" }
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// render

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Split containing the documents to render.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Render only this document id.
    #[arg(long)]
    pub id: Option<String>,
}

pub fn render(cfg: &RunConfig, args: &RenderArgs) -> Result<()> {
    let mut prov = base_provenance(cfg);
    let docs = load_corpus(cfg, &mut prov)?;
    let model_hash = file_sha256(&args.model)?;
    prov.note(format!("model sha256={model_hash} {}", args.model.display()));
    let model = TrainedModel::load(&args.model)?;
    let max_abs_weight = model.weights.iter().fold(0.0f64, |acc, w| acc.max(w.abs()));

    let targets = select_docs(&docs, args.split.into(), args.id.as_deref())?;
    for doc in targets {
        let p = model.predict_proba(&whole_doc_chunk(doc))?;
        let annotations = annotate_text(&doc.text, &model);
        let meta = RenderMetadata {
            doc_id: doc.id.clone(),
            title: doc.title.clone(),
            positive_label: model.positive_label.clone(),
            negative_label: model.negative_label.clone(),
            probability_positive: p,
            max_abs_weight,
            model_sha256: Some(model_hash.clone()),
            provenance: prov.lines.clone(),
        };
        let html = render_html(&annotations, &meta);
        write_output(
            &cfg.output_dir.join("render").join(format!("{}.html", doc.id)),
            html.as_bytes(),
        )?;
        println!("{}: P({}) = {:.3}", doc.id, model.positive_label, p);
    }
    Ok(())
}
