//! Run configuration: the pipeline parameters, loadable from a JSON file
//! and overridable per flag. The resolved values are echoed into every
//! output for provenance.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use xuci_core::selection::SelectionSchedule;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Corpus manifest path; required by every command that reads texts.
    pub corpus_manifest: Option<PathBuf>,
    /// Lexicon path (candidates for `select`, features for `train`,
    /// `density`).
    pub lexicon: Option<PathBuf>,
    /// Directory all artifacts are written under.
    pub output_dir: PathBuf,
    /// L2 regularization strength.
    pub lambda: f64,
    /// Target chunk size in non-separator characters.
    pub chunk_target: usize,
    /// Coarse-phase elimination restarts: coarse_start, coarse_start -
    /// coarse_step, ... down to coarse_floor.
    pub coarse_start: usize,
    pub coarse_step: usize,
    pub coarse_floor: usize,
    /// Fine-phase restarts at every count in [fine_end, fine_start].
    pub fine_start: usize,
    pub fine_end: usize,
    /// Significance level echoed into reports. The density CSV's
    /// `reject_at_0.05` column is defined at 0.05 regardless, matching its
    /// header.
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_manifest: None,
            lexicon: None,
            output_dir: PathBuf::from("out"),
            lambda: 1.0,
            chunk_target: 800,
            coarse_start: 100,
            coarse_step: 5,
            coarse_floor: 25,
            fine_start: 45,
            fine_end: 25,
            alpha: 0.05,
        }
    }
}

/// Flags shared by every subcommand, applied on top of a config file (or
/// the defaults).
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ConfigOverrides {
    /// JSON config file; the flags below override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Corpus manifest (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Lexicon file, one n-gram per line.
    #[arg(long, global = true, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Directory to write artifacts under.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// L2 regularization strength.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Target chunk size (non-separator characters).
    #[arg(long, global = true)]
    pub chunk_target: Option<usize>,
    /// Coarse elimination start count.
    #[arg(long, global = true)]
    pub coarse_start: Option<usize>,
    /// Coarse elimination step.
    #[arg(long, global = true)]
    pub coarse_step: Option<usize>,
    /// Coarse elimination floor.
    #[arg(long, global = true)]
    pub coarse_floor: Option<usize>,
    /// Fine elimination start count.
    #[arg(long, global = true)]
    pub fine_start: Option<usize>,
    /// Fine elimination end count.
    #[arg(long, global = true)]
    pub fine_end: Option<usize>,
    /// Significance level echoed into reports.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn resolve(overrides: &ConfigOverrides) -> Result<Self> {
        let mut cfg = match &overrides.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &overrides.manifest {
            cfg.corpus_manifest = Some(v.clone());
        }
        if let Some(v) = &overrides.lexicon {
            cfg.lexicon = Some(v.clone());
        }
        if let Some(v) = &overrides.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = overrides.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = overrides.chunk_target {
            cfg.chunk_target = v;
        }
        if let Some(v) = overrides.coarse_start {
            cfg.coarse_start = v;
        }
        if let Some(v) = overrides.coarse_step {
            cfg.coarse_step = v;
        }
        if let Some(v) = overrides.coarse_floor {
            cfg.coarse_floor = v;
        }
        if let Some(v) = overrides.fine_start {
            cfg.fine_start = v;
        }
        if let Some(v) = overrides.fine_end {
            cfg.fine_end = v;
        }
        if let Some(v) = overrides.alpha {
            cfg.alpha = v;
        }
        Ok(cfg)
    }

    pub fn manifest(&self) -> Result<&Path> {
        match &self.corpus_manifest {
            Some(p) => Ok(p),
            None => bail!("no corpus manifest given (pass --manifest or set corpus_manifest in the config)"),
        }
    }

    pub fn lexicon_path(&self) -> Result<&Path> {
        match &self.lexicon {
            Some(p) => Ok(p),
            None => bail!("no lexicon given (pass --lexicon or set lexicon in the config)"),
        }
    }

    pub fn schedule(&self) -> SelectionSchedule {
        SelectionSchedule {
            coarse_start: self.coarse_start,
            coarse_step: self.coarse_step,
            coarse_floor: self.coarse_floor,
            fine_start: self.fine_start,
            fine_end: self.fine_end,
        }
    }

    /// Canonical one-line JSON form: the exact bytes hashed for provenance
    /// and echoed into outputs.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
