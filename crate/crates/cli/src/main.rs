//! `xuci` — authorship attribution from function-character n-grams.
//!
//! Six subcommands cover the pipeline: `ingest` (chunk inventory), `select`
//! (recursive feature elimination), `train` (L2 logistic model), `attribute`
//! (per-document verdicts), `density` (stylome-density z-tests), and
//! `render` (per-character HTML evidence). Outputs are deterministic:
//! re-running a command on identical inputs reproduces identical bytes.

mod commands;
mod config;
mod provenance;

use clap::{Parser, Subcommand};

use config::ConfigOverrides;

#[derive(Parser)]
#[command(name = "xuci", version, about = "Function-character n-gram authorship attribution")]
struct Cli {
    #[command(flatten)]
    overrides: ConfigOverrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus manifest and write the chunk inventory.
    Ingest,
    /// Eliminate candidate features recursively; write the trace and the
    /// selected lexicon.
    Select(commands::SelectArgs),
    /// Train the logistic model on the train split; write model.json.
    Train(commands::TrainArgs),
    /// Score documents against a trained model; write per-document reports.
    Attribute(commands::AttributeArgs),
    /// Stylome-density z-tests for every manifest document (no model
    /// needed); write density.csv and reference.json.
    Density(commands::DensityArgs),
    /// Render per-character HTML evidence pages for documents.
    Render(commands::RenderArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = config::RunConfig::resolve(&cli.overrides).and_then(|cfg| match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Select(args) => commands::select(&cfg, &args),
        Command::Train(args) => commands::train(&cfg, &args),
        Command::Attribute(args) => commands::attribute(&cfg, &args),
        Command::Density(args) => commands::density(&cfg, &args),
        Command::Render(args) => commands::render(&cfg, &args),
    });
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
