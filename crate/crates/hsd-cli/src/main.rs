//! `hsd` — command-line driver for the hate-speech experiment toolkit.
//!
//! Every artifact-producing command writes a `manifest.toml` next to its
//! outputs recording the effective settings and seed. Exit codes: 0 on
//! success, 1 on module errors, 2 on usage errors.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "hsd",
    version,
    about = "Hate-speech detection experiment toolkit",
    propagate_version = true
)]
struct Cli {
    /// TOML config file with per-command sections; flags override it
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, validate, clean and split a dataset file into corpus snapshots
    Prepare(commands::PrepareArgs),
    /// Augment a training snapshot (boundary deletion or generative)
    Augment(commands::AugmentArgs),
    /// Train a backend on train/dev snapshots, saving a checkpoint
    Train(commands::TrainArgs),
    /// Predict labels for a snapshot with a saved checkpoint
    Predict(commands::PredictArgs),
    /// Score prediction files against a gold snapshot
    Evaluate(commands::EvaluateArgs),
    /// Majority-vote combination of prediction files
    Ensemble(commands::EnsembleArgs),
    /// Fine-tune on a source subtask, then continue on a target subtask
    Crosstask(commands::CrosstaskArgs),
    /// Token-attribution reports (integrated gradients or Shapley values)
    Explain(commands::ExplainArgs),
    /// Emit prediction/gold disagreements for annotation review
    Audit(commands::AuditArgs),
}

fn main() {
    let cli = Cli::parse();
    let file_config = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    };
    let outcome = match cli.command {
        Command::Prepare(args) => commands::prepare(args, &file_config),
        Command::Augment(args) => commands::augment(args, &file_config),
        Command::Train(args) => commands::train(args, &file_config),
        Command::Predict(args) => commands::predict(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Ensemble(args) => commands::ensemble(args),
        Command::Crosstask(args) => commands::crosstask(args, &file_config),
        Command::Explain(args) => commands::explain(args),
        Command::Audit(args) => commands::audit(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
