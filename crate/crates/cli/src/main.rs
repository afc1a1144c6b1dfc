use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wmanchor_cli::{
    cmd_baseline, cmd_eval, cmd_export_viz, cmd_interpret, cmd_train, Overrides, RunConfig,
};

/// Interpretable document embeddings with learned Wasserstein class anchors.
#[derive(Parser)]
#[command(name = "wmanchor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the transform and anchors; writes a checkpoint and loss history.
    Train,
    /// Classify the test split by nearest anchor; writes predictions.
    Eval,
    /// Word importance tables, per-class top words and a 2-D projection.
    Interpret,
    /// WMD k-NN sweep and TF-IDF top words.
    Baseline,
    /// Only the 2-D projection of top words and anchors.
    ExportViz,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    match cli.command {
        Command::Train => cmd_train(&cfg).map(drop),
        Command::Eval => cmd_eval(&cfg).map(drop),
        Command::Interpret => cmd_interpret(&cfg).map(drop),
        Command::Baseline => cmd_baseline(&cfg).map(drop),
        Command::ExportViz => cmd_export_viz(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
