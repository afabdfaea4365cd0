use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use veriflow::runner::{execute, Command, ExperimentConfig};

/// Multimodal claim-veracity experiments.
#[derive(Parser)]
#[command(name = "veriflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check claims and views against the data invariants.
    Validate(RunArgs),
    /// Write lexicon+speaker and TF-IDF views computed from claim text.
    FeaturizeText(RunArgs),
    /// Fit the configured model on the train split.
    Train(RunArgs),
    /// Fit on the train split and score the test split.
    Evaluate(RunArgs),
    /// Grid search with leave-one-debate-out CV on pooled MAR.
    CvTune(RunArgs),
    /// Network runs with views masked out.
    Ablate(RunArgs),
    /// Per-view LR, concatenation, probability averaging and stacking.
    Ensemble(RunArgs),
    /// Generate a synthetic multi-view dataset.
    Synth(RunArgs),
    /// Comparison table of earlier results and reference rows.
    Report(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed (and any seed list).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn usage(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("veriflow: {message}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Ok(raw) = std::env::var("VERIFLOW_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    return usage(e);
                }
            }
            _ => return usage(format!("VERIFLOW_THREADS must be a positive integer, got {raw:?}")),
        }
    }

    let (command, args) = match cli.command {
        Sub::Validate(a) => (Command::Validate, a),
        Sub::FeaturizeText(a) => (Command::FeaturizeText, a),
        Sub::Train(a) => (Command::Train, a),
        Sub::Evaluate(a) => (Command::Evaluate, a),
        Sub::CvTune(a) => (Command::CvTune, a),
        Sub::Ablate(a) => (Command::Ablate, a),
        Sub::Ensemble(a) => (Command::Ensemble, a),
        Sub::Synth(a) => (Command::Synth, a),
        Sub::Report(a) => (Command::Report, a),
    };
    let mut config = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
        config.seeds.clear();
    }
    let out = args
        .out
        .or_else(|| config.out.as_ref().map(|p| config.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("veriflow-out"));

    match execute(command, &config, &out) {
        Ok(summary) => {
            println!("{}", summary.message.trim_end());
            println!("wrote {} files to {}", summary.files.len(), summary.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("veriflow {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
