use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use featsent_cli::{resolve_root, ArtifactStore, Command, ExperimentConfig, RunOptions};

/// Feature-map sentiment detector: experiment pipeline.
#[derive(Parser, Debug)]
#[command(name = "featsent", version, about)]
struct Cli {
    /// Pipeline stage: train-classifier, craft, train-detector, evaluate,
    /// generalize, diagnose, adaptive-eval, ablate, or verify.
    command: String,
    /// Experiment configuration (TOML; JSON accepted).
    #[arg(long)]
    config: PathBuf,
    /// Recompute outputs that already exist.
    #[arg(long)]
    force: bool,
    /// Override the configured global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Single-threaded execution (results are identical either way).
    #[arg(long)]
    deterministic: bool,
    /// Override the configured dataset subset size.
    #[arg(long)]
    subset: Option<usize>,
    /// Artifact store root (else FEATSENT_STORE, else ./featsent-store).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write CSV alongside binary word exports.
    #[arg(long)]
    csv: bool,
}

fn run(cli: Cli) -> featsent_cli::Result<()> {
    let command = Command::parse(&cli.command).ok_or_else(|| {
        featsent_cli::CliError::Validation(format!("unknown command `{}`", cli.command))
    })?;
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(subset) = cli.subset {
        config.dataset.subset = Some(subset);
    }
    if cli.deterministic || config.deterministic {
        // Determinism does not depend on the thread count (reductions use
        // fixed chunking), but a single worker removes all scheduling
        // variance from timing measurements.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global();
    }
    let run_name = cli
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "default".to_string());
    let root = resolve_root(cli.out.as_deref());
    let store = ArtifactStore::open(&root, &run_name, config)?;
    let opts = RunOptions {
        force: cli.force,
        csv: cli.csv,
    };
    featsent_cli::run_command(command, &store, &opts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
