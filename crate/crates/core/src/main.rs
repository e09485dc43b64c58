use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dubins_intercept::harness::{self, Mode};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Train,
    Eval,
    Sweep,
    Baseline,
}

/// Train, evaluate and compare pursuit policies for the unit-speed car.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint to load (eval, sweep).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match harness::load_config(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    cfg.mode = match cli.command {
        Command::Train => Mode::Train,
        Command::Eval => Mode::Eval,
        Command::Sweep => Mode::Sweep,
        Command::Baseline => Mode::Baseline,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if cli.checkpoint.is_some() {
        cfg.checkpoint = cli.checkpoint;
    }
    match harness::run(&cfg, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
