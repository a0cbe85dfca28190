//! Command-line front end for the experiment harness.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 for runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anderson_core::harness::{parse_config, parse_config_for, run, ConfigErrors, ExperimentConfig, RunOptions, TaskKind};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anderson", version, about = "Multi-particle Anderson localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate pair-singularity probabilities over a scale sequence.
    Msa(RunArgs),
    /// Fit eigenfunction decay rates.
    Decay(RunArgs),
    /// Disorder-averaged Hilbert-Schmidt moments.
    Moment(RunArgs),
    /// Finite-volume eigenvalues.
    Spectrum(RunArgs),
    /// Parse and validate a configuration, then print its canonical form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.workers and ANDERSON_WORKERS; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides run.output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write plot data files.
    #[arg(long)]
    plot: bool,
}

fn load(path: &PathBuf, kind: Option<TaskKind>) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed = match kind {
        Some(k) => parse_config_for(&text, Some(k)),
        None => parse_config(&text),
    };
    parsed.map_err(|e: ConfigErrors| format!("{}:\n{e}", path.display()))
}

fn execute(kind: TaskKind, args: RunArgs) -> ExitCode {
    let mut cfg = match load(&args.config, Some(kind)) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = cfg.apply_env_overrides() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if let Some(s) = args.seed {
        cfg.run.master_seed = s;
    }
    if let Some(w) = args.workers {
        cfg.run.workers = w;
    }
    if let Some(o) = args.out {
        cfg.run.output = o;
    }
    match run(&cfg, RunOptions { plot: args.plot }) {
        Ok(manifest) => {
            for p in &manifest.outputs {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Msa(a) => execute(TaskKind::Msa, a),
        Command::Decay(a) => execute(TaskKind::Decay, a),
        Command::Moment(a) => execute(TaskKind::Moment, a),
        Command::Spectrum(a) => execute(TaskKind::Spectrum, a),
        Command::Validate { config } => match load(&config, None) {
            Ok(cfg) => {
                print!("{cfg}");
                ExitCode::SUCCESS
            }
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        },
    }
}
