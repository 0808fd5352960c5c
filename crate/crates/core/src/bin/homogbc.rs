//! Command-line front end: one subcommand per experiment driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use homogbc::config::{ExperimentConfig, ExperimentKind};
use homogbc::experiments::run;

#[derive(Parser)]
#[command(name = "homogbc", version, about = "Boundary-layer limits and effective boundary data")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and the manifest; defaults to the
    /// configuration's `output` entry, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve one strip problem, or climb the height ladder to its limit.
    CellSolve,
    /// Boundary-layer constant as a function of the shift.
    PhiStar,
    /// Directional limits from the second cell problem.
    SecondCell,
    /// Homogenized tensor or effective map, with an optional ε-study.
    Homogenize,
    /// Effective boundary data over a list of directions.
    Sweep,
    /// Direction-dependent limits for the built-in non-variational law.
    DiscontinuityDemo,
    /// Exponential decay rate of the slice oscillation.
    DecayFit,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::CellSolve => ExperimentKind::CellSolve,
            Command::PhiStar => ExperimentKind::PhiStar,
            Command::SecondCell => ExperimentKind::SecondCell,
            Command::Homogenize => ExperimentKind::Homogenize,
            Command::Sweep => ExperimentKind::Sweep,
            Command::DiscontinuityDemo => ExperimentKind::DiscontinuityDemo,
            Command::DecayFit => ExperimentKind::DecayFit,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = cli.command.kind();
    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        },
        None => {
            eprintln!("error: --config is required");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cfg.experiment != kind {
        eprintln!("note: configuration names experiment {}, running {}", cfg.experiment.name(), kind.name());
    }
    let out = cli.out.clone().or_else(|| cfg.output.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let threads = if cli.threads == 0 { rayon::current_num_threads() } else { cli.threads };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cfg, kind, &out, threads) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("reports written to {}", out.display());
            if outcome.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("warning: the height ladder ended before the limit settled");
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
