use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cavi_lab::commands::{self, Common};

#[derive(Parser)]
#[command(name = "cavi-lab", version, about = "Run and analyze CAVI contraction experiments")]
struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for data generation and randomized schedules.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one schedule to convergence and write the trajectory and report.
    Run(ConfigArgs),
    /// Analytic and empirical generalized-correlation bounds.
    Gcorr(ConfigArgs),
    /// Convergence verdicts over a grid of model parameters.
    Sweep(ConfigArgs),
    /// Compare closed forms against the quadrature and enumeration oracles.
    #[cfg(feature = "oracle-check")]
    OracleCheck {
        /// Accepted for symmetry with the other subcommands; unused.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random parameter pairs per family.
        #[arg(long, default_value_t = cavi_lab::checks::DEFAULT_PAIRS)]
        pairs: usize,
    },
}

fn common(a: ConfigArgs, quiet: bool) -> Common {
    Common {
        config: a.config,
        out: a.out,
        seed: a.seed,
        quiet,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let quiet = cli.quiet;
    let result = match cli.command {
        Command::Run(a) => commands::run(&common(a, quiet)),
        Command::Gcorr(a) => commands::gcorr(&common(a, quiet)),
        Command::Sweep(a) => commands::sweep(&common(a, quiet)),
        #[cfg(feature = "oracle-check")]
        Command::OracleCheck { out, seed, pairs, .. } => commands::oracle_check(pairs, seed, out.as_deref(), quiet),
    };
    match result {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
