use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cavi_core::analysis::Verdict;
use cavi_core::harness::{
    run_experiment, run_gcorr, run_sweep, thread_cap, write_json, write_sweep_csv, write_trajectory_csv,
    ExperimentConfig,
};
use cavi_core::Execution;

/// Process exit status of a subcommand that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The run diverged, stalled, or a check failed.
    Flagged,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Flagged => 2,
        }
    }
}

/// Options shared by the config-driven subcommands.
#[derive(Clone, Debug, Default)]
pub struct Common {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(&common.config)
        .with_context(|| format!("reading config {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn say(quiet: bool, line: impl AsRef<str>) {
    if !quiet {
        println!("{}", line.as_ref());
    }
}

fn execution() -> Execution {
    Execution::default()
}

pub fn run(common: &Common) -> Result<Status> {
    let cfg = load(common)?;
    let art = run_experiment(&cfg)?;
    let dir = cfg.output_dir(common.out.as_deref());
    prepare_dir(&dir)?;
    let traj_path = dir.join(&cfg.output.trajectory);
    let report_path = dir.join(&cfg.output.report);
    write_trajectory_csv(&traj_path, &art.trajectory)?;
    write_json(&report_path, &art.report)?;
    let c = &art.report.contraction;
    say(
        common.quiet,
        format!(
            "{} / {}: {:?} after {} iterations, D_half {:.3e}, tail ratio {:.6}",
            art.model.name(),
            cfg.schedule.name(),
            c.verdict,
            c.iterations,
            c.terminal_d_half,
            c.empirical_tail_ratio
        ),
    );
    say(common.quiet, format!("wrote {} and {}", traj_path.display(), report_path.display()));
    Ok(match c.verdict {
        Verdict::Converged => Status::Ok,
        _ => Status::Flagged,
    })
}

pub fn gcorr(common: &Common) -> Result<Status> {
    let cfg = load(common)?;
    let report = run_gcorr(&cfg, execution())?;
    let dir = cfg.output_dir(common.out.as_deref());
    prepare_dir(&dir)?;
    let path = dir.join(&cfg.output.gcorr);
    write_json(&path, &report)?;
    if !common.quiet {
        let mut out = std::io::stdout().lock();
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
    }
    Ok(Status::Ok)
}

pub fn sweep(common: &Common) -> Result<Status> {
    let cfg = load(common)?;
    let points = run_sweep(&cfg, execution(), thread_cap())?;
    let names: Vec<String> = cfg
        .sweep
        .as_ref()
        .map(|s| s.params.iter().map(|p| p.name.clone()).collect())
        .unwrap_or_default();
    let dir = cfg.output_dir(common.out.as_deref());
    prepare_dir(&dir)?;
    let path = dir.join(&cfg.output.sweep);
    write_sweep_csv(&path, &names, &points)?;
    let converged = points.iter().filter(|p| p.verdict == Verdict::Converged).count();
    say(
        common.quiet,
        format!("{} grid points, {converged} converged; wrote {}", points.len(), path.display()),
    );
    Ok(Status::Ok)
}

#[cfg(feature = "oracle-check")]
pub fn oracle_check(pairs: usize, seed: u64, out: Option<&Path>, quiet: bool) -> Result<Status> {
    use crate::checks::{divergence_suite, inequality_suite};

    let mut results = divergence_suite(pairs, seed);
    results.extend(inequality_suite(seed));
    for r in &results {
        let tag = if r.passed() { "PASS" } else { "FAIL" };
        say(
            quiet,
            format!("{tag} {:<36} cases {:>5}  failures {:>3}  worst {:.3e}", r.name, r.cases, r.failures, r.worst),
        );
        if let (false, Some(msg)) = (quiet, &r.first_failure) {
            println!("     first failure: {msg}");
        }
    }
    if let Some(dir) = out {
        prepare_dir(dir)?;
        write_json(&dir.join("oracle_check.json"), &results)?;
    }
    Ok(if results.iter().all(|r| r.passed()) {
        Status::Ok
    } else {
        Status::Flagged
    })
}
