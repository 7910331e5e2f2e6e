use std::path::Path;

use serde::{Deserialize, Serialize};

use super::output::{csv_from_records, format_float, write_text};
use super::{config_error, initial_state, ExperimentConfig};
use crate::analysis::{analyze_run, Verdict};
use crate::error::{CaviError, Result};
use crate::exec::Execution;
use crate::models::{fixed_point, ModelSpec};
use crate::scheduler::{run, RunOptions};

fn default_max_points() -> usize {
    10_000
}

/// One swept model parameter: explicit `values`, or `count` evenly spaced
/// points from `start` to `stop` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParam {
    pub name: String,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
}

impl SweepParam {
    pub fn linspace(name: &str, start: f64, stop: f64, count: usize) -> Self {
        Self {
            name: name.to_string(),
            values: None,
            start: Some(start),
            stop: Some(stop),
            count: Some(count),
        }
    }

    fn count(&self) -> Result<usize> {
        match (&self.values, self.count) {
            (Some(v), None) => Ok(v.len()),
            (None, Some(c)) => Ok(c),
            _ => Err(config_error(
                &format!("sweep.params.{}", self.name),
                "give either `values` or `start`/`stop`/`count`",
            )),
        }
    }

    fn values(&self) -> Result<Vec<f64>> {
        if let Some(v) = &self.values {
            return Ok(v.clone());
        }
        let field = format!("sweep.params.{}", self.name);
        let (Some(a), Some(b), Some(c)) = (self.start, self.stop, self.count) else {
            return Err(config_error(&field, "`start`, `stop` and `count` are all required"));
        };
        if c == 0 {
            return Err(config_error(&field, "`count` must be positive"));
        }
        if c == 1 {
            return Ok(vec![a]);
        }
        Ok((0..c).map(|i| a + (b - a) * i as f64 / (c - 1) as f64).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub params: Vec<SweepParam>,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub values: Vec<f64>,
    pub verdict: Verdict,
    pub tail_ratio: Option<f64>,
    pub kappa: Option<f64>,
    pub iterations: usize,
}

/// Cartesian grid of a sweep, checked against the point cap before any
/// values are materialized.
pub fn grid_points(sweep: &SweepConfig) -> Result<Vec<Vec<f64>>> {
    if sweep.params.is_empty() || sweep.params.len() > 2 {
        return Err(config_error(
            "sweep.params",
            format!("one or two parameters are supported, got {}", sweep.params.len()),
        ));
    }
    let mut total: usize = 1;
    for p in &sweep.params {
        total = total.saturating_mul(p.count()?);
    }
    if total > sweep.max_points {
        return Err(CaviError::GridTooLarge {
            points: total,
            cap: sweep.max_points,
        });
    }
    let axes = sweep.params.iter().map(SweepParam::values).collect::<Result<Vec<_>>>()?;
    let mut grid = vec![Vec::new()];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    Ok(grid)
}

fn sweep_point(base: &ModelSpec, cfg: &ExperimentConfig, names: &[String], values: &[f64]) -> Result<SweepPoint> {
    let mut model = base.clone();
    for (n, v) in names.iter().zip(values) {
        model = model.with_param(n, *v)?;
    }
    let qstar = fixed_point(&model)?;
    let init = initial_state(&model, &qstar, &cfg.init)?;
    let opts = RunOptions {
        record_states: false,
        objective_gap: false,
        ..cfg.run_options()
    };
    let traj = run(&model, &cfg.schedule, &init, &qstar, &opts)?;
    let (verdict, tail, kappa) = match analyze_run(&model, &cfg.schedule, &traj) {
        Ok(r) => (r.verdict, (!traj.ratios().is_empty()).then_some(r.empirical_tail_ratio), r.kappa),
        Err(CaviError::DegenerateTrajectory(_)) => (Verdict::Inconclusive, None, None),
        Err(e) => return Err(e),
    };
    Ok(SweepPoint {
        values: values.to_vec(),
        verdict,
        tail_ratio: tail,
        kappa,
        iterations: traj.iterations(),
    })
}

/// Runs the configured sweep, one independent run per grid point.
///
/// Points are distributed over at most `threads` workers when parallel; the
/// output order is the grid order regardless.
pub fn run_sweep(cfg: &ExperimentConfig, exec: Execution, threads: Option<usize>) -> Result<Vec<SweepPoint>> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| config_error("sweep", "the sweep section is missing"))?;
    let grid = grid_points(sweep)?;
    let base = cfg.resolve_model()?;
    cfg.schedule.validate(&base)?;
    let names: Vec<String> = sweep.params.iter().map(|p| p.name.clone()).collect();
    exec.with_threads(threads, || exec.map(&grid, |values| sweep_point(&base, cfg, &names, values)))
        .into_iter()
        .collect()
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Converged => "converged",
        Verdict::Diverged => "diverged",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn sweep_csv_string(names: &[String], points: &[SweepPoint]) -> Result<String> {
    let mut header: Vec<String> = names.to_vec();
    header.extend(["verdict", "tail_ratio", "kappa"].map(String::from));
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let mut r: Vec<String> = p.values.iter().map(|&v| format_float(v)).collect();
            r.push(verdict_name(p.verdict).into());
            r.push(p.tail_ratio.map(format_float).unwrap_or_default());
            r.push(p.kappa.map(format_float).unwrap_or_default());
            r
        })
        .collect();
    csv_from_records(&header, &rows)
}

pub fn write_sweep_csv(path: &Path, names: &[String], points: &[SweepPoint]) -> Result<()> {
    write_text(path, &sweep_csv_string(names, points)?)
}
