//! JSON-configured experiments and their on-disk outputs.

mod output;
mod sweep;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    analyze_run, gauss_mean_prec_local_bound, gcorr_bound, gcorr_empirical, kappa, two_stage_contraction,
    spectral_radius_mean_dynamics, ContractionReport, EmpiricalGcorr, EmpiricalOptions, TwoStageReport, DEFAULT_OMEGA,
};
use crate::divergences::BlockDensity;
use crate::error::{CaviError, Result};
use crate::exec::Execution;
use crate::models::{fixed_point, generate_data, perturbed_init, DataSpec, MeanFieldState, ModelSpec};
use crate::scheduler::{run, RunOptions, Schedule, Trajectory};

pub use output::{format_float, trajectory_csv_string, write_json, write_trajectory_csv};
pub use sweep::{grid_points, run_sweep, sweep_csv_string, write_sweep_csv, SweepConfig, SweepParam, SweepPoint};

/// Environment variable capping the number of sweep worker threads.
pub const THREADS_ENV: &str = "CAVI_LAB_THREADS";

fn default_schedule() -> Schedule {
    Schedule::Parallel
}

fn default_max_iter() -> usize {
    10_000
}

fn default_stop_tol() -> f64 {
    1e-12
}

fn default_perturbation() -> f64 {
    5.0
}

fn default_budget() -> usize {
    20_000
}

fn default_alpha_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

/// Simulated data source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    #[serde(flatten)]
    pub data: DataSpec,
    /// Data seed; falls back to the experiment seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Initial state: explicit blocks, or `q*` shifted by `perturbation`
/// posterior standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default)]
    pub blocks: Option<Vec<BlockDensity>>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            perturbation: default_perturbation(),
            blocks: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "OutputConfig::trajectory_name")]
    pub trajectory: String,
    #[serde(default = "OutputConfig::report_name")]
    pub report: String,
    #[serde(default = "OutputConfig::sweep_name")]
    pub sweep: String,
    #[serde(default = "OutputConfig::gcorr_name")]
    pub gcorr: String,
}

impl OutputConfig {
    fn trajectory_name() -> String {
        "trajectory.csv".into()
    }
    fn report_name() -> String {
        "report.json".into()
    }
    fn sweep_name() -> String {
        "sweep.csv".into()
    }
    fn gcorr_name() -> String {
        "gcorr.json".into()
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory: Self::trajectory_name(),
            report: Self::report_name(),
            sweep: Self::sweep_name(),
            gcorr: Self::gcorr_name(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcorrConfig {
    /// Neighborhood radius. Defaults to the whole family, except for
    /// `gauss_mean_prec` where the local-bound radius is used.
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
}

impl Default for GcorrConfig {
    fn default() -> Self {
        Self {
            r0: None,
            budget: default_budget(),
            alpha_grid: default_alpha_grid(),
            omega: None,
        }
    }
}

/// Experiment description. Exactly one of `model`, `model_file` and
/// `generate` must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub generate: Option<GenerateConfig>,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    /// Experiment seed; required when data is generated without its own seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub gcorr: GcorrConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

pub(crate) fn config_error(field: &str, reason: impl Into<String>) -> CaviError {
    CaviError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| config_error("config", e.to_string()))
    }

    /// Reads a config file. Relative `model_file` and output paths are
    /// resolved against the config's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CaviError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_json_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(f) = &cfg.model_file {
            if f.is_relative() {
                cfg.model_file = Some(base.join(f));
            }
        }
        if let Some(d) = &cfg.output.dir {
            if d.is_relative() {
                cfg.output.dir = Some(base.join(d));
            }
        }
        Ok(cfg)
    }

    pub fn resolve_model(&self) -> Result<ModelSpec> {
        let given = [self.model.is_some(), self.model_file.is_some(), self.generate.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if given != 1 {
            return Err(config_error(
                "model",
                format!("exactly one of `model`, `model_file`, `generate` is required, found {given}"),
            ));
        }
        let model = if let Some(m) = &self.model {
            m.clone()
        } else if let Some(path) = &self.model_file {
            let text = std::fs::read_to_string(path).map_err(|source| CaviError::Io {
                path: path.display().to_string(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| config_error("model_file", e.to_string()))?
        } else {
            let g = self.generate.as_ref().expect("counted above");
            let seed = g
                .seed
                .or(self.seed)
                .ok_or_else(|| config_error("seed", "generated data needs `seed` or `generate.seed`"))?;
            generate_data(&g.data, seed)?
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stop_tol >= 0.0) {
            return Err(config_error("stop_tol", format!("must be non-negative, got {}", self.stop_tol)));
        }
        if !self.init.perturbation.is_finite() {
            return Err(config_error("init.perturbation", "must be finite"));
        }
        Ok(())
    }

    pub fn output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        override_dir
            .map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            max_iter: self.max_iter,
            stop_tol: self.stop_tol,
            ..RunOptions::default()
        }
    }

    /// Replaces every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if let Some(g) = &mut self.generate {
            g.seed = Some(seed);
        }
        if let Schedule::Randomized { seed: s } = &mut self.schedule {
            *s = seed;
        }
    }
}

/// Initial state described by `init` for `model` with optimum `qstar`.
pub fn initial_state(model: &ModelSpec, qstar: &MeanFieldState, init: &InitConfig) -> Result<MeanFieldState> {
    match &init.blocks {
        Some(blocks) => {
            let s = MeanFieldState::new(blocks.clone());
            model.check_state(&s)?;
            Ok(s)
        }
        None => perturbed_init(model, qstar, init.perturbation),
    }
}

/// Everything produced by a single run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub contraction: ContractionReport,
    pub stop_tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    pub final_state: MeanFieldState,
    pub optimum: MeanFieldState,
    #[serde(default)]
    pub two_stage: Option<TwoStageReport>,
}

pub struct RunArtifacts {
    pub model: ModelSpec,
    pub qstar: MeanFieldState,
    pub trajectory: Trajectory,
    pub report: RunReport,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let model = cfg.resolve_model()?;
    cfg.schedule.validate(&model)?;
    let qstar = fixed_point(&model)?;
    let init = initial_state(&model, &qstar, &cfg.init)?;
    let trajectory = run(&model, &cfg.schedule, &init, &qstar, &cfg.run_options())?;
    let contraction = analyze_run(&model, &cfg.schedule, &trajectory)?;
    let two_stage = match (&model, &cfg.schedule) {
        (ModelSpec::Gmm2 { .. }, Schedule::Sequential { order }) if order.as_deref().is_none_or(|o| o == [1, 0]) => {
            two_stage_contraction(&model, &trajectory).ok()
        }
        _ => None,
    };
    let report = RunReport {
        contraction,
        stop_tol: cfg.stop_tol,
        max_iter: cfg.max_iter,
        seed: cfg.seed,
        final_state: trajectory.final_state().clone(),
        optimum: qstar.clone(),
        two_stage,
    };
    Ok(RunArtifacts {
        model,
        qstar,
        trajectory,
        report,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GcorrReport {
    pub model: String,
    pub r0: f64,
    pub gcorr_bound: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_radius: Option<f64>,
    pub empirical: EmpiricalGcorr,
}

pub fn run_gcorr(cfg: &ExperimentConfig, exec: Execution) -> Result<GcorrReport> {
    let model = cfg.resolve_model()?;
    let qstar = fixed_point(&model)?;
    let omega = cfg.gcorr.omega.unwrap_or(DEFAULT_OMEGA);
    let (r0, bound) = match (&model, cfg.gcorr.r0) {
        (ModelSpec::GaussMeanPrec { .. }, r0) => {
            let local = gauss_mean_prec_local_bound(&model, &qstar, omega)?;
            (r0.unwrap_or(local.r0), Some(local.gcorr_bound))
        }
        (_, r0) => (r0.unwrap_or(f64::INFINITY), gcorr_bound(&model)?),
    };
    let opts = EmpiricalOptions {
        r0,
        budget: cfg.gcorr.budget,
        alpha_grid: cfg.gcorr.alpha_grid.clone(),
        seed: cfg.seed.unwrap_or(0),
    };
    let empirical = gcorr_empirical(&model, &qstar, &opts, exec)?;
    let kappa = bound.map(|g| kappa(g, model.num_blocks())).transpose()?;
    Ok(GcorrReport {
        model: model.name().to_string(),
        r0,
        gcorr_bound: bound,
        kappa,
        spectral_radius: spectral_radius_mean_dynamics(&model).ok(),
        empirical,
    })
}

/// Thread cap from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0)
}
