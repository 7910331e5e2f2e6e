//! Contraction bounds, empirical checks and diagnostics.

mod mixture;
mod search;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::divergences::special::{lambert_w0, lambert_w0_principal};
use crate::divergences::special::logit;
use crate::error::{invalid, CaviError, Result};
use crate::linalg::{cholesky, inv_sqrt_spd, spectral_norm, sym_spectral_radius};
use crate::models::{fixed_point, mean_and_ss, MeanFieldState, ModelSpec};
use crate::scheduler::{RunOutcome, Schedule, Trajectory};

pub use mixture::{two_stage_contraction, TwoStageReport};
pub use search::{gcorr_empirical, EmpiricalGcorr, EmpiricalOptions};

/// Tolerance on `ratio <= κ` checks.
pub const RATIO_TOL: f64 = 1e-9;
/// Default neighborhood constant for the mean/precision local bound.
pub const DEFAULT_OMEGA: f64 = 0.1;

/// Contraction factor implied by a generalized correlation bound on `d`
/// blocks: `g²/4` for two blocks and `(d-1) g²/4` beyond.
pub fn kappa(gcorr: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(invalid("d", format!("need at least two blocks, got {d}")));
    }
    if !(gcorr >= 0.0) || !gcorr.is_finite() {
        return Err(invalid("gcorr", format!("must be a non-negative finite number, got {gcorr}")));
    }
    let g2 = gcorr * gcorr / 4.0;
    Ok(if d == 2 { g2 } else { (d as f64 - 1.0) * g2 })
}

/// Ratio bound to hold a trajectory to under `schedule`, if any.
pub fn schedule_kappa(kappa: f64, schedule: &Schedule) -> Option<f64> {
    match schedule {
        Schedule::Parallel => Some(kappa),
        Schedule::Sequential { .. } => Some(kappa * (1.0 + kappa)),
        Schedule::Randomized { .. } | Schedule::Lazy { .. } => None,
    }
}

fn gaussian_gcorr(model: &ModelSpec) -> Result<f64> {
    if let ModelSpec::CompoundSymmetry { d, rho } = model {
        return Ok(2.0 * rho.abs() * (*d as f64 - 1.0).sqrt());
    }
    let g = model.gaussian_parts().expect("gaussian model");
    let d = g.partition.len();
    let mut best = 0.0f64;
    for j in 0..d {
        let left = inv_sqrt_spd(&g.block_q(j, j), "q")?;
        let rest: Vec<usize> = (0..d).filter(|&k| k != j).collect();
        let cols: usize = rest.iter().map(|&k| g.partition[k]).sum();
        let mut coupling = DMatrix::zeros(g.partition[j], cols);
        let mut right = DMatrix::zeros(cols, cols);
        let mut c = 0;
        for &k in &rest {
            let pk = g.partition[k];
            coupling.view_mut((0, c), (g.partition[j], pk)).copy_from(&g.block_q(j, k));
            right
                .view_mut((c, c), (pk, pk))
                .copy_from(&inv_sqrt_spd(&g.block_q(k, k), "q")?);
            c += pk;
        }
        best = best.max(2.0 * spectral_norm(&(left * coupling * right)));
    }
    Ok(best)
}

fn probit_gcorr(model: &ModelSpec) -> Result<f64> {
    let ModelSpec::Probit { x, .. } = model else { unreachable!() };
    let precision = model.probit_precision().expect("probit");
    let chol = cholesky(&precision, "x'x + kappa I")?;
    let l = chol.l();
    let xtx = x.transpose() * x;
    // L⁻¹ X'X L⁻ᵀ shares its spectrum with Σ^{1/2} X'X Σ^{1/2}.
    let a = l.solve_lower_triangular(&xtx).ok_or_else(|| CaviError::Numerical("triangular solve".into()))?;
    let m = l
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| CaviError::Numerical("triangular solve".into()))?;
    Ok(2.0 * sym_spectral_radius(&m).sqrt())
}

/// Upper bound on the generalized correlation of the model, or `None` when the
/// model has no bound (the mixture, analysed in two stages instead).
///
/// For `GaussMeanPrec` the bound is the local one over the default
/// neighborhood, see [`gauss_mean_prec_local_bound`].
pub fn gcorr_bound(model: &ModelSpec) -> Result<Option<f64>> {
    model.validate()?;
    let g = match model {
        ModelSpec::Discrete2d { p } => logit(*p).abs(),
        ModelSpec::GaussianBlocks { .. } | ModelSpec::CompoundSymmetry { .. } => gaussian_gcorr(model)?,
        ModelSpec::GaussConditionals => 4.0 / (1.0 + 5f64.sqrt()),
        ModelSpec::Probit { .. } => probit_gcorr(model)?,
        ModelSpec::GaussMeanPrec { .. } => {
            let qstar = fixed_point(model)?;
            gauss_mean_prec_local_bound(model, &qstar, DEFAULT_OMEGA)?.gcorr_bound
        }
        ModelSpec::Gmm2 { .. } => return Ok(None),
    };
    Ok(Some(g))
}

/// Whether [`gcorr_bound`] holds on the whole variational family rather than
/// a neighborhood of the optimum.
pub fn bound_is_global(model: &ModelSpec) -> bool {
    !matches!(model, ModelSpec::GaussMeanPrec { .. } | ModelSpec::Gmm2 { .. })
}

/// Exact rate of the mean recursion for Gaussian targets.
///
/// Two-block `GaussianBlocks` reports the spectral radius of the two-step map
/// `Q11⁻¹ Q12 Q22⁻¹ Q21`, which equals `‖B‖₂²` and is the per-iteration
/// contraction of `D_½`. Compound symmetry and models with more blocks report
/// the spectral radius of the one-step parallel map `-D⁻¹ (Q - D)`.
pub fn spectral_radius_mean_dynamics(model: &ModelSpec) -> Result<f64> {
    model.validate()?;
    match model {
        ModelSpec::CompoundSymmetry { d, rho } => Ok(rho.abs() * (*d as f64 - 1.0)),
        ModelSpec::GaussianBlocks { .. } => {
            let g = model.gaussian_parts().expect("gaussian model");
            let d = g.partition.len();
            if d == 2 {
                let b = gaussian_gcorr(model)? / 2.0;
                return Ok(b * b);
            }
            let o = g.offsets();
            let m = g.q.nrows();
            let mut dinv = DMatrix::zeros(m, m);
            for j in 0..d {
                let s = inv_sqrt_spd(&g.block_q(j, j), "q")?;
                dinv.view_mut((o[j], o[j]), (g.partition[j], g.partition[j])).copy_from(&s);
            }
            let mut off = g.q.clone().into_owned();
            for j in 0..d {
                off.view_mut((o[j], o[j]), (g.partition[j], g.partition[j])).fill(0.0);
            }
            Ok(sym_spectral_radius(&(&dinv * off * &dinv)))
        }
        _ => Err(invalid("model", format!("mean dynamics are linear only for Gaussian targets, got {}", model.name()))),
    }
}

/// Neighborhood constants for the mean/precision model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalBound {
    pub omega: f64,
    pub r0: f64,
    pub s_min: f64,
    pub b_min: f64,
    pub mean_radius: f64,
    pub location_term: f64,
    pub scale_term: f64,
    pub gcorr_bound: f64,
}

/// Smallest `x` with `x - 1 - ln x <= c`.
fn lower_root(c: f64) -> Result<f64> {
    Ok(-lambert_w0_principal(-(-(1.0 + c)).exp())?)
}

/// Bound on the generalized correlation of the mean/precision model over
/// `{q : KL(q_j* || q_j) <= r0}` with `r0 = W0(ω² n) / 2`.
pub fn gauss_mean_prec_local_bound(model: &ModelSpec, qstar: &MeanFieldState, omega: f64) -> Result<LocalBound> {
    let ModelSpec::GaussMeanPrec { x, a0, .. } = model else {
        return Err(invalid("model", "local bound applies to gauss_mean_prec"));
    };
    if !(omega > 0.0 && omega < 1.0) {
        return Err(invalid("omega", format!("must lie in (0, 1), got {omega}")));
    }
    model.check_state(qstar)?;
    let n = x.len() as f64;
    let (xbar, _) = mean_and_ss(x);
    let (m_star, s_star) = match &qstar.blocks[0] {
        crate::divergences::BlockDensity::UniNormal { mean, precision } => (*mean, *precision),
        _ => unreachable!("state checked"),
    };
    let (shape, b_star) = match &qstar.blocks[1] {
        crate::divergences::BlockDensity::Gamma { shape, rate } => (*shape, *rate),
        _ => unreachable!("state checked"),
    };
    let r0 = lambert_w0(omega * omega * n)? / 2.0;
    let s_min = s_star * lower_root(2.0 * r0)?;
    let b_min = b_star * lower_root(r0 / shape)?;
    let mean_radius = (2.0 * r0 / s_min).sqrt();
    let alpha_max = (xbar - m_star).abs() + 0.5 * mean_radius;
    let scale = n * (n + 2.0 * a0) / (b_min * b_star).sqrt();
    let location_term = 2.0 * 2f64.sqrt() * alpha_max * scale / (n * s_star).sqrt();
    let scale_term = 2f64.sqrt() * n.sqrt() * (n + 2.0 * a0) / ((s_min * s_star).sqrt() * (b_min * b_star).sqrt());
    Ok(LocalBound {
        omega,
        r0,
        s_min,
        b_min,
        mean_radius,
        location_term,
        scale_term,
        gcorr_bound: location_term.max(scale_term),
    })
}

/// Correlation-based certificate for two-block targets with Fisher
/// information `I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoHat {
    pub rho_hat: f64,
    /// `2 ρ̂`, the one-sided correlation constant.
    pub gamma: f64,
    /// True when `2 ρ̂ < 1`.
    pub certified: bool,
    /// `γ / (2 - γ)` when certified.
    pub kappa_onesided: Option<f64>,
}

pub fn rho_hat_diagnostic(fisher: &DMatrix<f64>) -> Result<RhoHat> {
    if fisher.nrows() != 2 || fisher.ncols() != 2 {
        return Err(invalid("fisher", format!("expected 2x2, got {}x{}", fisher.nrows(), fisher.ncols())));
    }
    let (i11, i12, i21, i22) = (fisher[(0, 0)], fisher[(0, 1)], fisher[(1, 0)], fisher[(1, 1)]);
    if [i11, i12, i21, i22].iter().any(|v| !v.is_finite()) {
        return Err(invalid("fisher", "entries must be finite"));
    }
    if (i12 - i21).abs() > 1e-12 * i12.abs().max(1.0) {
        return Err(invalid("fisher", "matrix is not symmetric"));
    }
    if !(i11 > 0.0 && i22 > 0.0 && i11 * i22 - i12 * i12 > 0.0) {
        return Err(invalid("fisher", "matrix is not positive definite"));
    }
    let rho_hat = i12.abs() / (i11 * i22).sqrt();
    let gamma = 2.0 * rho_hat;
    let certified = gamma < 1.0;
    Ok(RhoHat {
        rho_hat,
        gamma,
        certified,
        kappa_onesided: certified.then(|| gamma / (2.0 - gamma)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    Diverged,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub model: Option<String>,
    pub schedule: Option<String>,
    pub gcorr_bound: Option<f64>,
    pub kappa: Option<f64>,
    /// Ratio bound the verdict was checked against.
    pub kappa_checked: Option<f64>,
    pub spectral_radius: Option<f64>,
    pub empirical_max_ratio: f64,
    /// Geometric mean of the last quarter of the ratios.
    pub empirical_tail_ratio: f64,
    pub iterations: usize,
    pub terminal_d_half: f64,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

fn tail_geometric_mean(ratios: &[f64]) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    let k = (ratios.len() / 4).max(1);
    let tail = &ratios[ratios.len() - k..];
    if tail.iter().any(|&r| r == 0.0) {
        return 0.0;
    }
    (tail.iter().map(|r| r.ln()).sum::<f64>() / k as f64).exp()
}

/// Summarizes a trajectory and checks its ratios against `kappa` when
/// `kappa < 1`.
pub fn verify_contraction(traj: &Trajectory, kappa: Option<f64>) -> Result<ContractionReport> {
    if traj.rows.is_empty() {
        return Err(CaviError::DegenerateTrajectory("no diagnostic rows".into()));
    }
    let ratios = traj.ratios();
    if ratios.is_empty() && traj.outcome == RunOutcome::MaxIter {
        return Err(CaviError::DegenerateTrajectory(
            "no divergence above the ratio floor, nothing to measure".into(),
        ));
    }
    let max_ratio = ratios.iter().copied().fold(0.0f64, f64::max);
    let tail = tail_geometric_mean(&ratios);
    let mut notes = Vec::new();
    if let Some(n) = &traj.note {
        notes.push(n.clone());
    }
    let verdict = match traj.outcome {
        RunOutcome::Diverged => Verdict::Diverged,
        RunOutcome::MaxIter => {
            notes.push(format!("stop tolerance {:e} not reached", traj.stop_tol));
            Verdict::Inconclusive
        }
        RunOutcome::Converged => match kappa {
            Some(k) if k < 1.0 => {
                let worst = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if ratios.iter().all(|&r| r <= k + RATIO_TOL) {
                    Verdict::Converged
                } else {
                    notes.push(format!("observed ratio {worst} exceeds kappa {k}"));
                    Verdict::Inconclusive
                }
            }
            _ => Verdict::Converged,
        },
    };
    Ok(ContractionReport {
        model: None,
        schedule: None,
        gcorr_bound: None,
        kappa: None,
        kappa_checked: kappa,
        spectral_radius: None,
        empirical_max_ratio: max_ratio,
        empirical_tail_ratio: tail,
        iterations: traj.iterations(),
        terminal_d_half: traj.terminal_d_half(),
        verdict,
        notes,
    })
}

/// Full report for a run: bounds for the model plus the verdict on `traj`.
pub fn analyze_run(model: &ModelSpec, schedule: &Schedule, traj: &Trajectory) -> Result<ContractionReport> {
    let g = gcorr_bound(model)?;
    let k = g.map(|g| kappa(g, model.num_blocks())).transpose()?;
    let checked = if bound_is_global(model) {
        k.and_then(|k| schedule_kappa(k, schedule))
    } else {
        None
    };
    let mut report = verify_contraction(traj, checked)?;
    report.model = Some(model.name().to_string());
    report.schedule = Some(schedule.name().to_string());
    report.gcorr_bound = g;
    report.kappa = k;
    report.spectral_radius = spectral_radius_mean_dynamics(model).ok();
    Ok(report)
}
