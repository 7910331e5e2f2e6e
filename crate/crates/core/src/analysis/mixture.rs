use serde::{Deserialize, Serialize};

use crate::divergences::BlockDensity;
use crate::error::{invalid, CaviError, Result};
use crate::models::{fixed_point, MeanFieldState, ModelSpec};
use crate::scheduler::Trajectory;

/// Two-stage contraction of the mixture's label-then-location sweeps.
///
/// Epoch `t` maps `(μ^t, z^t)` to `(μ^{t+1}, z^{t+1})`. Stage one bounds the
/// label divergence by the previous location divergence, stage two bounds the
/// new location divergence by the label divergence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStageReport {
    /// `max_t κ1(t)` over epochs `t >= 1`.
    pub kappa1: f64,
    /// `max_t κ2(t)` over epochs `t >= 1`.
    pub kappa2: f64,
    /// `kappa1 * kappa2`.
    pub product: f64,
    /// Per-epoch `κ1(t)` and `κ2(t)`, all epochs.
    pub epoch_kappa1: Vec<f64>,
    pub epoch_kappa2: Vec<f64>,
    /// `D(z^{t+1}) / D(μ^t)`.
    pub stage1_ratios: Vec<f64>,
    /// `D(μ^{t+1}) / D(z^{t+1})`.
    pub stage2_ratios: Vec<f64>,
    /// `D(μ^{t+1}) / D(μ^t)`.
    pub location_ratios: Vec<f64>,
}

fn location(b: &BlockDensity) -> (f64, f64) {
    match b {
        BlockDensity::UniNormal { mean, precision } => (*mean, *precision),
        _ => unreachable!("state checked"),
    }
}

fn coupling(x: &[f64], m: f64, tau: f64, m_star: f64, tau_star: f64) -> f64 {
    let n = x.len() as f64;
    let c = 0.5 * (m + m_star);
    let sz: f64 = x.iter().map(|xi| (xi - c) * (xi - c)).sum();
    (4.0 * sz / (tau + tau_star)).max(n / (tau * tau_star))
}

fn max_bernoulli_var(p: &[f64], p_star: &[f64]) -> f64 {
    p.iter()
        .zip(p_star)
        .map(|(&a, &b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if lo <= 0.5 && 0.5 <= hi {
                0.25
            } else {
                (lo * (1.0 - lo)).max(hi * (1.0 - hi))
            }
        })
        .fold(0.0, f64::max)
}

/// Analytic two-stage constants along a recorded label-then-location run of
/// the mixture model, with the observed stage ratios next to them.
pub fn two_stage_contraction(model: &ModelSpec, traj: &Trajectory) -> Result<TwoStageReport> {
    let ModelSpec::Gmm2 { x, .. } = model else {
        return Err(invalid("model", format!("two-stage analysis is for gmm2, got {}", model.name())));
    };
    if traj.states.len() != traj.rows.len() {
        return Err(CaviError::DegenerateTrajectory("trajectory was run without recording states".into()));
    }
    if traj.states.len() < 3 {
        return Err(CaviError::DegenerateTrajectory("need at least two epochs".into()));
    }
    let qstar: MeanFieldState = fixed_point(model)?;
    let (m_star, tau_star) = location(&qstar.blocks[0]);
    let p_star = qstar.blocks[1].mean();
    let epochs = traj.states.len() - 1;
    let mut epoch_kappa1 = Vec::with_capacity(epochs);
    let mut epoch_kappa2 = Vec::with_capacity(epochs);
    let mut stage1 = Vec::new();
    let mut stage2 = Vec::new();
    let mut loc = Vec::new();
    for t in 0..epochs {
        let (m0, tau0) = location(&traj.states[t].blocks[0]);
        let (m1, tau1) = location(&traj.states[t + 1].blocks[0]);
        let p_next = traj.states[t + 1].blocks[1].mean();
        let a0 = coupling(x, m0, tau0, m_star, tau_star);
        let a1 = coupling(x, m1, tau1, m_star, tau_star);
        epoch_kappa1.push(a0 * max_bernoulli_var(&p_next, &p_star));
        epoch_kappa2.push(a1 / 4.0);
        let d_mu0 = traj.rows[t].d_half_blocks[0];
        let d_mu1 = traj.rows[t + 1].d_half_blocks[0];
        let d_z1 = traj.rows[t + 1].d_half_blocks[1];
        if d_mu0 > 0.0 {
            stage1.push(d_z1 / d_mu0);
            loc.push(d_mu1 / d_mu0);
        }
        if d_z1 > 0.0 {
            stage2.push(d_mu1 / d_z1);
        }
    }
    let kappa1 = epoch_kappa1[1..].iter().copied().fold(0.0, f64::max);
    let kappa2 = epoch_kappa2[1..].iter().copied().fold(0.0, f64::max);
    Ok(TwoStageReport {
        kappa1,
        kappa2,
        product: kappa1 * kappa2,
        epoch_kappa1,
        epoch_kappa2,
        stage1_ratios: stage1,
        stage2_ratios: stage2,
        location_ratios: loc,
    })
}
