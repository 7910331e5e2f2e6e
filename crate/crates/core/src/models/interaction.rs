use nalgebra::DVector;

use super::{block_mean, mean_and_ss, scalar_normal, MeanFieldState, ModelSpec};
use crate::divergences::{kl, special::logit};
use crate::error::{CaviError, Result};

fn second_moment(b: &crate::divergences::BlockDensity) -> f64 {
    let (m, t) = scalar_normal(b);
    m * m + 1.0 / t
}

fn gaussian_cross(model: &ModelSpec, q: &MeanFieldState, qstar: &MeanFieldState, j: usize, k: usize) -> f64 {
    let g = model.gaussian_parts().expect("gaussian model");
    let dj = block_mean(&q.blocks[j]) - block_mean(&qstar.blocks[j]);
    let dk = block_mean(&q.blocks[k]) - block_mean(&qstar.blocks[k]);
    -g.n_scale * dj.dot(&(g.block_q(j, k) * dk))
}

/// Interaction term `Δ(q1, q2) = E_{(q1 - q1*) ⊗ (q2 - q2*)}[ln π]` of a
/// two-block model.
pub fn delta_n(model: &ModelSpec, q: &MeanFieldState, qstar: &MeanFieldState) -> Result<f64> {
    if model.num_blocks() != 2 {
        return Err(CaviError::NotTwoBlock("delta_n"));
    }
    model.check_state(q)?;
    model.check_state(qstar)?;
    let v = match model {
        ModelSpec::Discrete2d { p } => {
            let d1 = q.blocks[0].mean()[0] - qstar.blocks[0].mean()[0];
            let d2 = q.blocks[1].mean()[0] - qstar.blocks[1].mean()[0];
            2.0 * d1 * d2 * (-logit(*p))
        }
        ModelSpec::GaussianBlocks { .. } | ModelSpec::CompoundSymmetry { .. } => gaussian_cross(model, q, qstar, 0, 1),
        ModelSpec::GaussConditionals => {
            let e1 = second_moment(&q.blocks[0]) - second_moment(&qstar.blocks[0]);
            let e2 = second_moment(&q.blocks[1]) - second_moment(&qstar.blocks[1]);
            -0.5 * e1 * e2
        }
        ModelSpec::Probit { x, .. } => {
            let dm = block_mean(&q.blocks[0]) - block_mean(&qstar.blocks[0]);
            let dz = DVector::from_vec(q.blocks[1].mean()) - DVector::from_vec(qstar.blocks[1].mean());
            (x * dm).dot(&dz)
        }
        ModelSpec::GaussMeanPrec { x, .. } => {
            let n = x.len() as f64;
            let (xbar, _) = mean_and_ss(x);
            let (m, s) = scalar_normal(&q.blocks[0]);
            let (ms, ss) = scalar_normal(&qstar.blocks[0]);
            let spread = (m - xbar) * (m - xbar) + 1.0 / s - (ms - xbar) * (ms - xbar) - 1.0 / ss;
            let tau = q.blocks[1].mean()[0] - qstar.blocks[1].mean()[0];
            -0.5 * n * spread * tau
        }
        ModelSpec::Gmm2 { x, .. } => {
            let (m, t) = scalar_normal(&q.blocks[0]);
            let (ms, ts) = scalar_normal(&qstar.blocks[0]);
            let p = q.blocks[1].mean();
            let ps = qstar.blocks[1].mean();
            let half = 0.5 * (1.0 / ts - 1.0 / t);
            x.iter()
                .zip(p.iter().zip(&ps))
                .map(|(xi, (pi, psi))| (pi - psi) * ((xi - 0.5 * (m + ms)) * (m - ms) + half))
                .sum()
        }
    };
    Ok(v)
}

/// Interaction between block `j` and all remaining blocks of a Gaussian model,
/// with the remaining blocks treated as one product block.
pub fn delta_block_vs_rest(model: &ModelSpec, q: &MeanFieldState, qstar: &MeanFieldState, j: usize) -> Result<f64> {
    if model.gaussian_parts().is_none() {
        return Err(CaviError::InvalidParameter {
            name: "model".into(),
            reason: format!("block-versus-rest interaction needs a Gaussian model, got {}", model.name()),
        });
    }
    let d = model.num_blocks();
    if j >= d {
        return Err(CaviError::BlockIndex { index: j, blocks: d });
    }
    model.check_state(q)?;
    model.check_state(qstar)?;
    Ok((0..d).filter(|&k| k != j).map(|k| gaussian_cross(model, q, qstar, j, k)).sum())
}

/// Objective gap `F(q) - F(q*)`.
///
/// For two blocks this is `Σ KL(q_j || q_j*) - Δ`. Gaussian models with more
/// blocks subtract every pairwise interaction.
pub fn objective_gap(model: &ModelSpec, q: &MeanFieldState, qstar: &MeanFieldState) -> Result<f64> {
    model.check_state(q)?;
    model.check_state(qstar)?;
    let kls: f64 = q
        .blocks
        .iter()
        .zip(&qstar.blocks)
        .map(|(a, b)| kl(a, b))
        .sum::<Result<f64>>()?;
    let d = model.num_blocks();
    if d == 2 {
        return Ok(kls - delta_n(model, q, qstar)?);
    }
    let mut cross = 0.0;
    for j in 0..d {
        for k in (j + 1)..d {
            cross += gaussian_cross(model, q, qstar, j, k);
        }
    }
    Ok(kls - cross)
}
