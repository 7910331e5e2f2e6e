use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergences::special::{logit, sigmoid};
use crate::divergences::{kl, kl_weighted, BlockDensity};
use crate::error::{invalid, CaviError, Result};
use crate::exec::Execution;
use crate::linalg::cholesky;
use crate::models::{delta_block_vs_rest, delta_n, MeanFieldState, ModelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOptions {
    /// Radius of the neighborhood `{q : KL(q_j* || q_j) <= r0}`; infinite for
    /// the whole family.
    pub r0: f64,
    /// Number of candidate states evaluated in total.
    pub budget: usize,
    pub alpha_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for EmpiricalOptions {
    fn default() -> Self {
        Self {
            r0: f64::INFINITY,
            budget: 20_000,
            alpha_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    /// Largest `|Δ| / sqrt(D_α(q1) D_{1-α}(q2))` found.
    pub gcorr_alpha: f64,
    /// Same with `α` and `1 - α` swapped.
    pub gcorr_complement: f64,
    pub block: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalGcorr {
    /// `min_α max(GCorr_α, GCorr_{1-α})`, maximized over blocks for models
    /// with more than two blocks.
    pub value: f64,
    pub per_alpha: Vec<AlphaResult>,
    pub worst_block: Option<usize>,
    pub evaluations: usize,
}

struct Problem<'a> {
    model: &'a ModelSpec,
    qstar: &'a MeanFieldState,
    scales: Vec<f64>,
    focus: Option<usize>,
}

fn scalar(b: &BlockDensity) -> (f64, f64) {
    match b {
        BlockDensity::UniNormal { mean, precision } => (*mean, *precision),
        BlockDensity::Gamma { shape, rate } => (*shape, *rate),
        BlockDensity::TwoPoint { prob } => (*prob, 0.0),
        _ => (f64::NAN, f64::NAN),
    }
}

fn mean_scales(b: &BlockDensity) -> Result<Vec<f64>> {
    Ok(match b {
        BlockDensity::UniNormal { precision, .. } => vec![1.0 / precision.sqrt()],
        BlockDensity::MvNormal { precision, .. } => {
            let cov = cholesky(precision, "precision")?.inverse();
            (0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect()
        }
        _ => vec![1.0; b.dim()],
    })
}

fn shift_normal(b: &BlockDensity, theta: &[f64]) -> Result<BlockDensity> {
    match b {
        BlockDensity::UniNormal { mean, precision } => BlockDensity::uni_normal(mean + theta[0], *precision),
        BlockDensity::MvNormal { mean, precision } => {
            let shifted = mean + nalgebra::DVector::from_column_slice(theta);
            BlockDensity::mv_normal(shifted, precision.clone())
        }
        other => Err(invalid("state", format!("expected a normal block, got {}", other.family_name()))),
    }
}

impl<'a> Problem<'a> {
    fn new(model: &'a ModelSpec, qstar: &'a MeanFieldState, focus: Option<usize>) -> Result<Self> {
        let q = &qstar.blocks;
        let scales = match model {
            ModelSpec::Discrete2d { .. } | ModelSpec::GaussConditionals => vec![1.0, 1.0],
            ModelSpec::GaussianBlocks { .. } | ModelSpec::CompoundSymmetry { .. } => {
                let mut s = Vec::new();
                for b in q {
                    s.extend(mean_scales(b)?);
                }
                s
            }
            ModelSpec::Probit { .. } => {
                let mut s = mean_scales(&q[0])?;
                s.extend(vec![1.0; q[1].dim()]);
                s
            }
            ModelSpec::GaussMeanPrec { .. } => {
                let (_, s) = scalar(&q[0]);
                let (a, _) = scalar(&q[1]);
                vec![1.0 / s.sqrt(), 1.0, 1.0 / a.sqrt()]
            }
            ModelSpec::Gmm2 { .. } => {
                let (_, t) = scalar(&q[0]);
                let mut s = vec![1.0 / t.sqrt(), 1.0];
                s.extend(vec![1.0; q[1].dim()]);
                s
            }
        };
        Ok(Self { model, qstar, scales, focus })
    }

    fn state(&self, theta: &[f64]) -> Result<MeanFieldState> {
        let q = &self.qstar.blocks;
        let blocks = match self.model {
            ModelSpec::Discrete2d { .. } => q
                .iter()
                .zip(theta)
                .map(|(b, t)| BlockDensity::two_point(sigmoid(logit(scalar(b).0) + t)))
                .collect::<Result<Vec<_>>>()?,
            ModelSpec::GaussConditionals => q
                .iter()
                .zip(theta)
                .map(|(b, t)| {
                    let (m, tau) = scalar(b);
                    BlockDensity::uni_normal(m, 1.0 + (tau - 1.0) * t.exp())
                })
                .collect::<Result<Vec<_>>>()?,
            ModelSpec::GaussianBlocks { .. } | ModelSpec::CompoundSymmetry { .. } => {
                let mut out = Vec::with_capacity(q.len());
                let mut at = 0;
                for b in q {
                    let d = b.dim();
                    out.push(shift_normal(b, &theta[at..at + d])?);
                    at += d;
                }
                out
            }
            ModelSpec::Probit { .. } => {
                let p = q[0].dim();
                let beta = shift_normal(&q[0], &theta[..p])?;
                let BlockDensity::ProductTruncNormal { locations, sides } = &q[1] else {
                    unreachable!("state checked")
                };
                let z = BlockDensity::product_trunc_normal(
                    locations.iter().zip(&theta[p..]).map(|(a, t)| a + t).collect(),
                    sides.clone(),
                )?;
                vec![beta, z]
            }
            ModelSpec::GaussMeanPrec { .. } => {
                let (m, s) = scalar(&q[0]);
                let (a, b) = scalar(&q[1]);
                vec![
                    BlockDensity::uni_normal(m + theta[0], s * theta[1].exp())?,
                    BlockDensity::gamma(a, b * theta[2].exp())?,
                ]
            }
            ModelSpec::Gmm2 { .. } => {
                let (m, t) = scalar(&q[0]);
                let BlockDensity::ProductTwoPoint { probs } = &q[1] else { unreachable!("state checked") };
                vec![
                    BlockDensity::uni_normal(m + theta[0], t * theta[1].exp())?,
                    BlockDensity::product_two_point(
                        probs.iter().zip(&theta[2..]).map(|(p, l)| sigmoid(logit(*p) + l)).collect(),
                    )?,
                ]
            }
        };
        Ok(MeanFieldState::new(blocks))
    }

    /// Indices of the first block and of the blocks forming the second one.
    fn groups(&self) -> (usize, Vec<usize>) {
        match self.focus {
            Some(j) => (j, (0..self.qstar.len()).filter(|&k| k != j).collect()),
            None => (0, vec![1]),
        }
    }

    fn inside(&self, q: &MeanFieldState, r0: f64) -> Result<bool> {
        if r0.is_infinite() {
            return Ok(true);
        }
        let (first, rest) = self.groups();
        let k1 = kl(&self.qstar.blocks[first], &q.blocks[first])?;
        let k2: f64 = rest
            .iter()
            .map(|&k| kl(&self.qstar.blocks[k], &q.blocks[k]))
            .sum::<Result<f64>>()?;
        Ok(k1 <= r0 && k2 <= r0)
    }

    fn d_alpha(&self, q: &MeanFieldState, idx: &[usize], alpha: f64) -> Result<f64> {
        idx.iter()
            .map(|&k| kl_weighted(&q.blocks[k], &self.qstar.blocks[k], alpha))
            .sum()
    }

    /// `(GCorr_α, GCorr_{1-α})` ratios at `q`, or `None` when undefined.
    fn ratios(&self, q: &MeanFieldState, alpha: f64) -> Result<Option<(f64, f64)>> {
        let delta = match self.focus {
            Some(j) => delta_block_vs_rest(self.model, q, self.qstar, j)?,
            None => delta_n(self.model, q, self.qstar)?,
        };
        let (first, rest) = self.groups();
        let a1 = self.d_alpha(q, &[first], alpha)?;
        let a2 = self.d_alpha(q, &rest, 1.0 - alpha)?;
        let b1 = self.d_alpha(q, &[first], 1.0 - alpha)?;
        let b2 = self.d_alpha(q, &rest, alpha)?;
        let floor = 1e-300;
        if !(a1 > floor && a2 > floor && b1 > floor && b2 > floor) {
            return Ok(None);
        }
        let f = delta.abs() / (a1 * a2).sqrt();
        let g = delta.abs() / (b1 * b2).sqrt();
        Ok((f.is_finite() && g.is_finite()).then_some((f, g)))
    }
}

struct ShardResult {
    alpha: f64,
    focus: Option<usize>,
    best_f: f64,
    best_g: f64,
    evaluations: usize,
    valid: usize,
}

fn run_shard(problem: &Problem, alpha: f64, r0: f64, budget: usize, seed: u64) -> Result<ShardResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_f = 0.0f64;
    let mut best_g = 0.0f64;
    let mut best_theta: Option<Vec<f64>> = None;
    let mut best_obj = f64::NEG_INFINITY;
    let mut evaluations = 0;
    let mut valid = 0;
    let mut sigma = 0.3;
    let explore = budget.div_ceil(2);

    while evaluations < budget {
        let hill = evaluations >= explore && best_theta.is_some();
        let mut theta: Vec<f64> = if hill {
            let base = best_theta.as_ref().expect("checked");
            base.iter()
                .zip(&problem.scales)
                .map(|(b, s)| b + sigma * s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        } else {
            let r = 10f64.powf(rng.random_range(-3.0..1.0));
            problem
                .scales
                .iter()
                .map(|s| r * s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        evaluations += 1;

        let mut state = None;
        for _ in 0..60 {
            match problem.state(&theta) {
                Ok(q) if problem.inside(&q, r0)? => {
                    state = Some(q);
                    break;
                }
                _ => theta.iter_mut().for_each(|t| *t *= 0.5),
            }
        }
        let Some(q) = state else {
            if hill {
                sigma = (sigma * 0.7).max(1e-8);
            }
            continue;
        };
        let Some((f, g)) = problem.ratios(&q, alpha)? else { continue };
        valid += 1;
        best_f = best_f.max(f);
        best_g = best_g.max(g);
        let obj = f.max(g);
        if obj > best_obj {
            best_obj = obj;
            best_theta = Some(theta);
            if hill {
                sigma = (sigma * 1.3).min(10.0);
            }
        } else if hill {
            sigma = (sigma * 0.7).max(1e-8);
        }
    }
    Ok(ShardResult {
        alpha,
        focus: problem.focus,
        best_f,
        best_g,
        evaluations,
        valid,
    })
}

/// Random search plus hill climbing for the generalized correlation of the
/// model around `qstar`.
///
/// Each `(block, α)` pair is an independent shard with its own generator, so
/// the result does not depend on how shards are scheduled across threads.
pub fn gcorr_empirical(
    model: &ModelSpec,
    qstar: &MeanFieldState,
    opts: &EmpiricalOptions,
    exec: Execution,
) -> Result<EmpiricalGcorr> {
    model.validate()?;
    model.check_state(qstar)?;
    if opts.budget == 0 {
        return Err(invalid("budget", "search budget must be positive"));
    }
    if !(opts.r0 > 0.0) {
        return Err(invalid("r0", format!("neighborhood radius must be positive, got {}", opts.r0)));
    }
    if opts.alpha_grid.is_empty() {
        return Err(invalid("alpha_grid", "grid is empty"));
    }
    if let Some(a) = opts.alpha_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(invalid("alpha_grid", format!("values must lie in [0, 1], got {a}")));
    }
    let foci: Vec<Option<usize>> = if model.num_blocks() == 2 {
        vec![None]
    } else if model.gaussian_parts().is_some() {
        (0..model.num_blocks()).map(Some).collect()
    } else {
        return Err(invalid("model", "empirical search needs two blocks or a Gaussian target"));
    };
    let problems = foci
        .iter()
        .map(|&f| Problem::new(model, qstar, f))
        .collect::<Result<Vec<_>>>()?;
    let mut shards = Vec::new();
    for (pi, _) in problems.iter().enumerate() {
        for &alpha in &opts.alpha_grid {
            shards.push((pi, alpha));
        }
    }
    let per_shard = opts.budget.div_ceil(shards.len()).max(2);
    let indexed: Vec<(usize, (usize, f64))> = shards.into_iter().enumerate().collect();
    let results = exec
        .map(&indexed, |&(i, (pi, alpha))| {
            let seed = opts.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1));
            run_shard(&problems[pi], alpha, opts.r0, per_shard, seed)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    if let Some(r) = results.iter().find(|r| r.valid == 0) {
        return Err(CaviError::Search(format!(
            "no in-family state with positive divergence found within r0 = {} (alpha = {})",
            opts.r0, r.alpha
        )));
    }
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    let mut value = f64::NEG_INFINITY;
    let mut worst_block = None;
    for &focus in &foci {
        let inner = results
            .iter()
            .filter(|r| r.focus == focus)
            .map(|r| r.best_f.max(r.best_g))
            .fold(f64::INFINITY, f64::min);
        if inner > value {
            value = inner;
            worst_block = focus;
        }
    }
    let per_alpha = results
        .iter()
        .map(|r| AlphaResult {
            alpha: r.alpha,
            gcorr_alpha: r.best_f,
            gcorr_complement: r.best_g,
            block: r.focus,
        })
        .collect();
    Ok(EmpiricalGcorr {
        value,
        per_alpha,
        worst_block,
        evaluations,
    })
}
