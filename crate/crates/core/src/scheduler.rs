//! Update schedules and the diagnostic run loop.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergences::special::{logit, sigmoid};
use crate::divergences::BlockDensity;
use crate::error::{invalid, CaviError, Result};
use crate::exec::Execution;
use crate::linalg::cholesky;
use crate::models::{block_update, objective_gap, MeanFieldState, ModelSpec};

/// Ratios are only formed while the previous total divergence exceeds this.
pub const RATIO_FLOOR: f64 = 1e2 * f64::EPSILON;
/// A total divergence above this ends a run as diverged.
pub const DIVERGENCE_CEILING: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schedule {
    /// Every block updated from the previous state (Jacobi).
    Parallel,
    /// Blocks updated one after another in `order` (Gauss-Seidel). Defaults to
    /// the model's own order.
    Sequential {
        #[serde(default)]
        order: Option<Vec<usize>>,
    },
    /// One uniformly chosen block per step.
    Randomized { seed: u64 },
    /// Damped version of a parallel or sequential base: each new block is the
    /// geometric mixture `old^(1-α) new^α`, i.e. natural parameters are
    /// interpolated.
    Lazy { base: Box<Schedule>, alpha: f64 },
}

impl Schedule {
    pub fn sequential() -> Self {
        Schedule::Sequential { order: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Parallel => "parallel",
            Schedule::Sequential { .. } => "sequential",
            Schedule::Randomized { .. } => "randomized",
            Schedule::Lazy { .. } => "lazy",
        }
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        match self {
            Schedule::Parallel | Schedule::Randomized { .. } => Ok(()),
            Schedule::Sequential { order } => match order {
                None => Ok(()),
                Some(o) => {
                    let d = model.num_blocks();
                    let mut seen = vec![false; d];
                    for &j in o {
                        if j >= d {
                            return Err(CaviError::BlockIndex { index: j, blocks: d });
                        }
                        if std::mem::replace(&mut seen[j], true) {
                            return Err(invalid("order", format!("block {j} appears twice")));
                        }
                    }
                    if o.len() == d {
                        Ok(())
                    } else {
                        Err(invalid("order", format!("must be a permutation of 0..{d}")))
                    }
                }
            },
            Schedule::Lazy { base, alpha } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
                }
                match base.as_ref() {
                    Schedule::Parallel | Schedule::Sequential { .. } => base.validate(model),
                    _ => Err(invalid("base", "lazy schedules wrap parallel or sequential updates")),
                }
            }
        }
    }
}

/// Geometric mixture `old^(1-α) new^α` of two members of the same family.
pub fn lazy_mix(old: &BlockDensity, new: &BlockDensity, alpha: f64) -> Result<BlockDensity> {
    if alpha == 1.0 {
        return Ok(new.clone());
    }
    let w = |a: f64, b: f64| (1.0 - alpha) * a + alpha * b;
    use BlockDensity::*;
    match (old, new) {
        (UniNormal { mean: m0, precision: t0 }, UniNormal { mean: m1, precision: t1 }) => {
            let t = w(*t0, *t1);
            BlockDensity::uni_normal(w(t0 * m0, t1 * m1) / t, t)
        }
        (MvNormal { mean: m0, precision: l0 }, MvNormal { mean: m1, precision: l1 }) => {
            let l = l0 * (1.0 - alpha) + l1 * alpha;
            let h: DVector<f64> = l0 * m0 * (1.0 - alpha) + l1 * m1 * alpha;
            let m = cholesky(&l, "precision")?.solve(&h);
            BlockDensity::mv_normal(m, l)
        }
        (Gamma { shape: a0, rate: b0 }, Gamma { shape: a1, rate: b1 }) => BlockDensity::gamma(w(*a0, *a1), w(*b0, *b1)),
        (TwoPoint { prob: u0 }, TwoPoint { prob: u1 }) => BlockDensity::two_point(sigmoid(w(logit(*u0), logit(*u1)))),
        (TruncNormal { location: a0, side }, TruncNormal { location: a1, .. }) => {
            BlockDensity::trunc_normal(w(*a0, *a1), *side)
        }
        (ProductTruncNormal { locations: a0, sides }, ProductTruncNormal { locations: a1, .. }) => {
            BlockDensity::product_trunc_normal(a0.iter().zip(a1).map(|(x, y)| w(*x, *y)).collect(), sides.clone())
        }
        (ProductTwoPoint { probs: u0 }, ProductTwoPoint { probs: u1 }) => BlockDensity::product_two_point(
            u0.iter().zip(u1).map(|(x, y)| sigmoid(w(logit(*x), logit(*y)))).collect(),
        ),
        _ => Err(CaviError::FamilyMismatch {
            block: 0,
            expected: old.family_name(),
            found: new.family_name(),
        }),
    }
}

fn order_for(model: &ModelSpec, order: &Option<Vec<usize>>) -> Vec<usize> {
    order.clone().unwrap_or_else(|| model.default_order())
}

fn parallel_step(model: &ModelSpec, state: &MeanFieldState, alpha: f64) -> Result<MeanFieldState> {
    let blocks = (0..model.num_blocks())
        .map(|j| {
            let new = block_update(model, state, j)?;
            lazy_mix(&state.blocks[j], &new, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanFieldState::new(blocks))
}

fn sequential_step(model: &ModelSpec, state: &MeanFieldState, order: &[usize], alpha: f64) -> Result<MeanFieldState> {
    let mut next = state.clone();
    for &j in order {
        let new = block_update(model, &next, j)?;
        next.blocks[j] = lazy_mix(&next.blocks[j], &new, alpha)?;
    }
    Ok(next)
}

/// One iteration of `schedule`. `rng` is only drawn from by randomized
/// schedules.
pub fn step<R: Rng + ?Sized>(
    model: &ModelSpec,
    state: &MeanFieldState,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<MeanFieldState> {
    match schedule {
        Schedule::Parallel => parallel_step(model, state, 1.0),
        Schedule::Sequential { order } => sequential_step(model, state, &order_for(model, order), 1.0),
        Schedule::Randomized { .. } => {
            let j = rng.random_range(0..model.num_blocks());
            let mut next = state.clone();
            next.blocks[j] = block_update(model, state, j)?;
            Ok(next)
        }
        Schedule::Lazy { base, alpha } => match base.as_ref() {
            Schedule::Parallel => parallel_step(model, state, *alpha),
            Schedule::Sequential { order } => sequential_step(model, state, &order_for(model, order), *alpha),
            _ => Err(invalid("base", "lazy schedules wrap parallel or sequential updates")),
        },
    }
}

/// Generator for the randomized schedule, seeded from the schedule itself.
pub fn schedule_rng(schedule: &Schedule) -> ChaCha8Rng {
    match schedule {
        Schedule::Randomized { seed } => ChaCha8Rng::seed_from_u64(*seed),
        _ => ChaCha8Rng::seed_from_u64(0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    /// Total `D_½` reached the stopping tolerance.
    Converged,
    /// Total `D_½` exceeded the ceiling, became non-finite, or an update failed
    /// numerically.
    Diverged,
    /// Iteration budget used up.
    MaxIter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub iter: usize,
    pub d_half_blocks: Vec<f64>,
    pub d_half_total: f64,
    /// `D_t / D_{t-1}`, present while `D_{t-1}` is above [`RATIO_FLOOR`].
    pub ratio: Option<f64>,
    pub objective_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Every visited state, or only the first and last when states were not
    /// recorded.
    pub states: Vec<MeanFieldState>,
    pub rows: Vec<DiagnosticRow>,
    pub stop_tol: f64,
    pub outcome: RunOutcome,
    #[serde(default)]
    pub note: Option<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> &MeanFieldState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn terminal_d_half(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.d_half_total)
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.ratio).collect()
    }

    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.iter)
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub max_iter: usize,
    pub stop_tol: f64,
    pub record_states: bool,
    pub objective_gap: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            stop_tol: 1e-12,
            record_states: true,
            objective_gap: true,
        }
    }
}

fn diagnostics(
    model: &ModelSpec,
    state: &MeanFieldState,
    qstar: &MeanFieldState,
    with_gap: bool,
) -> Result<(Vec<f64>, f64, Option<f64>)> {
    let blocks = state.d_half_blocks(qstar)?;
    let total = blocks.iter().sum();
    let gap = if with_gap { Some(objective_gap(model, state, qstar)?) } else { None };
    Ok((blocks, total, gap))
}

/// Runs `schedule` from `init`, measuring `D_½` to `qstar` after every step.
pub fn run(
    model: &ModelSpec,
    schedule: &Schedule,
    init: &MeanFieldState,
    qstar: &MeanFieldState,
    opts: &RunOptions,
) -> Result<Trajectory> {
    model.validate()?;
    schedule.validate(model)?;
    model.check_state(init)?;
    model.check_state(qstar)?;
    if !(opts.stop_tol >= 0.0) {
        return Err(invalid("stop_tol", format!("must be non-negative, got {}", opts.stop_tol)));
    }
    let mut rng = schedule_rng(schedule);
    let (blocks, total, gap) = diagnostics(model, init, qstar, opts.objective_gap)?;
    let mut rows = vec![DiagnosticRow {
        iter: 0,
        d_half_blocks: blocks,
        d_half_total: total,
        ratio: None,
        objective_gap: gap,
    }];
    let mut states = vec![init.clone()];
    let mut current = init.clone();
    let mut outcome = RunOutcome::MaxIter;
    let mut note = None;
    if total <= opts.stop_tol {
        outcome = RunOutcome::Converged;
    } else {
        let mut prev_total = total;
        for t in 1..=opts.max_iter {
            let next = match step(model, &current, schedule, &mut rng) {
                Ok(s) => s,
                Err(CaviError::Numerical(msg)) | Err(CaviError::InvalidParameter { reason: msg, .. }) => {
                    outcome = RunOutcome::Diverged;
                    note = Some(format!("update failed at iteration {t}: {msg}"));
                    break;
                }
                Err(e) => return Err(e),
            };
            let diag = diagnostics(model, &next, qstar, opts.objective_gap);
            let (blocks, total, gap) = match diag {
                Ok(d) => d,
                Err(e) => {
                    outcome = RunOutcome::Diverged;
                    note = Some(format!("diagnostics failed at iteration {t}: {e}"));
                    break;
                }
            };
            let ratio = (prev_total > RATIO_FLOOR).then(|| total / prev_total);
            rows.push(DiagnosticRow {
                iter: t,
                d_half_blocks: blocks,
                d_half_total: total,
                ratio,
                objective_gap: gap,
            });
            if opts.record_states {
                states.push(next.clone());
            }
            current = next;
            prev_total = total;
            if !total.is_finite() || total > DIVERGENCE_CEILING {
                outcome = RunOutcome::Diverged;
                break;
            }
            if total <= opts.stop_tol {
                outcome = RunOutcome::Converged;
                break;
            }
        }
    }
    if !opts.record_states && rows.len() > 1 {
        states.push(current);
    }
    Ok(Trajectory {
        states,
        rows,
        stop_tol: opts.stop_tol,
        outcome,
        note,
    })
}

/// Averages over independent randomized runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub seeds: usize,
    /// Mean total `D_½` at steps `0..=steps`.
    pub mean_d_half: Vec<f64>,
    /// Mean of the per-run ratios `D_t / D_{t-1}` at steps `1..=steps`.
    pub mean_ratio: Vec<Option<f64>>,
    /// Standard error of `mean_ratio`.
    pub ratio_se: Vec<Option<f64>>,
    /// Number of runs contributing a ratio at each step.
    pub ratio_count: Vec<usize>,
}

/// Runs the randomized schedule once per seed for exactly `steps` steps.
pub fn run_randomized_ensemble(
    model: &ModelSpec,
    init: &MeanFieldState,
    qstar: &MeanFieldState,
    seeds: &[u64],
    steps: usize,
    exec: Execution,
) -> Result<EnsembleSummary> {
    if seeds.is_empty() {
        return Err(invalid("seeds", "need at least one seed"));
    }
    let opts = RunOptions {
        max_iter: steps,
        stop_tol: 0.0,
        record_states: false,
        objective_gap: false,
    };
    let paths = exec
        .map(seeds, |&seed| {
            run(model, &Schedule::Randomized { seed }, init, qstar, &opts)
                .map(|t| t.rows.iter().map(|r| r.d_half_total).collect::<Vec<_>>())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let len = steps + 1;
    let mut mean_d_half = vec![0.0; len];
    let mut counts = vec![0usize; len];
    for path in &paths {
        for (t, &d) in path.iter().enumerate() {
            mean_d_half[t] += d;
            counts[t] += 1;
        }
    }
    for (m, &c) in mean_d_half.iter_mut().zip(&counts) {
        *m = if c > 0 { *m / c as f64 } else { f64::NAN };
    }
    let mut mean_ratio = Vec::with_capacity(steps);
    let mut ratio_se = Vec::with_capacity(steps);
    let mut ratio_count = Vec::with_capacity(steps);
    for t in 1..len {
        let rs: Vec<f64> = paths
            .iter()
            .filter(|p| p.len() > t && p[t - 1] > RATIO_FLOOR)
            .map(|p| p[t] / p[t - 1])
            .collect();
        let k = rs.len();
        ratio_count.push(k);
        if k == 0 {
            mean_ratio.push(None);
            ratio_se.push(None);
            continue;
        }
        let mean = rs.iter().sum::<f64>() / k as f64;
        let se = if k > 1 {
            let var = rs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        mean_ratio.push(Some(mean));
        ratio_se.push(Some(se));
    }
    Ok(EnsembleSummary {
        seeds: seeds.len(),
        mean_d_half,
        mean_ratio,
        ratio_se,
        ratio_count,
    })
}
