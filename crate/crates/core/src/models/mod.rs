//! Target models, their CAVI block updates and their optima.

mod data;
mod interaction;

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::divergences::special::{logit, sigmoid};
use crate::divergences::{d_half, BlockDensity, Side};
use crate::error::{invalid, CaviError, Result};
use crate::linalg::{cholesky, serde_matrix};

/// Bounds applied to updated two-point probabilities.
pub const PROB_CLAMP: f64 = 1e-12;

pub use data::{generate_data, DataSpec};
pub use interaction::{delta_block_vs_rest, delta_n, objective_gap};

fn one() -> f64 {
    1.0
}

/// Target posterior specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Two binary variables. Equal values carry mass `(1 - p) / 2` each and
    /// unequal values `p / 2` each.
    Discrete2d { p: f64 },
    /// `N(theta0, (n_scale * Q)⁻¹)` split into consecutive blocks of the sizes
    /// listed in `partition`.
    GaussianBlocks {
        theta0: Vec<f64>,
        #[serde(with = "serde_matrix")]
        q: DMatrix<f64>,
        partition: Vec<usize>,
        #[serde(default = "one")]
        n_scale: f64,
    },
    /// `π(u1, u2) ∝ exp(-(u1² + u2² + u1² u2²) / 2)`, whose conditionals are
    /// centred normals.
    GaussConditionals,
    /// Probit regression with latent utilities and prior `β ~ N(0, κ⁻¹ I)`.
    Probit {
        #[serde(with = "serde_matrix")]
        x: DMatrix<f64>,
        y: Vec<u8>,
        kappa: f64,
    },
    /// `x_i ~ N(μ, τ⁻¹)` with `μ ~ N(0, κ⁻¹)` and `τ ~ Gamma(a0, b0)`.
    GaussMeanPrec { x: Vec<f64>, kappa: f64, a0: f64, b0: f64 },
    /// Equal-weight mixture of `N(0, 1)` and `N(μ, 1)` with `μ ~ N(0, τ0⁻¹)`.
    /// Block 0 is `μ`, block 1 the component labels.
    Gmm2 { x: Vec<f64>, tau0: f64 },
    /// Unit-variance equicorrelated Gaussian in `d` scalar blocks.
    CompoundSymmetry { d: usize, rho: f64 },
}

/// Product of one density per block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub blocks: Vec<BlockDensity>,
}

impl MeanFieldState {
    pub fn new(blocks: Vec<BlockDensity>) -> Self {
        Self { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Blockwise `D_½` to another state.
    pub fn d_half_blocks(&self, other: &MeanFieldState) -> Result<Vec<f64>> {
        if self.len() != other.len() {
            return Err(invalid("state", format!("{} vs {} blocks", self.len(), other.len())));
        }
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| d_half(a, b)).collect()
    }
}

pub(crate) struct GaussianParts<'a> {
    pub theta0: Cow<'a, [f64]>,
    pub q: Cow<'a, DMatrix<f64>>,
    pub partition: Cow<'a, [usize]>,
    pub n_scale: f64,
}

impl GaussianParts<'_> {
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        let mut out = Vec::with_capacity(self.partition.len() + 1);
        out.push(0);
        for &s in self.partition.iter() {
            acc += s;
            out.push(acc);
        }
        out
    }

    pub fn block_q(&self, j: usize, k: usize) -> DMatrix<f64> {
        let o = self.offsets();
        self.q
            .view((o[j], o[k]), (self.partition[j], self.partition[k]))
            .into_owned()
    }
}

pub(crate) fn block_mean(b: &BlockDensity) -> DVector<f64> {
    match b {
        BlockDensity::UniNormal { mean, .. } => DVector::from_element(1, *mean),
        BlockDensity::MvNormal { mean, .. } => mean.clone(),
        other => DVector::from_vec(other.mean()),
    }
}

fn scalar_normal(b: &BlockDensity) -> (f64, f64) {
    match b {
        BlockDensity::UniNormal { mean, precision } => (*mean, *precision),
        _ => unreachable!("state checked before use"),
    }
}

pub(crate) fn mean_and_ss(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss)
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Discrete2d { .. } => "discrete2d",
            ModelSpec::GaussianBlocks { .. } => "gaussian_blocks",
            ModelSpec::GaussConditionals => "gauss_conditionals",
            ModelSpec::Probit { .. } => "probit",
            ModelSpec::GaussMeanPrec { .. } => "gauss_mean_prec",
            ModelSpec::Gmm2 { .. } => "gmm2",
            ModelSpec::CompoundSymmetry { .. } => "compound_symmetry",
        }
    }

    pub fn num_blocks(&self) -> usize {
        match self {
            ModelSpec::GaussianBlocks { partition, .. } => partition.len(),
            ModelSpec::CompoundSymmetry { d, .. } => *d,
            _ => 2,
        }
    }

    /// Block order used by sequential sweeps when none is given. The mixture
    /// refreshes its labels before the location.
    pub fn default_order(&self) -> Vec<usize> {
        match self {
            ModelSpec::Gmm2 { .. } => vec![1, 0],
            _ => (0..self.num_blocks()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Discrete2d { p } => {
                if *p > 0.0 && *p < 1.0 {
                    Ok(())
                } else {
                    Err(invalid("p", format!("must lie strictly inside (0, 1), got {p}")))
                }
            }
            ModelSpec::GaussianBlocks { theta0, q, partition, n_scale } => {
                if partition.len() < 2 {
                    return Err(invalid("partition", "need at least two blocks"));
                }
                if partition.contains(&0) {
                    return Err(invalid("partition", "blocks must be non-empty"));
                }
                let total: usize = partition.iter().sum();
                if total != theta0.len() {
                    return Err(invalid(
                        "partition",
                        format!("block sizes sum to {total} but theta0 has {} entries", theta0.len()),
                    ));
                }
                if q.nrows() != total || q.ncols() != total {
                    return Err(invalid("q", format!("expected {total}x{total}, got {}x{}", q.nrows(), q.ncols())));
                }
                if theta0.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("theta0", "entries must be finite"));
                }
                if (q - q.transpose()).abs().max() > 1e-10 * q.abs().max().max(1.0) {
                    return Err(invalid("q", "matrix is not symmetric"));
                }
                if !(*n_scale > 0.0 && n_scale.is_finite()) {
                    return Err(invalid("n_scale", format!("must be positive, got {n_scale}")));
                }
                cholesky(q, "q").map(|_| ())
            }
            ModelSpec::GaussConditionals => Ok(()),
            ModelSpec::Probit { x, y, kappa } => {
                if x.nrows() == 0 || x.ncols() == 0 {
                    return Err(invalid("x", "design matrix is empty"));
                }
                if x.nrows() != y.len() {
                    return Err(invalid("y", format!("{} labels for {} rows of x", y.len(), x.nrows())));
                }
                if y.iter().any(|&v| v > 1) {
                    return Err(invalid("y", "labels must be 0 or 1"));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("x", "entries must be finite"));
                }
                if !(*kappa >= 0.0 && kappa.is_finite()) {
                    return Err(invalid("kappa", format!("must be non-negative, got {kappa}")));
                }
                cholesky(&self.probit_precision().expect("probit"), "x'x + kappa I").map(|_| ())
            }
            ModelSpec::GaussMeanPrec { x, kappa, a0, b0 } => {
                if x.is_empty() {
                    return Err(invalid("x", "need at least one observation"));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("x", "entries must be finite"));
                }
                for (name, v) in [("kappa", kappa), ("a0", a0), ("b0", b0)] {
                    if !(*v >= 0.0 && v.is_finite()) {
                        return Err(invalid(name, format!("must be non-negative, got {v}")));
                    }
                }
                Ok(())
            }
            ModelSpec::Gmm2 { x, tau0 } => {
                if x.is_empty() {
                    return Err(invalid("x", "need at least one observation"));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("x", "entries must be finite"));
                }
                if !(*tau0 > 0.0 && tau0.is_finite()) {
                    return Err(invalid("tau0", format!("must be positive, got {tau0}")));
                }
                Ok(())
            }
            ModelSpec::CompoundSymmetry { d, rho } => {
                if *d < 2 {
                    return Err(invalid("d", format!("need d >= 2, got {d}")));
                }
                let lower = -1.0 / (*d as f64 - 1.0);
                if !(*rho > lower && *rho < 1.0) {
                    return Err(invalid(
                        "rho",
                        format!("must lie in ({lower}, 1) for a positive definite matrix, got {rho}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Copy with one named scalar parameter replaced, used by sweeps.
    pub fn with_param(&self, name: &str, value: f64) -> Result<ModelSpec> {
        let mut m = self.clone();
        let unknown = || invalid(name, format!("not a sweepable parameter of {}", self.name()));
        match (&mut m, name) {
            (ModelSpec::Discrete2d { p }, "p") => *p = value,
            (ModelSpec::CompoundSymmetry { rho, .. }, "rho") => *rho = value,
            (ModelSpec::CompoundSymmetry { d, .. }, "d") => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(invalid("d", format!("must be a whole number, got {value}")));
                }
                *d = value as usize;
            }
            (ModelSpec::GaussianBlocks { n_scale, .. }, "n_scale") => *n_scale = value,
            (ModelSpec::Probit { kappa, .. }, "kappa") => *kappa = value,
            (ModelSpec::GaussMeanPrec { kappa, .. }, "kappa") => *kappa = value,
            (ModelSpec::GaussMeanPrec { a0, .. }, "a0") => *a0 = value,
            (ModelSpec::GaussMeanPrec { b0, .. }, "b0") => *b0 = value,
            (ModelSpec::Gmm2 { tau0, .. }, "tau0") => *tau0 = value,
            _ => return Err(unknown()),
        }
        m.validate()?;
        Ok(m)
    }

    pub(crate) fn gaussian_parts(&self) -> Option<GaussianParts<'_>> {
        match self {
            ModelSpec::GaussianBlocks { theta0, q, partition, n_scale } => Some(GaussianParts {
                theta0: Cow::Borrowed(theta0),
                q: Cow::Borrowed(q),
                partition: Cow::Borrowed(partition),
                n_scale: *n_scale,
            }),
            ModelSpec::CompoundSymmetry { d, rho } => {
                let q = DMatrix::from_fn(*d, *d, |i, j| if i == j { 1.0 } else { *rho });
                Some(GaussianParts {
                    theta0: Cow::Owned(vec![0.0; *d]),
                    q: Cow::Owned(q),
                    partition: Cow::Owned(vec![1; *d]),
                    n_scale: 1.0,
                })
            }
            _ => None,
        }
    }

    /// The same target written as an explicit `GaussianBlocks` model.
    pub fn as_gaussian_blocks(&self) -> Option<ModelSpec> {
        self.gaussian_parts().map(|g| ModelSpec::GaussianBlocks {
            theta0: g.theta0.into_owned(),
            q: g.q.into_owned(),
            partition: g.partition.into_owned(),
            n_scale: g.n_scale,
        })
    }

    pub(crate) fn probit_precision(&self) -> Option<DMatrix<f64>> {
        match self {
            ModelSpec::Probit { x, kappa, .. } => {
                let p = x.ncols();
                Some(x.transpose() * x + DMatrix::identity(p, p) * *kappa)
            }
            _ => None,
        }
    }

    pub(crate) fn probit_sides(&self) -> Option<Vec<Side>> {
        match self {
            ModelSpec::Probit { y, .. } => Some(
                y.iter()
                    .map(|&v| if v == 1 { Side::Positive } else { Side::Negative })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Checks that `state` has the block families and sizes this model uses.
    pub fn check_state(&self, state: &MeanFieldState) -> Result<()> {
        let d = self.num_blocks();
        if state.len() != d {
            return Err(invalid("state", format!("model has {d} blocks, state has {}", state.len())));
        }
        for (j, b) in state.blocks.iter().enumerate() {
            let (expected, dim) = self.block_family(j);
            if b.family_name() != expected {
                return Err(CaviError::FamilyMismatch {
                    block: j,
                    expected,
                    found: b.family_name(),
                });
            }
            if b.dim() != dim {
                return Err(invalid("state", format!("block {j} has dimension {}, expected {dim}", b.dim())));
            }
            b.validate()?;
        }
        if let (ModelSpec::Probit { .. }, BlockDensity::ProductTruncNormal { sides, .. }) = (self, &state.blocks[1]) {
            if Some(sides) != self.probit_sides().as_ref() {
                return Err(invalid("state", "latent truncation sides disagree with y"));
            }
        }
        Ok(())
    }

    fn block_family(&self, j: usize) -> (&'static str, usize) {
        match self {
            ModelSpec::Discrete2d { .. } => ("two_point", 1),
            ModelSpec::GaussianBlocks { partition, .. } => {
                if partition[j] == 1 {
                    ("uni_normal", 1)
                } else {
                    ("mv_normal", partition[j])
                }
            }
            ModelSpec::GaussConditionals | ModelSpec::CompoundSymmetry { .. } => ("uni_normal", 1),
            ModelSpec::Probit { x, .. } => {
                if j == 0 {
                    if x.ncols() == 1 {
                        ("uni_normal", 1)
                    } else {
                        ("mv_normal", x.ncols())
                    }
                } else {
                    ("product_trunc_normal", x.nrows())
                }
            }
            ModelSpec::GaussMeanPrec { .. } => {
                if j == 0 {
                    ("uni_normal", 1)
                } else {
                    ("gamma", 1)
                }
            }
            ModelSpec::Gmm2 { x, .. } => {
                if j == 0 {
                    ("uni_normal", 1)
                } else {
                    ("product_two_point", x.len())
                }
            }
        }
    }
}

fn gaussian_block(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<BlockDensity> {
    if mean.len() == 1 {
        BlockDensity::uni_normal(mean[0], precision[(0, 0)])
    } else {
        BlockDensity::mv_normal(mean, precision)
    }
}

fn normal_mean_precision(b: &BlockDensity) -> (DVector<f64>, Option<DMatrix<f64>>) {
    match b {
        BlockDensity::UniNormal { mean, precision } => {
            (DVector::from_element(1, *mean), Some(DMatrix::from_element(1, 1, *precision)))
        }
        BlockDensity::MvNormal { mean, precision } => (mean.clone(), Some(precision.clone())),
        _ => (block_mean(b), None),
    }
}

fn numerical(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CaviError::Numerical(format!("{what} became {v}")))
    }
}

/// Exact CAVI update of block `j` given the other blocks of `state`.
pub fn block_update(model: &ModelSpec, state: &MeanFieldState, j: usize) -> Result<BlockDensity> {
    let d = model.num_blocks();
    if j >= d {
        return Err(CaviError::BlockIndex { index: j, blocks: d });
    }
    model.check_state(state)?;
    match model {
        ModelSpec::Discrete2d { p } => {
            let other = state.blocks[1 - j].mean()[0];
            let l = (1.0 - 2.0 * other) * logit(*p);
            BlockDensity::two_point(sigmoid(l).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
        }
        ModelSpec::GaussianBlocks { .. } | ModelSpec::CompoundSymmetry { .. } => {
            let g = model.gaussian_parts().expect("gaussian model");
            let o = g.offsets();
            let qjj = g.block_q(j, j);
            let mut rhs = DVector::zeros(g.partition[j]);
            for k in 0..d {
                if k == j {
                    continue;
                }
                let shift = block_mean(&state.blocks[k]) - DVector::from_column_slice(&g.theta0[o[k]..o[k + 1]]);
                rhs += g.block_q(j, k) * shift;
            }
            let chol = cholesky(&qjj, "q")?;
            let mean = DVector::from_column_slice(&g.theta0[o[j]..o[j + 1]]) - chol.solve(&rhs);
            for &m in mean.iter() {
                numerical("block mean", m)?;
            }
            gaussian_block(mean, qjj * g.n_scale)
        }
        ModelSpec::GaussConditionals => {
            let (m, t) = scalar_normal(&state.blocks[1 - j]);
            let tau = numerical("precision", 1.0 + m * m + 1.0 / t)?;
            BlockDensity::uni_normal(0.0, tau)
        }
        ModelSpec::Probit { x, .. } => {
            if j == 0 {
                let b = DVector::from_vec(state.blocks[1].mean());
                let precision = model.probit_precision().expect("probit");
                let chol = cholesky(&precision, "x'x + kappa I")?;
                let mean = chol.solve(&(x.transpose() * b));
                for &m in mean.iter() {
                    numerical("coefficient mean", m)?;
                }
                gaussian_block(mean, precision)
            } else {
                let (m, _) = normal_mean_precision(&state.blocks[0]);
                let alpha = x * m;
                for &a in alpha.iter() {
                    numerical("latent location", a)?;
                }
                BlockDensity::product_trunc_normal(alpha.as_slice().to_vec(), model.probit_sides().expect("probit"))
            }
        }
        ModelSpec::GaussMeanPrec { x, kappa, a0, b0 } => {
            let n = x.len() as f64;
            let (xbar, ss) = mean_and_ss(x);
            if j == 0 {
                let e_tau = state.blocks[1].mean()[0];
                let s = numerical("precision", n * e_tau + kappa)?;
                let m = numerical("mean", n * e_tau * xbar / s)?;
                BlockDensity::uni_normal(m, s)
            } else {
                let (m, s) = scalar_normal(&state.blocks[0]);
                let rate = numerical("rate", 0.5 * (ss + n * (xbar - m) * (xbar - m) + n / s) + b0)?;
                BlockDensity::gamma(0.5 * n + a0, rate)
            }
        }
        ModelSpec::Gmm2 { x, tau0 } => {
            if j == 0 {
                let p = state.blocks[1].mean();
                let tau = tau0 + p.iter().sum::<f64>();
                let m = numerical("mean", p.iter().zip(x).map(|(pi, xi)| pi * xi).sum::<f64>() / tau)?;
                BlockDensity::uni_normal(m, tau)
            } else {
                let (m, tau) = scalar_normal(&state.blocks[0]);
                let second = m * m + 1.0 / tau;
                let probs = x
                    .iter()
                    .map(|xi| {
                        let l = m * xi - 0.5 * second;
                        numerical("label logit", l).map(|l| sigmoid(l).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
                    })
                    .collect::<Result<Vec<_>>>()?;
                BlockDensity::product_two_point(probs)
            }
        }
    }
}

/// Options for the iterative fixed-point search.
#[derive(Clone, Copy, Debug)]
pub struct FixedPointOptions {
    /// Sweep-to-sweep total `D_½` that must be reached.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Once `tol` is met, keep sweeping until the residual has not improved
    /// for this many sweeps, so the optimum is pinned at rounding level.
    pub patience: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_sweeps: 1_000_000,
            patience: 25,
        }
    }
}

/// Optimum `q*` of the model.
///
/// Closed forms are used where they exist. Otherwise sequential sweeps run from
/// [`default_start`] until the residual stops improving below
/// [`FixedPointOptions::tol`].
pub fn fixed_point(model: &ModelSpec) -> Result<MeanFieldState> {
    model.validate()?;
    match model {
        ModelSpec::Discrete2d { .. } => Ok(MeanFieldState::new(vec![
            BlockDensity::two_point(0.5)?,
            BlockDensity::two_point(0.5)?,
        ])),
        ModelSpec::GaussianBlocks { .. } | ModelSpec::CompoundSymmetry { .. } => {
            let g = model.gaussian_parts().expect("gaussian model");
            let o = g.offsets();
            let blocks = (0..g.partition.len())
                .map(|j| {
                    gaussian_block(
                        DVector::from_column_slice(&g.theta0[o[j]..o[j + 1]]),
                        g.block_q(j, j) * g.n_scale,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MeanFieldState::new(blocks))
        }
        ModelSpec::GaussConditionals => {
            let phi = 0.5 * (1.0 + 5f64.sqrt());
            Ok(MeanFieldState::new(vec![
                BlockDensity::uni_normal(0.0, phi)?,
                BlockDensity::uni_normal(0.0, phi)?,
            ]))
        }
        _ => fixed_point_from(model, default_start(model)?, FixedPointOptions::default()),
    }
}

/// Sequential sweeps from `start` to the fixed point it is attracted to.
pub fn fixed_point_from(model: &ModelSpec, start: MeanFieldState, opts: FixedPointOptions) -> Result<MeanFieldState> {
    model.check_state(&start)?;
    let order = model.default_order();
    let mut state = start;
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    for sweep in 0..opts.max_sweeps {
        let prev = state.clone();
        for &j in &order {
            state.blocks[j] = block_update(model, &state, j)?;
        }
        let residual: f64 = state.d_half_blocks(&prev)?.iter().sum();
        if !residual.is_finite() {
            return Err(CaviError::Numerical(format!("fixed-point residual became {residual}")));
        }
        if residual == 0.0 {
            return Ok(state);
        }
        if residual < best {
            best = residual;
            stale = 0;
        } else {
            stale += 1;
        }
        if best <= opts.tol && stale >= opts.patience {
            return Ok(state);
        }
        if sweep + 1 == opts.max_sweeps && best <= opts.tol {
            return Ok(state);
        }
    }
    Err(CaviError::NoConvergence {
        iterations: opts.max_sweeps,
        residual: best,
    })
}

/// Starting point for fixed-point searches of models without closed-form
/// optima.
pub fn default_start(model: &ModelSpec) -> Result<MeanFieldState> {
    model.validate()?;
    match model {
        ModelSpec::Probit { x, .. } => {
            let p = x.ncols();
            Ok(MeanFieldState::new(vec![
                gaussian_block(DVector::zeros(p), model.probit_precision().expect("probit"))?,
                BlockDensity::product_trunc_normal(vec![0.0; x.nrows()], model.probit_sides().expect("probit"))?,
            ]))
        }
        ModelSpec::GaussMeanPrec { x, kappa, a0, .. } => {
            let n = x.len() as f64;
            let (xbar, ss) = mean_and_ss(x);
            let var = if ss > 0.0 { ss / n } else { 1.0 };
            let shape = 0.5 * n + a0;
            Ok(MeanFieldState::new(vec![
                BlockDensity::uni_normal(xbar, n / var + kappa)?,
                BlockDensity::gamma(shape, shape * var)?,
            ]))
        }
        ModelSpec::Gmm2 { x, tau0 } => {
            let n = x.len() as f64;
            let xbar = x.iter().sum::<f64>() / n;
            Ok(MeanFieldState::new(vec![
                BlockDensity::uni_normal(2.0 * xbar, tau0 + 0.5 * n)?,
                BlockDensity::product_two_point(vec![0.5; x.len()])?,
            ]))
        }
        _ => fixed_point(model),
    }
}

/// Initial state obtained by shifting each block of `qstar` by `k` posterior
/// standard deviations.
///
/// Normal means move by `k` standard deviations, gamma blocks keep their shape
/// and move their mean by `k` standard deviations, two-point blocks move their
/// logit by `k / 4`, truncated normals move their location by `k`. Models whose
/// optimum has mean zero by symmetry (`GaussConditionals`) scale precisions by
/// `1 + k` instead, which keeps the state inside the family on which the
/// interaction bound is proved.
pub fn perturbed_init(model: &ModelSpec, qstar: &MeanFieldState, k: f64) -> Result<MeanFieldState> {
    model.check_state(qstar)?;
    if !k.is_finite() {
        return Err(invalid("perturbation", format!("must be finite, got {k}")));
    }
    let blocks = qstar
        .blocks
        .iter()
        .map(|b| match (model, b) {
            (ModelSpec::GaussConditionals, BlockDensity::UniNormal { mean, precision }) => {
                BlockDensity::uni_normal(*mean, precision * (1.0 + k.abs()))
            }
            (_, BlockDensity::UniNormal { mean, precision }) => {
                BlockDensity::uni_normal(mean + k / precision.sqrt(), *precision)
            }
            (_, BlockDensity::MvNormal { mean, precision }) => {
                let cov = cholesky(precision, "precision")?.inverse();
                let shift = DVector::from_fn(mean.len(), |i, _| k * cov[(i, i)].sqrt());
                BlockDensity::mv_normal(mean + shift, precision.clone())
            }
            (_, BlockDensity::Gamma { shape, rate }) => {
                BlockDensity::gamma(*shape, rate / (1.0 + k / shape.sqrt()).max(1e-3))
            }
            (_, BlockDensity::TwoPoint { prob }) => BlockDensity::two_point(sigmoid(logit(*prob) + 0.25 * k)),
            (_, BlockDensity::TruncNormal { location, side }) => BlockDensity::trunc_normal(location + k, *side),
            (_, BlockDensity::ProductTruncNormal { locations, sides }) => {
                BlockDensity::product_trunc_normal(locations.iter().map(|a| a + k).collect(), sides.clone())
            }
            (_, BlockDensity::ProductTwoPoint { probs }) => {
                BlockDensity::product_two_point(probs.iter().map(|p| sigmoid(logit(*p) + 0.25 * k)).collect())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanFieldState::new(blocks))
}
