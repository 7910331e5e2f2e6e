//! Variational block families and closed-form divergences between them.
//!
//! `kl(q, p)` is `KL(q || p)`. The weighted divergence is
//! `D_α(q || p) = α KL(q || p) + (1 - α) KL(p || q)`, and `D_½` has its own
//! cancellation-free expressions because every convergence diagnostic is
//! measured in it.

pub mod special;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{invalid, CaviError, Result};
use crate::linalg::{cholesky, ln_det, quad_form, serde_matrix, serde_vector};
pub use special::{hazard, lambert_w0, ln_normal_cdf};
use special::logit;

/// Half-line carrying a truncated normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Positive,
    Negative,
}

/// One block of a mean-field state.
///
/// Normal blocks are parameterized by precision. `TwoPoint` holds the
/// probability of the second value (1 for binary variables, component 2 for
/// mixture labels). Truncated normals have unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BlockDensity {
    UniNormal {
        mean: f64,
        precision: f64,
    },
    MvNormal {
        #[serde(with = "serde_vector")]
        mean: DVector<f64>,
        #[serde(with = "serde_matrix")]
        precision: DMatrix<f64>,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    TwoPoint {
        prob: f64,
    },
    TruncNormal {
        location: f64,
        side: Side,
    },
    ProductTruncNormal {
        locations: Vec<f64>,
        sides: Vec<Side>,
    },
    ProductTwoPoint {
        probs: Vec<f64>,
    },
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie strictly inside (0, 1), got {v}")))
    }
}

/// `x - ln(1 + x)` without cancellation near zero.
pub(crate) fn x_minus_ln1p(x: f64) -> f64 {
    if x.abs() < 0.05 {
        let mut term = x * x;
        let mut sum = 0.0;
        for k in 2..40 {
            let t = term / k as f64;
            sum += if k % 2 == 0 { t } else { -t };
            if t.abs() < 1e-18 * sum.abs() {
                break;
            }
            term *= x;
        }
        sum
    } else {
        x - x.ln_1p()
    }
}

fn xlogy_ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (a / b).ln()
    }
}

fn trunc_mean(location: f64, side: Side) -> f64 {
    match side {
        Side::Positive => location + hazard(-location),
        Side::Negative => location - hazard(location),
    }
}

fn trunc_ln_z(location: f64, side: Side) -> f64 {
    match side {
        Side::Positive => ln_normal_cdf(location),
        Side::Negative => ln_normal_cdf(-location),
    }
}

fn kl_trunc(a0: f64, a1: f64, side: Side) -> f64 {
    let e0 = trunc_mean(a0, side);
    (a0 - a1) * (e0 - 0.5 * (a0 + a1)) - (trunc_ln_z(a0, side) - trunc_ln_z(a1, side))
}

fn d_half_trunc(a0: f64, a1: f64, side: Side) -> f64 {
    0.5 * (a0 - a1) * (trunc_mean(a0, side) - trunc_mean(a1, side))
}

fn kl_two_point(u: f64, v: f64) -> f64 {
    xlogy_ratio(u, v) + xlogy_ratio(1.0 - u, 1.0 - v)
}

fn d_half_two_point(u: f64, v: f64) -> f64 {
    0.5 * (u - v) * (logit(u) - logit(v))
}

fn kl_gamma(a0: f64, b0: f64, a1: f64, b1: f64) -> f64 {
    if a0 == a1 {
        a0 * x_minus_ln1p((b1 - b0) / b0)
    } else {
        (a0 - a1) * digamma(a0) - ln_gamma(a0) + ln_gamma(a1) + a1 * (b0.ln() - b1.ln())
            + a0 * (b1 - b0) / b0
    }
}

fn kl_uni_normal(m0: f64, t0: f64, m1: f64, t1: f64) -> f64 {
    0.5 * x_minus_ln1p((t1 - t0) / t0) + 0.5 * t1 * (m1 - m0) * (m1 - m0)
}

fn d_half_uni_normal(m0: f64, t0: f64, m1: f64, t1: f64) -> f64 {
    let dm = m1 - m0;
    0.25 * (t1 - t0) * (t1 - t0) / (t0 * t1) + 0.25 * (t0 + t1) * dm * dm
}

fn mvn_kl(m0: &DVector<f64>, l0: &DMatrix<f64>, m1: &DVector<f64>, l1: &DMatrix<f64>) -> Result<f64> {
    let c0 = cholesky(l0, "precision")?;
    let c1 = cholesky(l1, "precision")?;
    let d = m0.len() as f64;
    // tr(Λ1 Σ0) through the Cholesky factor of Λ0.
    let l1_sigma0 = c0.solve(l1);
    let trace = l1_sigma0.trace();
    let ln_det_ratio = ln_det(&c1) - ln_det(&c0);
    let delta = m1 - m0;
    Ok(0.5 * (trace - ln_det_ratio - d + quad_form(l1, &delta)))
}

fn mvn_d_half(m0: &DVector<f64>, l0: &DMatrix<f64>, m1: &DVector<f64>, l1: &DMatrix<f64>) -> Result<f64> {
    let c0 = cholesky(l0, "precision")?;
    let c1 = cholesky(l1, "precision")?;
    let diff = l1 - l0;
    // tr((Λ1 - Λ0)(Σ0 - Σ1)) = tr(Σ0 D Σ1 D) with D = Λ1 - Λ0.
    let a = c0.solve(&diff);
    let b = c1.solve(&diff);
    let trace = (&a * &b).trace();
    let delta = m1 - m0;
    Ok(0.25 * trace + 0.25 * quad_form(&(l0 + l1), &delta))
}

impl BlockDensity {
    pub fn uni_normal(mean: f64, precision: f64) -> Result<Self> {
        let b = BlockDensity::UniNormal { mean, precision };
        b.validate()?;
        Ok(b)
    }

    pub fn mv_normal(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let b = BlockDensity::MvNormal { mean, precision };
        b.validate()?;
        Ok(b)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let b = BlockDensity::Gamma { shape, rate };
        b.validate()?;
        Ok(b)
    }

    pub fn two_point(prob: f64) -> Result<Self> {
        let b = BlockDensity::TwoPoint { prob };
        b.validate()?;
        Ok(b)
    }

    pub fn trunc_normal(location: f64, side: Side) -> Result<Self> {
        let b = BlockDensity::TruncNormal { location, side };
        b.validate()?;
        Ok(b)
    }

    pub fn product_trunc_normal(locations: Vec<f64>, sides: Vec<Side>) -> Result<Self> {
        let b = BlockDensity::ProductTruncNormal { locations, sides };
        b.validate()?;
        Ok(b)
    }

    pub fn product_two_point(probs: Vec<f64>) -> Result<Self> {
        let b = BlockDensity::ProductTwoPoint { probs };
        b.validate()?;
        Ok(b)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            BlockDensity::UniNormal { .. } => "uni_normal",
            BlockDensity::MvNormal { .. } => "mv_normal",
            BlockDensity::Gamma { .. } => "gamma",
            BlockDensity::TwoPoint { .. } => "two_point",
            BlockDensity::TruncNormal { .. } => "trunc_normal",
            BlockDensity::ProductTruncNormal { .. } => "product_trunc_normal",
            BlockDensity::ProductTwoPoint { .. } => "product_two_point",
        }
    }

    /// Number of scalar coordinates the block describes.
    pub fn dim(&self) -> usize {
        match self {
            BlockDensity::MvNormal { mean, .. } => mean.len(),
            BlockDensity::ProductTruncNormal { locations, .. } => locations.len(),
            BlockDensity::ProductTwoPoint { probs } => probs.len(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BlockDensity::UniNormal { mean, precision } => {
                check_finite("mean", *mean)?;
                check_positive("precision", *precision)
            }
            BlockDensity::MvNormal { mean, precision } => {
                if mean.is_empty() {
                    return Err(invalid("mean", "empty mean vector"));
                }
                if precision.nrows() != mean.len() || precision.ncols() != mean.len() {
                    return Err(invalid(
                        "precision",
                        format!(
                            "shape {}x{} does not match mean length {}",
                            precision.nrows(),
                            precision.ncols(),
                            mean.len()
                        ),
                    ));
                }
                for &m in mean.iter() {
                    check_finite("mean", m)?;
                }
                let asym = (precision - precision.transpose()).abs().max();
                if asym > 1e-10 * precision.abs().max().max(1.0) {
                    return Err(invalid("precision", "matrix is not symmetric"));
                }
                cholesky(precision, "precision").map(|_| ())
            }
            BlockDensity::Gamma { shape, rate } => {
                check_positive("shape", *shape)?;
                check_positive("rate", *rate)
            }
            BlockDensity::TwoPoint { prob } => check_prob("prob", *prob),
            BlockDensity::TruncNormal { location, .. } => check_finite("location", *location),
            BlockDensity::ProductTruncNormal { locations, sides } => {
                if locations.len() != sides.len() {
                    return Err(invalid(
                        "sides",
                        format!("{} sides for {} locations", sides.len(), locations.len()),
                    ));
                }
                locations.iter().try_for_each(|&l| check_finite("locations", l))
            }
            BlockDensity::ProductTwoPoint { probs } => probs.iter().try_for_each(|&p| check_prob("probs", p)),
        }
    }

    /// Mean of each coordinate.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            BlockDensity::UniNormal { mean, .. } => vec![*mean],
            BlockDensity::MvNormal { mean, .. } => mean.as_slice().to_vec(),
            BlockDensity::Gamma { shape, rate } => vec![shape / rate],
            BlockDensity::TwoPoint { prob } => vec![*prob],
            BlockDensity::TruncNormal { location, side } => vec![trunc_mean(*location, *side)],
            BlockDensity::ProductTruncNormal { locations, sides } => locations
                .iter()
                .zip(sides)
                .map(|(&a, &s)| trunc_mean(a, s))
                .collect(),
            BlockDensity::ProductTwoPoint { probs } => probs.clone(),
        }
    }
}

fn mismatch(q: &BlockDensity, p: &BlockDensity) -> CaviError {
    CaviError::FamilyMismatch {
        block: 0,
        expected: q.family_name(),
        found: p.family_name(),
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(invalid("dimension", format!("{a} vs {b}")))
    }
}

fn same_sides(a: &[Side], b: &[Side]) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(invalid("sides", "truncation sides differ"))
    }
}

/// `KL(q || p)` for two members of the same family.
pub fn kl(q: &BlockDensity, p: &BlockDensity) -> Result<f64> {
    use BlockDensity::*;
    match (q, p) {
        (UniNormal { mean: m0, precision: t0 }, UniNormal { mean: m1, precision: t1 }) => {
            Ok(kl_uni_normal(*m0, *t0, *m1, *t1))
        }
        (MvNormal { mean: m0, precision: l0 }, MvNormal { mean: m1, precision: l1 }) => {
            same_len(m0.len(), m1.len())?;
            mvn_kl(m0, l0, m1, l1)
        }
        (Gamma { shape: a0, rate: b0 }, Gamma { shape: a1, rate: b1 }) => Ok(kl_gamma(*a0, *b0, *a1, *b1)),
        (TwoPoint { prob: u }, TwoPoint { prob: v }) => Ok(kl_two_point(*u, *v)),
        (TruncNormal { location: a0, side: s0 }, TruncNormal { location: a1, side: s1 }) => {
            same_sides(&[*s0], &[*s1])?;
            Ok(kl_trunc(*a0, *a1, *s0))
        }
        (ProductTruncNormal { locations: a0, sides: s0 }, ProductTruncNormal { locations: a1, sides: s1 }) => {
            same_len(a0.len(), a1.len())?;
            same_sides(s0, s1)?;
            Ok(a0.iter().zip(a1).zip(s0).map(|((&x, &y), &s)| kl_trunc(x, y, s)).sum())
        }
        (ProductTwoPoint { probs: u }, ProductTwoPoint { probs: v }) => {
            same_len(u.len(), v.len())?;
            Ok(u.iter().zip(v).map(|(&a, &b)| kl_two_point(a, b)).sum())
        }
        _ => Err(mismatch(q, p)),
    }
}

/// Symmetrized divergence `D_½(q || p) = (KL(q || p) + KL(p || q)) / 2`.
pub fn d_half(q: &BlockDensity, p: &BlockDensity) -> Result<f64> {
    use BlockDensity::*;
    match (q, p) {
        (UniNormal { mean: m0, precision: t0 }, UniNormal { mean: m1, precision: t1 }) => {
            Ok(d_half_uni_normal(*m0, *t0, *m1, *t1))
        }
        (MvNormal { mean: m0, precision: l0 }, MvNormal { mean: m1, precision: l1 }) => {
            same_len(m0.len(), m1.len())?;
            mvn_d_half(m0, l0, m1, l1)
        }
        (Gamma { shape: a0, rate: b0 }, Gamma { shape: a1, rate: b1 }) if a0 == a1 => {
            Ok(0.5 * a0 * (b1 - b0) * (b1 - b0) / (b0 * b1))
        }
        (TwoPoint { prob: u }, TwoPoint { prob: v }) => Ok(d_half_two_point(*u, *v)),
        (TruncNormal { location: a0, side: s0 }, TruncNormal { location: a1, side: s1 }) => {
            same_sides(&[*s0], &[*s1])?;
            Ok(d_half_trunc(*a0, *a1, *s0))
        }
        (ProductTruncNormal { locations: a0, sides: s0 }, ProductTruncNormal { locations: a1, sides: s1 }) => {
            same_len(a0.len(), a1.len())?;
            same_sides(s0, s1)?;
            Ok(a0.iter().zip(a1).zip(s0).map(|((&x, &y), &s)| d_half_trunc(x, y, s)).sum())
        }
        (ProductTwoPoint { probs: u }, ProductTwoPoint { probs: v }) => {
            same_len(u.len(), v.len())?;
            Ok(u.iter().zip(v).map(|(&a, &b)| d_half_two_point(a, b)).sum())
        }
        _ => Ok(0.5 * (kl(q, p)? + kl(p, q)?)),
    }
}

/// `α KL(q || p) + (1 - α) KL(p || q)` for `α ∈ [0, 1]`.
pub fn kl_weighted(q: &BlockDensity, p: &BlockDensity, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    if alpha == 0.5 {
        return d_half(q, p);
    }
    let mut total = 0.0;
    if alpha > 0.0 {
        total += alpha * kl(q, p)?;
    }
    if alpha < 1.0 {
        total += (1.0 - alpha) * kl(p, q)?;
    }
    Ok(total)
}

/// Total variation distance between two-point laws.
pub fn tv_distance(q: &BlockDensity, p: &BlockDensity) -> Result<f64> {
    match (q, p) {
        (BlockDensity::TwoPoint { prob: u }, BlockDensity::TwoPoint { prob: v }) => Ok((u - v).abs()),
        _ => Err(invalid("family", "total variation is implemented for two_point blocks only")),
    }
}
