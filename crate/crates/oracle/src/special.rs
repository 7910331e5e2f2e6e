use nalgebra::{DMatrix, DVector};

use crate::density::Domain;
use crate::quad::QuadSpec;
use crate::{OracleError, Result};

fn mills_integral(t: f64) -> Result<f64> {
    let scale = if t < 0.0 { -t + 1.0 } else { 1.0 / (1.0 + t) };
    Domain::Positive { scale, spread: 2.0 }.integrate(|y| (-t * y - 0.5 * y * y).exp(), &QuadSpec::default())
}

/// Upper normal tail `1 - Φ(t)` from its integral definition.
pub fn normal_tail_quad(t: f64) -> Result<f64> {
    let phi = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(phi * mills_integral(t)?)
}

/// Normal hazard `φ(t) / (1 - Φ(t))` computed as the reciprocal of the Mills
/// ratio integral. Intended for `t >= -8`.
pub fn hazard_quad(t: f64) -> Result<f64> {
    Ok(1.0 / mills_integral(t)?)
}

/// Principal branch of Lambert W by plain bisection on `w e^w = x`.
pub fn lambert_w0_bisect(x: f64) -> Result<f64> {
    let e_inv = (-1.0f64).exp();
    if !(x >= -e_inv) || !x.is_finite() {
        return Err(OracleError::Invalid(format!("lambert argument {x} out of range")));
    }
    let (mut lo, mut hi) = if x < 0.0 { (-1.0, 0.0) } else { (0.0, x.ln_1p().max(1e-300)) };
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mid * mid.exp() < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(OracleError::Invalid("matrix is not positive definite".into()));
    }
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * root * eig.eigenvectors.transpose())
}

/// `KL(N(m0, Λ0⁻¹) || N(m1, Λ1⁻¹))` through the eigenvalues of
/// `Λ1^{1/2} Λ0⁻¹ Λ1^{1/2}`.
pub fn mvn_kl_eigen(
    m0: &DVector<f64>,
    precision0: &DMatrix<f64>,
    m1: &DVector<f64>,
    precision1: &DMatrix<f64>,
) -> Result<f64> {
    let cov0 = precision0
        .clone()
        .try_inverse()
        .ok_or_else(|| OracleError::Invalid("singular precision".into()))?;
    let root = sym_sqrt(precision1)?;
    let inner = &root * cov0 * &root;
    let inner = 0.5 * (&inner + inner.transpose());
    let trace_term: f64 = inner
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&l| l - l.ln() - 1.0)
        .sum();
    let d = m1 - m0;
    Ok(0.5 * (trace_term + (d.transpose() * precision1 * &d)[(0, 0)]))
}
