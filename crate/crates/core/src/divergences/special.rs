//! Scalar special functions shared by the divergence and model code.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

use crate::error::{invalid, Result};

const CF_SWITCH: f64 = 3.0;
const CF_TERMS: usize = 120;

/// Scaled complementary error function `exp(x²) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < CF_SWITCH {
        if x < -26.7 {
            return f64::INFINITY;
        }
        return (x * x).exp() * erfc(x);
    }
    // Laplace continued fraction, evaluated from the tail.
    let mut t = x;
    for k in (1..=CF_TERMS).rev() {
        t = x + 0.5 * k as f64 / t;
    }
    1.0 / (PI.sqrt() * t)
}

/// Standard normal density.
pub fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// `ln Φ(a)` without cancellation in either tail.
pub fn ln_normal_cdf(a: f64) -> f64 {
    if a < 0.0 {
        (0.5 * erfcx(-a * FRAC_1_SQRT_2)).ln() - 0.5 * a * a
    } else {
        (-0.5 * erfc(a * FRAC_1_SQRT_2)).ln_1p()
    }
}

/// Normal hazard `H(t) = φ(t) / (1 - Φ(t))`.
///
/// Stays finite and monotone for large positive `t`, where it behaves like `t`.
pub fn hazard(t: f64) -> f64 {
    if t <= 0.0 {
        normal_pdf(t) / (0.5 * erfc(t * FRAC_1_SQRT_2))
    } else {
        (2.0 / PI).sqrt() / erfcx(t * FRAC_1_SQRT_2)
    }
}

/// Derivative of the hazard, `H(t) (H(t) - t)`, which lies in `(0, 1)`.
pub fn hazard_derivative(t: f64) -> f64 {
    let h = hazard(t);
    h * (h - t)
}

pub fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Lambert `W0(x)` for `x >= 0`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(invalid("x", format!("lambert W0 needs x >= 0, got {x}")));
    }
    lambert_w0_principal(x)
}

/// Principal branch `W0` of the Lambert W function for `x >= -1/e`.
///
/// Halley iteration, stopped once `|w e^w - x| <= 1e-12 * max(1, |x|)` and the
/// step has stalled.
pub fn lambert_w0_principal(x: f64) -> Result<f64> {
    let branch_point = -(-1.0f64).exp();
    if !x.is_finite() || x < branch_point {
        return Err(invalid("x", format!("lambert W0 needs finite x >= -1/e, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == branch_point {
        return Ok(-1.0);
    }
    let mut w = if x < -0.25 {
        // Series about the branch point.
        let p = (2.0 * (1.0 + std::f64::consts::E * x)).sqrt();
        -1.0 + p - p * p / 3.0
    } else if x < std::f64::consts::E {
        x.ln_1p() * 0.8
    } else {
        let l = x.ln();
        l - l.ln()
    };
    let tol = 1e-12 * x.abs().max(1.0);
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(1e-300) && (w * w.exp() - x).abs() <= tol {
            break;
        }
    }
    let residual = (w * w.exp() - x).abs();
    if residual > tol || !w.is_finite() {
        return Err(crate::error::CaviError::Numerical(format!(
            "lambert W0({x}) residual {residual:e}"
        )));
    }
    Ok(w)
}
