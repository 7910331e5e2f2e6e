//! Brute-force reference computations used to check closed-form results.
//!
//! Nothing in here shares code with `cavi-core`. Densities are normalized
//! numerically, divergences come from adaptive quadrature or exhaustive
//! enumeration, and special functions are recomputed from their integral
//! definitions.

mod density;
mod discrete;
mod quad;
mod special;

pub use density::{quad_delta, quad_kl, quad_kl_weighted, Density, Domain};
pub use discrete::{enumerate_two_by_two, DiscreteEnumeration};
pub use quad::{integrate, Estimate, QuadSpec};
pub use special::{hazard_quad, lambert_w0_bisect, mvn_kl_eigen, normal_tail_quad};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("quadrature did not reach tolerance: value {value}, error estimate {error}")]
    NotConverged { value: f64, error: f64 },
    #[error("integrand produced a non-finite value at x = {0}")]
    NonFinite(f64),
    #[error("invalid oracle input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;
