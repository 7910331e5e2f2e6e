//! Coordinate ascent variational inference (CAVI) on a set of reference
//! targets, with tools for measuring and certifying how fast the iterates
//! contract towards the optimum.
//!
//! Progress is measured in the symmetrized divergence `D_½` between each
//! block and its optimal value. The crate is split into:
//!
//! - [`divergences`]: block families, closed-form KL divergences, special functions;
//! - [`models`]: targets, exact block updates, optima and interaction terms;
//! - [`scheduler`]: parallel, sequential, randomized and lazy schedules;
//! - [`analysis`]: correlation bounds, contraction factors and verdicts;
//! - [`harness`]: JSON-configured experiments, CSV/JSON outputs and sweeps.

pub mod analysis;
pub mod divergences;
pub mod error;
pub mod exec;
pub mod harness;
mod linalg;
pub mod models;
pub mod scheduler;

pub use error::{CaviError, Result};
pub use exec::Execution;
