use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::error::{invalid, Result};

fn default_kappa() -> f64 {
    1.0
}

fn default_tau0() -> f64 {
    1.0
}

/// Recipe for simulated data sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Gaussian design, `y_i = 1{x_i'β + ε_i > 0}`. With `orthogonal` the
    /// design is rescaled so that `X'X = n I`.
    Probit {
        n: usize,
        p: usize,
        #[serde(default)]
        beta_true: Option<Vec<f64>>,
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default)]
        orthogonal: bool,
    },
    /// Labels drawn with probability one half. With `truncate = Some(h)` the
    /// unit-variance noise is restricted to `[-h, h]`.
    Gmm2 {
        n: usize,
        mu_true: f64,
        #[serde(default = "default_tau0")]
        tau0: f64,
        #[serde(default)]
        truncate: Option<f64>,
    },
    GaussMeanPrec {
        n: usize,
        mu_true: f64,
        tau_true: f64,
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default)]
        a0: f64,
        #[serde(default)]
        b0: f64,
    },
}

fn noise<R: Rng>(rng: &mut R, truncate: Option<f64>) -> f64 {
    match truncate {
        None => rng.sample(StandardNormal),
        Some(h) => loop {
            let e: f64 = rng.sample(StandardNormal);
            if e.abs() <= h {
                break e;
            }
        },
    }
}

/// Simulates a data set and returns the resulting posterior model. The same
/// seed always gives the same model.
pub fn generate_data(spec: &DataSpec, seed: u64) -> Result<ModelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = match spec {
        DataSpec::Probit { n, p, beta_true, kappa, orthogonal } => {
            let (n, p) = (*n, *p);
            if n == 0 || p == 0 {
                return Err(invalid("n", "probit data needs n >= 1 and p >= 1"));
            }
            if *orthogonal && n < p {
                return Err(invalid("orthogonal", format!("need n >= p, got n = {n}, p = {p}")));
            }
            let beta = match beta_true {
                Some(b) if b.len() == p => b.clone(),
                Some(b) => return Err(invalid("beta_true", format!("has {} entries, expected {p}", b.len()))),
                None => (0..p).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect(),
            };
            let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            if *orthogonal {
                let q = x.clone().qr().q();
                x = q * (n as f64).sqrt();
            }
            let y = (0..n)
                .map(|i| {
                    let eta: f64 = (0..p).map(|k| x[(i, k)] * beta[k]).sum();
                    let e: f64 = rng.sample(StandardNormal);
                    u8::from(eta + e > 0.0)
                })
                .collect();
            ModelSpec::Probit { x, y, kappa: *kappa }
        }
        DataSpec::Gmm2 { n, mu_true, tau0, truncate } => {
            if let Some(h) = truncate {
                if !(*h > 0.0) {
                    return Err(invalid("truncate", format!("must be positive, got {h}")));
                }
            }
            let x = (0..*n)
                .map(|_| {
                    let center = if rng.random::<bool>() { *mu_true } else { 0.0 };
                    center + noise(&mut rng, *truncate)
                })
                .collect();
            ModelSpec::Gmm2 { x, tau0: *tau0 }
        }
        DataSpec::GaussMeanPrec { n, mu_true, tau_true, kappa, a0, b0 } => {
            if !(*tau_true > 0.0) {
                return Err(invalid("tau_true", format!("must be positive, got {tau_true}")));
            }
            let dist = Normal::new(*mu_true, 1.0 / tau_true.sqrt()).map_err(|e| invalid("mu_true", e.to_string()))?;
            let x = (0..*n).map(|_| dist.sample(&mut rng)).collect();
            ModelSpec::GaussMeanPrec { x, kappa: *kappa, a0: *a0, b0: *b0 }
        }
    };
    model.validate()?;
    Ok(model)
}
