use std::cell::RefCell;

use crate::quad::{integrate, QuadSpec};
use crate::{OracleError, Result};

const EDGE: f64 = 1e-12;

/// Support of a univariate density together with the change of variables used
/// to map it onto `(-1, 1)`.
#[derive(Clone, Copy, Debug)]
pub enum Domain {
    /// Whole line, `x = center + scale * atanh(u)`.
    Real { center: f64, scale: f64 },
    /// `x > 0`, `x = exp(ln(scale) + spread * atanh(u))`.
    Positive { scale: f64, spread: f64 },
    /// `x < 0`, mirror image of `Positive`.
    Negative { scale: f64, spread: f64 },
    /// Finite interval, no transform.
    Interval { a: f64, b: f64 },
}

impl Domain {
    fn bounds(&self) -> (f64, f64) {
        match self {
            Domain::Interval { a, b } => (*a, *b),
            _ => (-1.0 + EDGE, 1.0 - EDGE),
        }
    }

    /// Maps a point of the integration variable to `(x, dx/du)`.
    fn map(&self, u: f64) -> (f64, f64) {
        match *self {
            Domain::Real { center, scale } => (center + scale * u.atanh(), scale / (1.0 - u * u)),
            Domain::Positive { scale, spread } => {
                let x = (scale.ln() + spread * u.atanh()).exp();
                (x, x * spread / (1.0 - u * u))
            }
            Domain::Negative { scale, spread } => {
                let x = (scale.ln() + spread * u.atanh()).exp();
                (-x, x * spread / (1.0 - u * u))
            }
            Domain::Interval { .. } => (u, 1.0),
        }
    }

    /// Integral of `f` over the domain.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, spec: &QuadSpec) -> Result<f64> {
        let (a, b) = self.bounds();
        let g = |u: f64| {
            let (x, jac) = self.map(u);
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v * jac
            }
        };
        integrate(g, a, b, spec).map(|e| e.value)
    }

    fn grid_max<F: Fn(f64) -> f64>(&self, f: &F) -> f64 {
        let (a, b) = self.bounds();
        let n = 4000;
        (0..=n)
            .map(|i| f(self.map(a + (b - a) * i as f64 / n as f64).0))
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

type LogFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A univariate density given by an unnormalized log-density whose normalizing
/// constant is found by quadrature.
pub struct Density {
    ln_f: LogFn,
    ln_z: f64,
    pub domain: Domain,
}

impl Density {
    pub fn from_log_unnormalized<F>(ln_f: F, domain: Domain, spec: &QuadSpec) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let shift = domain.grid_max(&ln_f);
        if !shift.is_finite() {
            return Err(OracleError::Invalid("log-density is -inf on the whole grid".into()));
        }
        let z = domain.integrate(|x| (ln_f(x) - shift).exp(), spec)?;
        if !(z > 0.0) {
            return Err(OracleError::Invalid("density has zero mass".into()));
        }
        Ok(Self {
            ln_f: Box::new(ln_f),
            ln_z: z.ln() + shift,
            domain,
        })
    }

    pub fn normal(mean: f64, precision: f64) -> Result<Self> {
        Self::from_log_unnormalized(
            move |x| -0.5 * precision * (x - mean) * (x - mean),
            Domain::Real { center: mean, scale: 1.0 / precision.sqrt() },
            &QuadSpec::default(),
        )
    }

    /// Gamma density. In the `ln x` coordinate the lower tail decays like
    /// `x^shape`, so the spread grows for small shapes to keep the transformed
    /// integrand bounded at the endpoint.
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::from_log_unnormalized(
            move |x| (shape - 1.0) * x.ln() - rate * x,
            Domain::Positive {
                scale: shape / rate,
                spread: (4.0 / shape).max(3.0),
            },
            &QuadSpec::default(),
        )
    }

    /// Unit-variance normal with location `loc` restricted to `x > 0`
    /// (`positive`) or `x < 0`.
    pub fn trunc_normal(loc: f64, positive: bool) -> Result<Self> {
        let a = if positive { loc } else { -loc };
        let scale = if a > 1.0 { a } else { 1.0 / (2.0 - a) };
        let domain = if positive {
            Domain::Positive { scale, spread: 2.0 }
        } else {
            Domain::Negative { scale, spread: 2.0 }
        };
        Self::from_log_unnormalized(move |x| -0.5 * (x - loc) * (x - loc), domain, &QuadSpec::default())
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        (self.ln_f)(x) - self.ln_z
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G, spec: &QuadSpec) -> Result<f64> {
        self.domain.integrate(|x| self.pdf(x) * g(x), spec)
    }
}

/// `KL(p || q)` by quadrature over the support of `p`.
pub fn quad_kl(p: &Density, q: &Density, spec: &QuadSpec) -> Result<f64> {
    p.domain.integrate(
        |x| {
            let lp = p.ln_pdf(x);
            let w = lp.exp();
            if w == 0.0 {
                0.0
            } else {
                w * (lp - q.ln_pdf(x))
            }
        },
        spec,
    )
}

/// `alpha * KL(q || p) + (1 - alpha) * KL(p || q)`.
pub fn quad_kl_weighted(q: &Density, p: &Density, alpha: f64, spec: &QuadSpec) -> Result<f64> {
    let mut total = 0.0;
    if alpha != 0.0 {
        total += alpha * quad_kl(q, p, spec)?;
    }
    if alpha != 1.0 {
        total += (1.0 - alpha) * quad_kl(p, q, spec)?;
    }
    Ok(total)
}

/// `∫∫ a(x1) b(x2) ln π(x1, x2)` by nested quadrature.
fn nested_expectation<F>(ln_target: &F, a: (&Density, Domain), b: (&Density, Domain), spec: &QuadSpec) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let inner_spec = QuadSpec {
        abs_tol: spec.abs_tol * 1e-2,
        rel_tol: spec.rel_tol * 1e-2,
        ..*spec
    };
    let failure = RefCell::new(None);
    let outer = a.1.integrate(
        |x1| {
            let w = a.0.pdf(x1);
            if w == 0.0 {
                return 0.0;
            }
            match b.1.integrate(|x2| b.0.pdf(x2) * ln_target(x1, x2), &inner_spec) {
                Ok(v) => w * v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        },
        spec,
    );
    let outer = outer?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(outer),
    }
}

/// Interaction term `∫∫ (q1 - q1*)(q2 - q2*) ln π`, expanded into four
/// expectations under product densities.
///
/// `ln_target` may be unnormalized. Each domain must cover the mass of both
/// densities it is paired with.
pub fn quad_delta<F>(
    ln_target: F,
    first: (&Density, &Density, Domain),
    second: (&Density, &Density, Domain),
    spec: &QuadSpec,
) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let (q1, q1s, d1) = first;
    let (q2, q2s, d2) = second;
    let e = |a: &Density, b: &Density| nested_expectation(&ln_target, (a, d1), (b, d2), spec);
    Ok((e(q1, q2)? - e(q1, q2s)?) - (e(q1s, q2)? - e(q1s, q2s)?))
}
