//! Randomized comparisons of the closed forms in `cavi-core` against the
//! brute-force routines in `cavi-oracle`, plus the inequality checks the
//! contraction arguments lean on.

use cavi_core::divergences::special::{hazard_derivative, lambert_w0};
use cavi_core::divergences::{d_half, hazard, kl, kl_weighted, tv_distance, BlockDensity, Side};
use cavi_core::models::{delta_n, MeanFieldState, ModelSpec};
use cavi_core::Execution;
use cavi_oracle::{
    enumerate_two_by_two, lambert_w0_bisect, mvn_kl_eigen, quad_delta, quad_kl, quad_kl_weighted, Density, Domain,
    QuadSpec,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const REL_TOL: f64 = 1e-6;
pub const ABS_TOL: f64 = 1e-8;
pub const DEFAULT_PAIRS: usize = 200;

/// Tolerances for the two-dimensional interaction quadratures.
const NESTED: QuadSpec = QuadSpec {
    abs_tol: 1e-12,
    rel_tol: 1e-10,
    max_segments: 4000,
    initial_segments: 16,
};

type Fallible<T> = std::result::Result<T, String>;

/// Outcome of one named check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest error seen, in units of the allowed tolerance for comparisons
    /// and as the largest violation margin for inequalities.
    pub worst: f64,
    pub first_failure: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures == 0
    }
}

struct Tally {
    result: CheckResult,
}

impl Tally {
    fn new(name: &str) -> Self {
        Self {
            result: CheckResult {
                name: name.to_string(),
                cases: 0,
                failures: 0,
                worst: 0.0,
                first_failure: None,
            },
        }
    }

    fn fail(&mut self, msg: String) {
        self.result.failures += 1;
        self.result.first_failure.get_or_insert(msg);
    }

    /// Runs one case; `case` returns the failure message, if any.
    fn case(&mut self, case: impl FnOnce(&mut f64) -> Fallible<Option<String>>) {
        self.result.cases += 1;
        let mut worst = 0.0;
        match case(&mut worst) {
            Ok(None) => {}
            Ok(Some(msg)) => self.fail(msg),
            Err(e) => self.fail(format!("case {}: {e}", self.result.cases)),
        }
        if worst.is_nan() {
            worst = f64::INFINITY;
        }
        self.result.worst = self.result.worst.max(worst);
    }

    fn finish(self) -> CheckResult {
        self.result
    }
}

/// Error of `got` against `want` in tolerance units; at most 1 passes.
fn score(got: f64, want: f64) -> f64 {
    let err = (got - want).abs();
    if err.is_nan() {
        return f64::INFINITY;
    }
    err / (REL_TOL * want.abs()).max(ABS_TOL)
}

/// Compares each `(label, got, want)` triple and reports the first mismatch.
fn compare(worst: &mut f64, items: &[(&str, f64, f64)]) -> Option<String> {
    let mut msg = None;
    for &(label, got, want) in items {
        let s = score(got, want);
        *worst = worst.max(s);
        if !(s <= 1.0) && msg.is_none() {
            msg = Some(format!("{label}: closed form {got:e}, oracle {want:e}"));
        }
    }
    msg
}

fn core<T>(r: cavi_core::Result<T>) -> Fallible<T> {
    r.map_err(|e| e.to_string())
}

fn oracle<T>(r: cavi_oracle::Result<T>) -> Fallible<T> {
    r.map_err(|e| format!("oracle: {e}"))
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo..hi))
}

fn random_side(rng: &mut ChaCha8Rng) -> Side {
    if rng.random::<bool>() {
        Side::Positive
    } else {
        Side::Negative
    }
}

fn spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.5
}

fn oracle_density(b: &BlockDensity) -> Fallible<Density> {
    match b {
        BlockDensity::UniNormal { mean, precision } => oracle(Density::normal(*mean, *precision)),
        BlockDensity::Gamma { shape, rate } => oracle(Density::gamma(*shape, *rate)),
        BlockDensity::TruncNormal { location, side } => oracle(Density::trunc_normal(*location, *side == Side::Positive)),
        other => Err(format!("no quadrature density for {}", other.family_name())),
    }
}

/// Compares `kl` in both directions, a random weighted divergence and `d_half`
/// against quadrature for a pair of univariate continuous densities.
fn quadrature_pair(worst: &mut f64, q: &BlockDensity, p: &BlockDensity, alpha: f64) -> Fallible<Option<String>> {
    let spec = QuadSpec::default();
    let (oq, op) = (oracle_density(q)?, oracle_density(p)?);
    let pair = |msg: String| format!("{msg} for q = {q:?}, p = {p:?}");
    Ok(compare(
        worst,
        &[
            ("kl(q, p)", core(kl(q, p))?, oracle(quad_kl(&oq, &op, &spec))?),
            ("kl(p, q)", core(kl(p, q))?, oracle(quad_kl(&op, &oq, &spec))?),
            (
                "kl_weighted",
                core(kl_weighted(q, p, alpha))?,
                oracle(quad_kl_weighted(&oq, &op, alpha, &spec))?,
            ),
            ("d_half", core(d_half(q, p))?, oracle(quad_kl_weighted(&oq, &op, 0.5, &spec))?),
        ],
    )
    .map(pair))
}

/// Same as [`quadrature_pair`] with precomputed oracle values.
fn weighted_against(
    worst: &mut f64,
    q: &BlockDensity,
    p: &BlockDensity,
    alpha: f64,
    forward: f64,
    backward: f64,
) -> Fallible<Option<String>> {
    Ok(compare(
        worst,
        &[
            ("kl(q, p)", core(kl(q, p))?, forward),
            ("kl(p, q)", core(kl(p, q))?, backward),
            (
                "kl_weighted",
                core(kl_weighted(q, p, alpha))?,
                alpha * forward + (1.0 - alpha) * backward,
            ),
            ("d_half", core(d_half(q, p))?, 0.5 * (forward + backward)),
        ],
    ))
}

fn kl_uni_normal(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("kl/uni_normal");
    for _ in 0..pairs {
        let (m0, m1) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (t0, t1) = (log_uniform(rng, -1.0, 1.0), log_uniform(rng, -1.0, 1.0));
        let alpha = rng.random::<f64>();
        t.case(|w| {
            let q = core(BlockDensity::uni_normal(m0, t0))?;
            let p = core(BlockDensity::uni_normal(m1, t1))?;
            quadrature_pair(w, &q, &p, alpha)
        });
    }
    t.finish()
}

fn kl_gamma(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("kl/gamma");
    for _ in 0..pairs {
        let (a0, a1) = (log_uniform(rng, -0.3, 1.5), log_uniform(rng, -0.3, 1.5));
        let (b0, b1) = (log_uniform(rng, -1.0, 1.0), log_uniform(rng, -1.0, 1.0));
        let alpha = rng.random::<f64>();
        t.case(|w| {
            let q = core(BlockDensity::gamma(a0, b0))?;
            let p = core(BlockDensity::gamma(a1, b1))?;
            quadrature_pair(w, &q, &p, alpha)
        });
    }
    t.finish()
}

fn kl_trunc_normal(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("kl/trunc_normal");
    for _ in 0..pairs {
        let (a0, a1) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let side = random_side(rng);
        let alpha = rng.random::<f64>();
        t.case(|w| {
            let q = core(BlockDensity::trunc_normal(a0, side))?;
            let p = core(BlockDensity::trunc_normal(a1, side))?;
            quadrature_pair(w, &q, &p, alpha)
        });
    }
    t.finish()
}

fn kl_two_point(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("kl/two_point");
    for _ in 0..pairs {
        let (u0, u1) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
        let alpha = rng.random::<f64>();
        t.case(|w| {
            let q = core(BlockDensity::two_point(u0))?;
            let p = core(BlockDensity::two_point(u1))?;
            let e = enumerate_two_by_two(0.5, u0, u1, 0.5, 0.5);
            weighted_against(w, &q, &p, alpha, e.kl_first.0, e.kl_first.1)
        });
    }
    t.finish()
}

fn kl_mv_normal(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("kl/mv_normal");
    for _ in 0..pairs {
        let d = rng.random_range(2..=4);
        let m0 = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
        let m1 = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
        let (l0, l1) = (spd(rng, d), spd(rng, d));
        let alpha = rng.random::<f64>();
        t.case(|w| {
            let forward = oracle(mvn_kl_eigen(&m0, &l0, &m1, &l1))?;
            let backward = oracle(mvn_kl_eigen(&m1, &l1, &m0, &l0))?;
            let q = core(BlockDensity::mv_normal(m0.clone(), l0.clone()))?;
            let p = core(BlockDensity::mv_normal(m1.clone(), l1.clone()))?;
            weighted_against(w, &q, &p, alpha, forward, backward)
        });
    }
    t.finish()
}

fn kl_product_trunc_normal(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("kl/product_trunc_normal");
    let spec = QuadSpec::default();
    for _ in 0..pairs {
        let k = rng.random_range(1..=4);
        let sides: Vec<Side> = (0..k).map(|_| random_side(rng)).collect();
        let a0: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
        let a1: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
        let alpha = rng.random::<f64>();
        t.case(|w| {
            let (mut forward, mut backward) = (0.0, 0.0);
            for i in 0..k {
                let positive = sides[i] == Side::Positive;
                let oq = oracle(Density::trunc_normal(a0[i], positive))?;
                let op = oracle(Density::trunc_normal(a1[i], positive))?;
                forward += oracle(quad_kl(&oq, &op, &spec))?;
                backward += oracle(quad_kl(&op, &oq, &spec))?;
            }
            let q = core(BlockDensity::product_trunc_normal(a0.clone(), sides.clone()))?;
            let p = core(BlockDensity::product_trunc_normal(a1.clone(), sides.clone()))?;
            weighted_against(w, &q, &p, alpha, forward, backward)
        });
    }
    t.finish()
}

fn kl_product_two_point(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("kl/product_two_point");
    for _ in 0..pairs {
        let k = rng.random_range(1..=6);
        let u0: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..0.99)).collect();
        let u1: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..0.99)).collect();
        let alpha = rng.random::<f64>();
        t.case(|w| {
            let (mut forward, mut backward) = (0.0, 0.0);
            for i in 0..k {
                let e = enumerate_two_by_two(0.5, u0[i], u1[i], 0.5, 0.5);
                forward += e.kl_first.0;
                backward += e.kl_first.1;
            }
            let q = core(BlockDensity::product_two_point(u0.clone()))?;
            let p = core(BlockDensity::product_two_point(u1.clone()))?;
            weighted_against(w, &q, &p, alpha, forward, backward)
        });
    }
    t.finish()
}

fn two_point_state(a: f64, b: f64) -> Fallible<MeanFieldState> {
    Ok(MeanFieldState::new(vec![
        core(BlockDensity::two_point(a))?,
        core(BlockDensity::two_point(b))?,
    ]))
}

fn delta_discrete(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("delta/discrete2d");
    for _ in 0..pairs {
        let p = rng.random_range(0.02..0.98);
        let u: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.01..0.99));
        t.case(|w| {
            let model = ModelSpec::Discrete2d { p };
            let q = two_point_state(u[0], u[1])?;
            let qs = two_point_state(u[2], u[3])?;
            let e = enumerate_two_by_two(p, u[0], u[2], u[1], u[3]);
            Ok(compare(w, &[("delta", core(delta_n(&model, &q, &qs))?, e.delta)]))
        });
    }
    t.finish()
}

fn normal_domain(a: (f64, f64), b: (f64, f64)) -> Domain {
    let sd = (1.0 / a.1.sqrt()).max(1.0 / b.1.sqrt());
    Domain::Real {
        center: 0.5 * (a.0 + b.0),
        scale: sd + 0.5 * (a.0 - b.0).abs(),
    }
}

fn random_normal(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.random_range(-2.0..2.0), log_uniform(rng, -0.5, 0.5))
}

fn normal_state(a: (f64, f64), b: (f64, f64)) -> Fallible<MeanFieldState> {
    Ok(MeanFieldState::new(vec![
        core(BlockDensity::uni_normal(a.0, a.1))?,
        core(BlockDensity::uni_normal(b.0, b.1))?,
    ]))
}

/// Nested quadrature of the interaction term for two scalar normal blocks.
fn normal_delta(ln_target: impl Fn(f64, f64) -> f64, q: [(f64, f64); 2], qs: [(f64, f64); 2]) -> Fallible<f64> {
    let d = |b: (f64, f64)| oracle(Density::normal(b.0, b.1));
    let (q1, q1s, q2, q2s) = (d(q[0])?, d(qs[0])?, d(q[1])?, d(qs[1])?);
    oracle(quad_delta(
        ln_target,
        (&q1, &q1s, normal_domain(q[0], qs[0])),
        (&q2, &q2s, normal_domain(q[1], qs[1])),
        &NESTED,
    ))
}

fn delta_gaussian_blocks(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("delta/gaussian_blocks");
    for _ in 0..pairs {
        let q = spd(rng, 2);
        let theta0 = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let (a, b, c, d) = (random_normal(rng), random_normal(rng), random_normal(rng), random_normal(rng));
        t.case(|w| {
            let model = ModelSpec::GaussianBlocks {
                theta0: theta0.clone(),
                q: q.clone(),
                partition: vec![1, 1],
                n_scale: 1.0,
            };
            let got = core(delta_n(&model, &normal_state(a, b)?, &normal_state(c, d)?))?;
            let target = |x: f64, y: f64| {
                let (u, v) = (x - theta0[0], y - theta0[1]);
                -0.5 * (q[(0, 0)] * u * u + 2.0 * q[(0, 1)] * u * v + q[(1, 1)] * v * v)
            };
            Ok(compare(w, &[("delta", got, normal_delta(target, [a, b], [c, d])?)]))
        });
    }
    t.finish()
}

fn delta_gauss_conditionals(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("delta/gauss_conditionals");
    for _ in 0..pairs {
        let (a, b, c, d) = (random_normal(rng), random_normal(rng), random_normal(rng), random_normal(rng));
        t.case(|w| {
            let got = core(delta_n(&ModelSpec::GaussConditionals, &normal_state(a, b)?, &normal_state(c, d)?))?;
            let target = |x: f64, y: f64| -0.5 * (x * x + y * y + x * x * y * y);
            Ok(compare(w, &[("delta", got, normal_delta(target, [a, b], [c, d])?)]))
        });
    }
    t.finish()
}

fn delta_gauss_mean_prec(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("delta/gauss_mean_prec");
    for _ in 0..pairs {
        let n = rng.random_range(3..=12);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..3.0)).collect();
        let (kappa, a0, b0) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let (mu, mus) = (random_normal(rng), random_normal(rng));
        let shape = 0.5 * n as f64 + a0;
        let (r, rs) = (shape * log_uniform(rng, -0.5, 0.5), shape * log_uniform(rng, -0.5, 0.5));
        t.case(|w| {
            let model = ModelSpec::GaussMeanPrec {
                x: x.clone(),
                kappa,
                a0,
                b0,
            };
            let state = |m: (f64, f64), rate: f64| -> Fallible<MeanFieldState> {
                Ok(MeanFieldState::new(vec![
                    core(BlockDensity::uni_normal(m.0, m.1))?,
                    core(BlockDensity::gamma(shape, rate))?,
                ]))
            };
            let got = core(delta_n(&model, &state(mu, r)?, &state(mus, rs)?))?;
            let nf = n as f64;
            let target = |m: f64, tau: f64| {
                let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
                (0.5 * nf + a0 - 1.0) * tau.ln() - tau * (b0 + 0.5 * ss) - 0.5 * kappa * m * m
            };
            let (q1, q1s) = (oracle(Density::normal(mu.0, mu.1))?, oracle(Density::normal(mus.0, mus.1))?);
            let (q2, q2s) = (oracle(Density::gamma(shape, r))?, oracle(Density::gamma(shape, rs))?);
            let tau_domain = Domain::Positive {
                scale: shape / (r * rs).sqrt(),
                spread: 3.0 + 0.5 * (r / rs).ln().abs(),
            };
            let want = oracle(quad_delta(
                target,
                (&q1, &q1s, normal_domain(mu, mus)),
                (&q2, &q2s, tau_domain),
                &NESTED,
            ))?;
            Ok(compare(w, &[("delta", got, want)]))
        });
    }
    t.finish()
}

/// The log-target is affine in each label, so the double integral splits into
/// one quadrature over `μ` per observation.
fn delta_gmm2(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("delta/gmm2");
    let spec = QuadSpec::default();
    for _ in 0..pairs {
        let n = rng.random_range(1..=5);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..6.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let ps: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let (mu, mus) = (random_normal(rng), random_normal(rng));
        t.case(|w| {
            let model = ModelSpec::Gmm2 { x: x.clone(), tau0: 1.0 };
            let state = |m: (f64, f64), probs: &[f64]| -> Fallible<MeanFieldState> {
                Ok(MeanFieldState::new(vec![
                    core(BlockDensity::uni_normal(m.0, m.1))?,
                    core(BlockDensity::product_two_point(probs.to_vec()))?,
                ]))
            };
            let got = core(delta_n(&model, &state(mu, &p)?, &state(mus, &ps)?))?;
            let (q, qs) = (oracle(Density::normal(mu.0, mu.1))?, oracle(Density::normal(mus.0, mus.1))?);
            let mut want = 0.0;
            for i in 0..n {
                let xi = x[i];
                let gain = |m: f64| -0.5 * (xi - m) * (xi - m) + 0.5 * xi * xi;
                let inner = oracle(normal_domain(mu, mus).integrate(|m| (q.pdf(m) - qs.pdf(m)) * gain(m), &spec))?;
                want += (p[i] - ps[i]) * inner;
            }
            Ok(compare(w, &[("delta", got, want)]))
        });
    }
    t.finish()
}

/// Only the cross term `z'Xβ` of the log-target survives, so the oracle needs
/// the truncated-normal means, taken here by quadrature.
fn delta_probit(rng: &mut ChaCha8Rng, pairs: usize) -> CheckResult {
    let mut t = Tally::new("delta/probit");
    let spec = QuadSpec::default();
    for _ in 0..pairs {
        let (n, k) = (rng.random_range(1..=4), 2);
        let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.5..1.5));
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let (b, bs) = (
            DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0)),
            DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0)),
        );
        let (z, zs): (Vec<f64>, Vec<f64>) = (0..n).map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).unzip();
        let prec = spd(rng, k);
        t.case(|w| {
            let sides: Vec<Side> = y.iter().map(|&v| if v == 1 { Side::Positive } else { Side::Negative }).collect();
            let model = ModelSpec::Probit {
                x: x.clone(),
                y: y.clone(),
                kappa: 1.0,
            };
            let state = |m: &DVector<f64>, loc: &[f64]| -> Fallible<MeanFieldState> {
                Ok(MeanFieldState::new(vec![
                    core(BlockDensity::mv_normal(m.clone(), prec.clone()))?,
                    core(BlockDensity::product_trunc_normal(loc.to_vec(), sides.clone()))?,
                ]))
            };
            let got = core(delta_n(&model, &state(&b, &z)?, &state(&bs, &zs)?))?;
            let shift = &x * (&b - &bs);
            let mut want = 0.0;
            for i in 0..n {
                let positive = y[i] == 1;
                let m = oracle(oracle(Density::trunc_normal(z[i], positive))?.expectation(|v| v, &spec))?;
                let ms = oracle(oracle(Density::trunc_normal(zs[i], positive))?.expectation(|v| v, &spec))?;
                want += (m - ms) * shift[i];
            }
            Ok(compare(w, &[("delta", got, want)]))
        });
    }
    t.finish()
}

/// Closed-form divergences and interaction terms against the oracles, `pairs`
/// random parameter pairs per family.
pub fn divergence_suite(pairs: usize, seed: u64) -> Vec<CheckResult> {
    let checks: [fn(&mut ChaCha8Rng, usize) -> CheckResult; 13] = [
        kl_uni_normal,
        kl_gamma,
        kl_trunc_normal,
        kl_two_point,
        kl_mv_normal,
        kl_product_trunc_normal,
        kl_product_two_point,
        delta_discrete,
        delta_gaussian_blocks,
        delta_gauss_conditionals,
        delta_gauss_mean_prec,
        delta_gmm2,
        delta_probit,
    ];
    let indexed: Vec<(u64, fn(&mut ChaCha8Rng, usize) -> CheckResult)> =
        checks.iter().enumerate().map(|(i, c)| (i as u64, *c)).collect();
    Execution::default().map(&indexed, |&(i, check)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i + 1)));
        check(&mut rng, pairs)
    })
}

/// Records `margin` as a violation when it is positive.
fn violation(worst: &mut f64, margin: f64, msg: impl FnOnce() -> String) -> Option<String> {
    *worst = worst.max(margin);
    if margin > 0.0 || margin.is_nan() {
        Some(msg())
    } else {
        None
    }
}

fn pinsker(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut t = Tally::new("pinsker/two_point");
    let mut inputs = vec![(0.7, 0.5)];
    inputs.extend((0..1000).map(|_| (rng.random_range(0.001..0.999), rng.random_range(0.001..0.999))));
    for (a, b) in inputs {
        t.case(|w| {
            let (p, q) = (core(BlockDensity::two_point(a))?, core(BlockDensity::two_point(b))?);
            let tv = core(tv_distance(&p, &q))?;
            let least = core(kl(&p, &q))?.min(core(kl(&q, &p))?);
            Ok(violation(w, 2.0 * tv * tv - least, || {
                format!("({a}, {b}): 2 tv^2 = {:e} > kl = {least:e}", 2.0 * tv * tv)
            }))
        });
    }
    t.finish()
}

fn transport(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut t = Tally::new("transport/uni_normal");
    for _ in 0..1000 {
        let (m, mq) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let tau = log_uniform(rng, -1.0, 1.0);
        let tau_q = tau * log_uniform(rng, 0.0, 1.0);
        t.case(|w| {
            let p = core(BlockDensity::uni_normal(m, tau))?;
            let q = core(BlockDensity::uni_normal(mq, tau_q))?;
            let bound = (2.0 / tau * core(kl(&q, &p))?).sqrt();
            let gap = (mq - m).abs();
            Ok(violation(w, gap - bound * (1.0 + 1e-12), || {
                format!("means {mq}, {m}: shift {gap:e} exceeds {bound:e}")
            }))
        });
    }
    t.finish()
}

fn trunc_normal_contraction(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut t = Tally::new("trunc_normal/mean_contraction");
    for _ in 0..1000 {
        let (a0, a1) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        for side in [Side::Positive, Side::Negative] {
            t.case(|w| {
                let m0 = core(BlockDensity::trunc_normal(a0, side))?.mean()[0];
                let m1 = core(BlockDensity::trunc_normal(a1, side))?.mean()[0];
                let gap = (m0 - m1).abs();
                Ok(violation(w, gap - (a0 - a1).abs() * (1.0 + 1e-12), || {
                    format!("locations {a0}, {a1} ({side:?}): mean gap {gap:e}")
                }))
            });
        }
    }
    t.finish()
}

fn hazard_derivative_grid() -> CheckResult {
    let mut t = Tally::new("hazard/derivative_in_unit_interval");
    let h = 1e-5;
    for i in 0..=1600 {
        let x = -8.0 + 0.01 * i as f64;
        t.case(|w| {
            let fd = (hazard(x + h) - hazard(x - h)) / (2.0 * h);
            let exact = hazard_derivative(x);
            let margin = [-fd, fd - 1.0, -exact, exact - 1.0].into_iter().fold(f64::NEG_INFINITY, f64::max);
            *w = w.max(margin);
            if fd > 0.0 && fd < 1.0 && exact > 0.0 && exact < 1.0 {
                Ok(None)
            } else {
                Ok(Some(format!("t = {x}: finite difference {fd:e}, closed form {exact:e}")))
            }
        });
    }
    t.finish()
}

fn lambert_grid() -> CheckResult {
    let mut t = Tally::new("lambert_w0/residual");
    let mut xs = vec![0.0, std::f64::consts::E, 10.0];
    xs.extend((0..=2400).map(|i| 10f64.powf(-12.0 + 0.01 * i as f64)));
    for x in xs {
        t.case(|w| {
            let v = core(lambert_w0(x))?;
            let residual = (v * v.exp() - x).abs() / x.max(1.0);
            let reference = oracle(lambert_w0_bisect(x))?;
            let gap = (v - reference).abs() / reference.abs().max(1.0);
            *w = w.max(residual.max(gap) / 1e-12);
            if residual <= 1e-12 && gap <= 1e-12 {
                Ok(None)
            } else {
                Ok(Some(format!("x = {x:e}: residual {residual:e}, bisection gap {gap:e}")))
            }
        });
    }
    t.finish()
}

/// Inequalities with zero tolerated counterexamples.
pub fn inequality_suite(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        pinsker(&mut rng),
        transport(&mut rng),
        trunc_normal_contraction(&mut rng),
        hazard_derivative_grid(),
        lambert_grid(),
    ]
}
