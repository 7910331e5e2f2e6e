use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{OracleError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Multiple of `ε ∫|f|` below which the error estimate is roundoff.
const ROUNDOFF: f64 = 50.0;

/// Tolerances for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_segments: usize,
    pub initial_segments: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_segments: 4000,
            initial_segments: 16,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    /// Integral of `|f|` over the segment.
    magnitude: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(OracleError::NonFinite(c));
    }
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut m = WGK[7] * fc.abs();
    for i in 0..7 {
        let dx = h * XGK[i];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        if !f1.is_finite() {
            return Err(OracleError::NonFinite(c - dx));
        }
        if !f2.is_finite() {
            return Err(OracleError::NonFinite(c + dx));
        }
        k += WGK[i] * (f1 + f2);
        m += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    let value = k * h;
    let error = ((k - g) * h).abs();
    Ok(Segment {
        a,
        b,
        value,
        error,
        magnitude: m * h,
    })
}

/// Globally adaptive 7/15 Gauss-Kronrod integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(OracleError::Invalid(format!("bad interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let n0 = spec.initial_segments.max(1);
    let mut heap = BinaryHeap::with_capacity(spec.max_segments);
    for i in 0..n0 {
        let lo = a + (b - a) * i as f64 / n0 as f64;
        let hi = if i + 1 == n0 { b } else { a + (b - a) * (i + 1) as f64 / n0 as f64 };
        heap.push(kronrod(&f, lo, hi)?);
    }
    loop {
        let (value, error, magnitude) = heap
            .iter()
            .fold((0.0, 0.0, 0.0), |(v, e, m), s| (v + s.value, e + s.error, m + s.magnitude));
        let target = spec
            .abs_tol
            .max(spec.rel_tol * value.abs())
            .max(ROUNDOFF * f64::EPSILON * magnitude);
        if error <= target {
            return Ok(Estimate { value, error });
        }
        if heap.len() >= spec.max_segments {
            return Err(OracleError::NotConverged { value, error });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point.
            return Err(OracleError::NotConverged { value, error });
        }
        heap.push(kronrod(&f, worst.a, mid)?);
        heap.push(kronrod(&f, mid, worst.b)?);
    }
}
