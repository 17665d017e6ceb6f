//! Adaptive Gauss–Kronrod (7/15) quadrature with a global error budget.
//!
//! Intervals are bisected worst-first until the summed Kronrod–Gauss
//! difference drops under the absolute tolerance, or the evaluation cap is
//! hit, in which case the best estimate is returned as an error carrying its
//! residual.

use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Absolute tolerance used by the condition checkers and jump-law integrals.
pub const DEFAULT_ABS_TOL: f64 = 1e-9;
/// Hard cap on integrand evaluations per integral.
pub const MAX_EVALUATIONS: usize = 1 << 20;

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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Values the integrator can accumulate: reals and complex numbers.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
    fn is_finite_value(self) -> bool;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn is_finite_value(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evaluations: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: DEFAULT_ABS_TOL,
            rel_tol: 0.0,
            max_evaluations: MAX_EVALUATIONS,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod = kronrod + (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + (f1 + f2) * WG[j / 2];
        }
    }
    let value = kronrod * half;
    let err = ((kronrod - gauss) * half).magnitude();
    (value, err)
}

impl Quadrature {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    /// Integrates `f` over the finite interval `[a, b]`.
    pub fn integrate<T: QuadValue, F: Fn(f64) -> T>(&self, f: F, a: f64, b: f64) -> Result<QuadResult<T>> {
        if a == b {
            return Ok(QuadResult {
                value: T::zero(),
                error: 0.0,
                evaluations: 0,
            });
        }
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParameter("quadrature bounds must be finite".into()));
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let r = self.integrate_pieces(f, &[lo, hi])?;
        Ok(QuadResult {
            value: r.value * sign,
            ..r
        })
    }

    /// Integrates over increasing breakpoints `points[0] < … < points[n]`.
    /// The pieces seed the bisection queue and share one global error budget.
    pub fn integrate_pieces<T: QuadValue, F: Fn(f64) -> T>(&self, f: F, points: &[f64]) -> Result<QuadResult<T>> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("quadrature bounds must be finite".into()));
        }
        let mut heap = BinaryHeap::new();
        let mut total = T::zero();
        let mut total_err = 0.0;
        let mut evaluations = 0;
        for w in points.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let (v, e) = gk15(&f, w[0], w[1]);
            evaluations += 15;
            total = total + v;
            total_err += e;
            heap.push(Segment {
                a: w[0],
                b: w[1],
                value: v,
                error: e,
            });
        }
        loop {
            let tol = self.abs_tol.max(self.rel_tol * total.magnitude());
            if total_err <= tol {
                break;
            }
            if evaluations + 30 > self.max_evaluations {
                return Err(Error::QuadratureFailure {
                    residual: total_err,
                    evaluations,
                });
            }
            let worst = match heap.pop() {
                Some(s) => s,
                None => break,
            };
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // interval exhausted at machine precision
                return Err(Error::QuadratureFailure {
                    residual: total_err,
                    evaluations,
                });
            }
            let (vl, el) = gk15(&f, worst.a, mid);
            let (vr, er) = gk15(&f, mid, worst.b);
            evaluations += 30;
            total = total - worst.value + vl + vr;
            total_err = total_err - worst.error + el + er;
            heap.push(Segment {
                a: worst.a,
                b: mid,
                value: vl,
                error: el,
            });
            heap.push(Segment {
                a: mid,
                b: worst.b,
                value: vr,
                error: er,
            });
        }
        // re-sum to shed accumulated rounding from incremental updates
        let mut value = T::zero();
        let mut error = 0.0;
        for s in heap.iter() {
            value = value + s.value;
            error += s.error;
        }
        if !value.is_finite_value() {
            return Err(Error::QuadratureFailure {
                residual: f64::INFINITY,
                evaluations,
            });
        }
        Ok(QuadResult {
            value,
            error,
            evaluations,
        })
    }
}
