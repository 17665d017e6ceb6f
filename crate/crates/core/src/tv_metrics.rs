//! Total variation between tabulated densities and between samples.
//!
//! In 1D a density grid stands for its piecewise-linear interpolant (zero one
//! cell beyond the lattice), and `∫|f̃(· − s) − g̃|` is integrated exactly over
//! the merged breakpoints. Translating or rescaling that interpolant is then
//! exact, so the shift/scale identities hold to rounding. 2D grids use the
//! bilinear interpolant sampled at the nodes.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::char_engine::DensityGrid;
use crate::error::{Error, Result};
use crate::report::CheckLine;
use crate::sampler::{RngStream, SampleBatch};
use crate::stats::quantile_sorted;

/// Smallest sample size accepted by the histogram estimator.
pub const MIN_EMPIRICAL: usize = 1000;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Pooled quantiles bounding the histogram range; outside points go to the edge bins.
const CLIP_QUANTILE: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TvMethod {
    DensityGrid,
    EmpiricalHistogram,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TvDiagnostics {
    /// Lattice spacing or histogram bin width (first axis).
    pub resolution: f64,
    /// Mass clipped from the grids, or the fraction of points moved to edge bins.
    pub clipped_mass: f64,
    /// Same-law calibration value of the histogram estimator.
    pub bias: Option<f64>,
    /// Set when a shift left the lattice and the value was taken as 1.
    pub beyond_resolution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub value: f64,
    pub method: TvMethod,
    pub stderr: f64,
    pub diagnostics: TvDiagnostics,
}

impl TvEstimate {
    fn grid(value: f64, resolution: f64, clipped: f64) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            method: TvMethod::DensityGrid,
            stderr: 0.0,
            diagnostics: TvDiagnostics {
                resolution,
                clipped_mass: clipped,
                ..Default::default()
            },
        }
    }

    /// The value 1 for laws separated beyond the lattice.
    pub fn beyond_resolution(resolution: f64) -> Self {
        let mut e = Self::grid(1.0, resolution, 0.0);
        e.diagnostics.beyond_resolution = true;
        e
    }
}

/// `∫ |ℓ|` over a segment of length `len` where `ℓ` is linear from `d0` to `d1`.
fn abs_linear(d0: f64, d1: f64, len: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        0.5 * len * (d0.abs() + d1.abs())
    } else {
        0.5 * len * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
    }
}

/// Interpolant of a 1D grid at `x`.
fn pl_value(f: &DensityGrid, x: f64) -> f64 {
    let p = (x - f.center[0]) / f.dx + (f.n / 2) as f64;
    let i = p.floor();
    let w = p - i;
    let i = i as isize;
    let n = f.n as isize;
    let at = |k: isize| if k < 0 || k >= n { 0.0 } else { f.values[k as usize] };
    (1.0 - w) * at(i) + w * at(i + 1)
}

/// `∫ |f̃(x − sf) − g̃(x − sg)| dx` for 1D grids of equal spacing.
fn pl_l1(f: &DensityGrid, sf: f64, g: &DensityGrid, sg: f64) -> f64 {
    let nodes = |d: &DensityGrid, s: f64| -> Vec<f64> {
        let base = d.center[0] + s - (d.n / 2) as f64 * d.dx;
        (-1..=d.n as isize).map(|j| base + j as f64 * d.dx).collect()
    };
    let (a, b) = (nodes(f, sf), nodes(g, sg));
    // merge the two sorted breakpoint sequences
    let mut pts = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i] <= b[j]) {
            pts.push(a[i]);
            i += 1;
        } else {
            pts.push(b[j]);
            j += 1;
        }
    }
    let diff = |x: f64| pl_value(f, x - sf) - pl_value(g, x - sg);
    let mut total = 0.0;
    let mut prev = diff(pts[0]);
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        let cur = diff(w[1]);
        if len > 0.0 {
            total += abs_linear(prev, cur, len);
        }
        prev = cur;
    }
    total
}

/// Bilinear value of a 2D grid at `x`.
fn bilinear(f: &DensityGrid, x: &[f64]) -> f64 {
    f.value_at(x)
}

fn same_spacing(f: &DensityGrid, g: &DensityGrid) -> bool {
    f.dim == g.dim && f.n == g.n && (f.dx - g.dx).abs() <= 1e-12 * f.dx
}

/// Scheffé distance `½∫|f − g|` for two densities on the same lattice.
pub fn tv_densities(f: &DensityGrid, g: &DensityGrid) -> Result<TvEstimate> {
    if !f.same_lattice(g) {
        return Err(Error::LatticeMismatch);
    }
    tv_shifted_pair(f, g, &vec![0.0; f.dim])
}

/// `‖(X + s) − Y‖` for `X ~ f`, `Y ~ g` tabulated on the same lattice, with
/// no restriction on `s` (mass moved off the lattice is accounted for).
pub fn tv_shifted_pair(f: &DensityGrid, g: &DensityGrid, shift: &[f64]) -> Result<TvEstimate> {
    if !same_spacing(f, g) || shift.len() != f.dim {
        return Err(Error::LatticeMismatch);
    }
    let clipped = f.clipped_mass.max(g.clipped_mass);
    if f.dim == 1 {
        let v = 0.5 * pl_l1(f, shift[0], g, 0.0);
        return Ok(TvEstimate::grid(v, f.dx, clipped));
    }
    // 2D: 1 − Σ min(f̃(x − s), g) dx², which also counts mass shifted off the lattice
    // cells where g is negligible contribute at most g itself; skip the lookup there
    let floor = 1e-13 * g.values.iter().copied().fold(0.0, f64::max);
    let overlap: f64 = (0..g.len())
        .into_par_iter()
        .map(|k| {
            if g.values[k] <= floor {
                return 0.0;
            }
            let x = g.coords(k);
            let y = [x[0] - shift[0], x[1] - shift[1]];
            bilinear(f, &y).min(g.values[k])
        })
        .collect::<Vec<f64>>()
        .iter()
        // sequential sum keeps the result independent of the thread count
        .sum::<f64>()
        * g.cell_volume();
    Ok(TvEstimate::grid(1.0 - overlap, f.dx, clipped))
}

/// `‖(X + s) − X‖` for `X ~ f`.
pub fn tv_shift(f: &DensityGrid, shift: &[f64]) -> Result<TvEstimate> {
    if shift.len() != f.dim {
        return Err(Error::DimensionMismatch {
            expected: f.dim,
            got: shift.len(),
        });
    }
    let l = f.half_width();
    let m = shift.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if m > l {
        return Err(Error::OffLattice { shift: m, half_width: l });
    }
    tv_shifted_pair(f, f, shift)
}

/// Histogram layout shared by both samples.
struct Bins {
    dim: usize,
    lo: Vec<f64>,
    width: Vec<f64>,
    counts: Vec<usize>,
}

impl Bins {
    fn total(&self) -> usize {
        self.counts.iter().product()
    }

    /// Bin index of a point, with out-of-range coordinates moved to the edge bins.
    fn index(&self, x: &[f64]) -> (usize, bool) {
        let mut idx = 0;
        let mut clipped = false;
        for a in 0..self.dim {
            let k = ((x[a] - self.lo[a]) / self.width[a]).floor();
            let kc = k.clamp(0.0, (self.counts[a] - 1) as f64);
            clipped |= kc != k;
            idx = idx * self.counts[a] + kc as usize;
        }
        (idx, clipped)
    }
}

fn max_bins(dim: usize) -> usize {
    match dim {
        1 => 4000,
        2 => 300,
        _ => 60,
    }
}

/// Freedman–Diaconis layout on the pooled sample, range clipped at pooled quantiles.
fn pooled_bins(xs: &SampleBatch, ys: &SampleBatch) -> Bins {
    let d = xs.dim;
    let n = (xs.len() + ys.len()) as f64;
    let mut lo = Vec::with_capacity(d);
    let mut width = Vec::with_capacity(d);
    let mut counts = Vec::with_capacity(d);
    for a in 0..d {
        let mut v = xs.column(a);
        v.extend(ys.column(a));
        v.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.75));
        let (l, h) = (quantile_sorted(&v, CLIP_QUANTILE), quantile_sorted(&v, 1.0 - CLIP_QUANTILE));
        let span = (h - l).max(f64::MIN_POSITIVE);
        let mut w = 2.0 * (q3 - q1) * n.powf(-1.0 / (2.0 + d as f64));
        if !(w > 0.0) {
            w = span / 10.0;
        }
        let k = ((span / w).ceil() as usize).clamp(1, max_bins(d));
        lo.push(l);
        width.push(span / k as f64);
        counts.push(k);
    }
    Bins { dim: d, lo, width, counts }
}

fn histogram(bins: &Bins, idx: &[usize], pick: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut h = vec![0.0; bins.total()];
    let mut n = 0.0;
    for i in pick {
        h[idx[i]] += 1.0;
        n += 1.0;
    }
    h.iter_mut().for_each(|c| *c /= n);
    h
}

fn half_l1(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Histogram Scheffé estimate `½Σ|p̂ − q̂|` with bootstrap standard error and a
/// same-law calibration value (the two halves of `xs` on the same bins).
pub fn tv_empirical(xs: &SampleBatch, ys: &SampleBatch) -> Result<TvEstimate> {
    if xs.dim != ys.dim {
        return Err(Error::DimensionMismatch {
            expected: xs.dim,
            got: ys.dim,
        });
    }
    if xs.dim > 3 {
        return Err(Error::InvalidParameter("empirical TV supports d ≤ 3".into()));
    }
    let got = xs.len().min(ys.len());
    if got < MIN_EMPIRICAL {
        return Err(Error::TooFewSamples { got, min: MIN_EMPIRICAL });
    }
    let bins = pooled_bins(xs, ys);
    let locate = |b: &SampleBatch| -> (Vec<usize>, usize) {
        let mut clipped = 0;
        let idx = (0..b.len())
            .map(|i| {
                let (k, c) = bins.index(b.point(i));
                clipped += c as usize;
                k
            })
            .collect();
        (idx, clipped)
    };
    let (ix, cx) = locate(xs);
    let (iy, cy) = locate(ys);
    let (nx, ny) = (ix.len(), iy.len());
    let value = half_l1(&histogram(&bins, &ix, 0..nx), &histogram(&bins, &iy, 0..ny));
    let bias = half_l1(&histogram(&bins, &ix, 0..nx / 2), &histogram(&bins, &ix, nx / 2..nx));
    let boot = RngStream::new(xs.stream.seed ^ ys.stream.seed.rotate_left(17), 0xB007).derive(xs.stream.stream_id ^ ys.stream.stream_id.rotate_left(29));
    let reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|r| {
            use rand::Rng;
            let mut rng = boot.chunk(r as u64);
            let px = histogram(&bins, &ix, (0..nx).map(|_| rng.random_range(0..nx)).collect::<Vec<_>>().into_iter());
            let py = histogram(&bins, &iy, (0..ny).map(|_| rng.random_range(0..ny)).collect::<Vec<_>>().into_iter());
            half_l1(&px, &py)
        })
        .collect();
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    let sd = (reps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt();
    Ok(TvEstimate {
        value,
        method: TvMethod::EmpiricalHistogram,
        stderr: sd,
        diagnostics: TvDiagnostics {
            resolution: bins.width[0],
            clipped_mass: (cx + cy) as f64 / (nx + ny) as f64,
            bias: Some(bias),
            beyond_resolution: false,
        },
    })
}

/// Density of `X + Y` for independent `X ~ f`, `Y ~ g` (1D, equal spacing),
/// on the lattice of `f` shifted by `g`'s center.
pub fn convolve(f: &DensityGrid, g: &DensityGrid) -> Result<DensityGrid> {
    if f.dim != 1 || !same_spacing(f, g) {
        return Err(Error::LatticeMismatch);
    }
    let n = f.n;
    let m = 2 * n;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let pad = |v: &[f64]| -> Vec<Complex64> {
        let mut b: Vec<Complex64> = v.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        b.resize(m, Complex64::new(0.0, 0.0));
        b
    };
    let (mut a, mut b) = (pad(&f.values), pad(&g.values));
    fwd.process(&mut a);
    fwd.process(&mut b);
    let mut c: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    inv.process(&mut c);
    // node i of f plus node j of g sits at f.x_{i+j−N/2} + g.center
    let scale = f.dx / m as f64;
    let full: Vec<f64> = c.iter().map(|z| z.re * scale).collect();
    let center = f.center[0] + g.center[0];
    let off = n / 2;
    DensityGrid::from_fn(1, n, f.dx, vec![center], |x| {
        let j = ((x[0] - center) / f.dx).round() as isize + (n / 2) as isize + off as isize;
        if j < 0 || j as usize >= full.len() {
            0.0
        } else {
            full[j as usize].max(0.0)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub scale: f64,
    /// Shifts `δ₁, δ₂` of the two summands in the convolution item.
    pub conv_shifts: (f64, f64),
    /// Shift magnitudes for the divergence trend.
    pub divergence_shifts: Vec<f64>,
}

impl Default for AppendixParams {
    fn default() -> Self {
        Self {
            a: vec![1.0],
            b: vec![3.0],
            scale: 2.0,
            conv_shifts: (1.0, 0.5),
            divergence_shifts: (0..6).map(|k| 0.25 * 2f64.powi(k)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub items: Vec<CheckLine>,
    /// `(shift, TV)` pairs of the divergence item.
    pub divergence: Vec<(f64, f64)>,
    /// `(TV of the sums, TV₁ + TV₂)` of the convolution item.
    pub subadditivity: Option<(f64, f64)>,
}

impl AppendixReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|c| c.passed)
    }
}

/// Runs the shift, scale, affine, convolution and divergence identities on a
/// 1D grid `f` (with `g` as the second law, and `h` as the convolution partner).
pub fn property_suite_appendix(
    f: &DensityGrid,
    g: &DensityGrid,
    h: &DensityGrid,
    params: &AppendixParams,
    tol: f64,
) -> Result<AppendixReport> {
    if f.dim != 1 || !f.same_lattice(g) || !same_spacing(f, h) {
        return Err(Error::LatticeMismatch);
    }
    let (a, b, c) = (params.a[0], params.b[0], params.scale);
    let mut items = Vec::new();

    // (i) ‖(X+a) − (Y+b)‖ = ‖(X+a−b) − Y‖
    let lhs = 0.5 * pl_l1(f, a, g, b);
    let rhs = 0.5 * pl_l1(f, a - b, g, 0.0);
    items.push(CheckLine::at_most("shift_cancellation", (lhs - rhs).abs(), tol));

    // (ii) ‖cX − cY‖ = ‖X − Y‖ on the rescaled lattice
    let (fc, gc) = (f.affine_image(c, &[0.0])?, g.affine_image(c, &[0.0])?);
    let base = tv_densities(f, g)?.value;
    items.push(CheckLine::at_most("scale_invariance", (tv_densities(&fc, &gc)?.value - base).abs(), tol));

    // (iii) ‖(cX + a) − (cY + b)‖ = ‖(X + (a − b)/c) − Y‖
    let (fa, gb) = (f.affine_image(c, &[a])?, g.affine_image(c, &[b])?);
    let lhs = tv_shifted_pair(&fa, &gb, &[0.0])?.value;
    let rhs = 0.5 * pl_l1(f, (a - b) / c, g, 0.0);
    items.push(CheckLine::at_most("affine_identity", (lhs - rhs).abs(), tol));

    // (iv) ‖(X₁+X₂) − (Y₁+Y₂)‖ ≤ ‖X₁−Y₁‖ + ‖X₂−Y₂‖ with Y_i = X_i + δ_i
    let (d1, d2) = params.conv_shifts;
    let sum = convolve(f, h)?;
    let joint = tv_shifted_pair(&sum, &sum, &[d1 + d2])?.value;
    let parts = tv_shifted_pair(f, f, &[d1])?.value + tv_shifted_pair(h, h, &[d2])?.value;
    items.push(CheckLine {
        name: "convolution_subadditivity".into(),
        passed: joint < parts,
        measured: joint - parts,
        tolerance: 0.0,
    });

    // (v) shifts of growing size drive the distance to 1
    let divergence: Vec<(f64, f64)> = params
        .divergence_shifts
        .iter()
        .map(|s| Ok((*s, tv_shifted_pair(f, f, &[*s])?.value)))
        .collect::<Result<_>>()?;
    let drop = divergence.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0f64, f64::max);
    items.push(CheckLine::at_most("divergence_monotone", drop, 0.0));
    let last = divergence.last().map(|p| p.1).unwrap_or(0.0);
    items.push(CheckLine::at_most("divergence_limit", 1.0 - last, 0.01));

    Ok(AppendixReport {
        items,
        divergence,
        subadditivity: Some((joint, parts)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::char_engine::{invert_to_density, CharFunctionGrid, GridMeta, LatticePlan};
    use crate::levy_models::StableParams;
    use crate::sampler::sample_stable;
    use proptest::prelude::*;
    use statrs::function::erf::erf;
    use std::f64::consts::PI;

    fn normal_grid(mean: f64, sd: f64) -> DensityGrid {
        DensityGrid::from_fn(1, 8192, 0.005, vec![0.0], |x| (-(x[0] - mean).powi(2) / (2.0 * sd * sd)).exp()).unwrap()
    }

    fn cauchy_grid(loc: f64) -> DensityGrid {
        let plan = LatticePlan::new(1, 1 << 18, 200.0, vec![0.0]).unwrap();
        let cf = CharFunctionGrid::build(plan, GridMeta::default(), |l| Ok(Complex64::from_polar((-l[0].abs()).exp(), loc * l[0]))).unwrap();
        invert_to_density(&cf).unwrap()
    }

    #[test]
    fn gaussian_and_cauchy_oracles() {
        let f = normal_grid(0.0, 1.0);
        let g = normal_grid(2.0, 1.0);
        let target = erf(2.0 / (2.0 * 2f64.sqrt()));
        assert!((tv_densities(&f, &g).unwrap().value - target).abs() < 1e-4);
        assert!((tv_shift(&f, &[2.0]).unwrap().value - target).abs() < 1e-4);
        assert_eq!(tv_densities(&f, &f).unwrap().value, 0.0);
        assert_eq!(tv_shift(&f, &[0.0]).unwrap().value, 0.0);
        let (c0, c1) = (cauchy_grid(0.0), cauchy_grid(1.0));
        let target = 2.0 / PI * 0.5f64.atan();
        assert!((tv_densities(&c0, &c1).unwrap().value - target).abs() < 1e-4);
        assert!((tv_shift(&c0, &[1.0]).unwrap().value - target).abs() < 1e-4);
    }

    #[test]
    fn off_lattice_and_mismatch() {
        let f = normal_grid(0.0, 1.0);
        assert!(matches!(tv_shift(&f, &[30.0]), Err(Error::OffLattice { .. })));
        let g = DensityGrid::from_fn(1, 4096, 0.01, vec![0.0], |x| (-x[0] * x[0]).exp()).unwrap();
        assert!(matches!(tv_densities(&f, &g), Err(Error::LatticeMismatch)));
    }

    #[test]
    fn shifts_grow_to_one() {
        let f = normal_grid(0.0, 1.0);
        let vals: Vec<f64> = (0..5).map(|k| tv_shift(&f, &[2f64.powi(k)]).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        assert!(vals[4] > 0.99999);
    }

    #[test]
    fn two_dimensional_shift() {
        let f = DensityGrid::from_fn(2, 512, 0.03, vec![0.0, 0.0], |x| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp()).unwrap();
        let v = tv_shift(&f, &[1.2, 1.6]).unwrap().value;
        assert!((v - erf(2.0 / (2.0 * 2f64.sqrt()))).abs() < 1e-3, "{v}");
        let w = tv_shift(&f, &[2.0, 0.0]).unwrap().value;
        assert!((v - w).abs() < 1e-3);
    }

    #[test]
    fn appendix_suite_on_gaussians() {
        let f = normal_grid(0.0, 1.0);
        let g = normal_grid(0.3, 1.5);
        let h = normal_grid(0.0, 0.8);
        let r = property_suite_appendix(&f, &g, &h, &AppendixParams::default(), 1e-6).unwrap();
        assert!(r.passed(), "{:?}", r.items);
        // subadditivity sides against closed forms
        let (joint, parts) = r.subadditivity.unwrap();
        let sd = (1.0f64 + 0.64).sqrt();
        assert!((joint - erf(1.5 / (2.0 * 2f64.sqrt() * sd))).abs() < 1e-4);
        let expect = erf(1.0 / (2.0 * 2f64.sqrt())) + erf(0.5 / (2.0 * 2f64.sqrt() * 0.8));
        assert!((parts - expect).abs() < 1e-4);
        assert!(joint < parts - 0.1);
    }

    #[test]
    fn empirical_estimates() {
        let p = StableParams::new(2.0, 0.5, 0.0, 0.0).unwrap();
        let b = sample_stable(p, 200_000, &RngStream::new(31, 0)).unwrap();
        let half = |k: usize| {
            let mut h = b.clone();
            h.values = b.values[k * 100_000..(k + 1) * 100_000].to_vec();
            h
        };
        let same = tv_empirical(&half(0), &half(1)).unwrap();
        assert!(same.value <= 0.05, "{}", same.value);
        let x = sample_stable(p, 100_000, &RngStream::new(32, 0)).unwrap();
        let y = sample_stable(StableParams { a: 2.0, ..p }, 100_000, &RngStream::new(33, 0)).unwrap();
        let e = tv_empirical(&x, &y).unwrap();
        assert!((e.value - 0.6827).abs() < 0.02, "{e:?}");
        assert!(e.stderr > 0.0 && e.stderr < 0.01);
        // grid and histogram estimates agree
        let grid = tv_shift(&normal_grid(0.0, 1.0), &[2.0]).unwrap().value;
        assert!((grid - e.value).abs() <= 0.02f64.max(3.0 * e.stderr));
    }

    #[test]
    fn disjoint_supports_give_one() {
        use crate::sampler::sample_stable;
        let base = sample_stable(StableParams::new(2.0, 0.5, 0.0, 0.0).unwrap(), 5000, &RngStream::new(1, 0)).unwrap();
        let mut u = base.clone();
        let mut v = base.clone();
        u.values = (0..5000).map(|i| (i as f64 + 0.5) / 5000.0).collect();
        v.values = u.values.iter().map(|x| x + 5.0).collect();
        assert_eq!(tv_empirical(&u, &v).unwrap().value, 1.0);
        u.values.truncate(999);
        assert!(matches!(tv_empirical(&u, &v), Err(Error::TooFewSamples { .. })));
    }

    fn triple() -> impl Strategy<Value = (f64, f64, f64, f64, f64, f64)> {
        (-2.0f64..2.0, 0.5f64..2.0, -2.0f64..2.0, 0.5f64..2.0, -2.0f64..2.0, 0.5f64..2.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn metric_properties((m1, s1, m2, s2, m3, s3) in triple()) {
            let mk = |m: f64, s: f64| DensityGrid::from_fn(1, 4096, 0.01, vec![0.0], |x| (-(x[0] - m).powi(2) / (2.0 * s * s)).exp()).unwrap();
            let (f, g, h) = (mk(m1, s1), mk(m2, s2), mk(m3, s3));
            let fg = tv_densities(&f, &g).unwrap().value;
            let gf = tv_densities(&g, &f).unwrap().value;
            let fh = tv_densities(&f, &h).unwrap().value;
            let hg = tv_densities(&h, &g).unwrap().value;
            prop_assert!((fg - gf).abs() < 1e-12);
            prop_assert!(fg <= fh + hg + 1e-12);
            prop_assert!((0.0..=1.0 + 1e-9).contains(&fg));
        }

        #[test]
        fn shift_symmetry(s in -5.0f64..5.0) {
            let f = DensityGrid::from_fn(1, 4096, 0.01, vec![0.0], |x| (-(x[0]).powi(2) / 2.0).exp() * (1.0 + 0.5 * (x[0]).tanh())).unwrap();
            let a = tv_shift(&f, &[s]).unwrap().value;
            let b = tv_shift(&f, &[-s]).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
