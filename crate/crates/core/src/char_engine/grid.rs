//! Lattice CF tables and their inversion to densities.
//!
//! Frequencies `λ_k = (k − N/2)Δλ` with `Δλ = 2Λ/N`, paired with positions
//! `x_j = x_c + (j − N/2)Δx`, `Δx = π/Λ`, so the density lives on
//! `[x_c − L, x_c + L)` with `L = πN/(2Λ)`. With `N` a multiple of 4,
//!
//! `f(x_j) ≈ (Δλ/2π) (−1)^j Σ_k (−1)^k φ(λ_k) e^{−iλ_k x_c} e^{−2πi kj/N}`,
//!
//! which is one forward FFT per axis.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Horizon;
use crate::error::{Error, Result};
use crate::report::CheckLine;

pub const DEFAULT_N_1D: usize = 1 << 14;
pub const DEFAULT_N_2D: usize = 1 << 11;
/// `|φ|` must stay below this on the outer 5% shell.
pub const SHELL_TOL: f64 = 1e-8;
/// Boundary density relative to the peak above which a grid is flagged.
pub const BOUNDARY_RATIO: f64 = 1e-4;
const MASS_TOL: f64 = 1e-3;
/// Physical half-width in units of the widest law's scale, per dimension.
const WIDTH_FACTOR: [f64; 2] = [200.0, 40.0];
const MIN_WIDTH_FACTOR: [f64; 2] = [20.0, 10.0];
const MAX_REFINEMENTS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub model_id: String,
    pub q_id: String,
    pub eps: f64,
    pub horizon: Horizon,
    pub includes_drift: bool,
}

impl Default for GridMeta {
    fn default() -> Self {
        Self {
            model_id: String::new(),
            q_id: String::new(),
            eps: 1.0,
            horizon: Horizon::Infinite,
            includes_drift: false,
        }
    }
}

/// Lattice size, frequency half-width `Λ` and the density center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticePlan {
    pub dim: usize,
    pub n: usize,
    pub lambda_max: f64,
    pub center: Vec<f64>,
}

impl LatticePlan {
    pub fn new(dim: usize, n: usize, lambda_max: f64, center: Vec<f64>) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidParameter(format!("density lattices support d ∈ {{1,2}}, got {dim}")));
        }
        if n < 8 || n % 4 != 0 {
            return Err(Error::InvalidParameter("lattice size must be a multiple of 4".into()));
        }
        if center.len() != dim || !(lambda_max > 0.0) {
            return Err(Error::InvalidParameter("bad lattice center or frequency range".into()));
        }
        Ok(Self {
            dim,
            n,
            lambda_max,
            center,
        })
    }

    pub fn dlambda(&self) -> f64 {
        2.0 * self.lambda_max / self.n as f64
    }

    pub fn dx(&self) -> f64 {
        PI / self.lambda_max
    }

    pub fn half_width(&self) -> f64 {
        PI * self.n as f64 / (2.0 * self.lambda_max)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lambda(&self, idx: usize) -> Vec<f64> {
        let h = self.dlambda();
        let half = (self.n / 2) as f64;
        if self.dim == 1 {
            vec![(idx as f64 - half) * h]
        } else {
            let (i, j) = (idx / self.n, idx % self.n);
            vec![(i as f64 - half) * h, (j as f64 - half) * h]
        }
    }

    /// Index of `−λ`, when it lies on the lattice.
    fn partner(&self, idx: usize) -> Option<usize> {
        let n = self.n;
        if self.dim == 1 {
            (idx != 0).then(|| n - idx)
        } else {
            let (i, j) = (idx / n, idx % n);
            (i != 0 && j != 0).then(|| (n - i) * n + (n - j))
        }
    }

    fn zero_index(&self) -> usize {
        if self.dim == 1 {
            self.n / 2
        } else {
            (self.n / 2) * self.n + self.n / 2
        }
    }

    /// Largest `|k − N/2|` over the axes of node `idx`, as a fraction of `N/2`.
    fn radius_fraction(&self, idx: usize) -> f64 {
        let half = (self.n / 2) as f64;
        let r = |k: usize| (k as f64 - half).abs() / half;
        if self.dim == 1 {
            r(idx)
        } else {
            r(idx / self.n).max(r(idx % self.n))
        }
    }
}

fn scan_radii() -> impl Iterator<Item = f64> {
    (0..).map(|k| 1e-4 * 1.15f64.powi(k)).take_while(|r| *r <= 1e8)
}

fn directions(dim: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        vec![vec![1.0]]
    } else {
        (0..8)
            .map(|k| {
                let a = PI * k as f64 / 8.0;
                vec![a.cos(), a.sin()]
            })
            .collect()
    }
}

/// Scale and decay radii of a CF along a direction: the first radius where
/// `|φ| ≤ ½` and the last one where `|φ| ≥ SHELL_TOL/10`.
fn radial_profile(cf: &(dyn Fn(&[f64]) -> Result<Complex64> + Sync), dir: &[f64]) -> Result<(f64, f64)> {
    let mut half = None;
    let mut last_big = 0.0;
    let mut top = 0.0;
    for r in scan_radii() {
        let lam: Vec<f64> = dir.iter().map(|u| u * r).collect();
        let v = cf(&lam)?.norm();
        if half.is_none() && v <= 0.5 {
            half = Some(r);
        }
        if v >= 0.1 * SHELL_TOL {
            last_big = r;
        }
        top = r;
    }
    if last_big >= top {
        return Err(Error::UnderResolved(
            "characteristic function does not decay; the law has no lattice density".into(),
        ));
    }
    let half = half.ok_or_else(|| Error::UnderResolved("characteristic function never drops below 1/2".into()))?;
    Ok((half, last_big * 1.15))
}

/// Chooses `Λ` (and, if needed, a larger `N`) so that every CF in `cfs` is
/// below `SHELL_TOL` on the outer shell while the physical window covers
/// `span` around `center` plus the widest law.
pub fn plan_lattice(
    cfs: &[&(dyn Fn(&[f64]) -> Result<Complex64> + Sync)],
    dim: usize,
    center: Vec<f64>,
    span: f64,
    n_default: usize,
) -> Result<LatticePlan> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::InvalidParameter(format!("density lattices support d ∈ {{1,2}}, got {dim}")));
    }
    let mut r_half_min = f64::INFINITY;
    let mut r_shell = 0.0f64;
    for cf in cfs {
        for dir in directions(dim) {
            let (h, s) = radial_profile(*cf, &dir)?;
            r_half_min = r_half_min.min(h);
            r_shell = r_shell.max(s);
        }
    }
    let w_wide = 1.0 / r_half_min;
    let lambda_need = r_shell / 0.95;
    let (wide, narrow) = (WIDTH_FACTOR[dim - 1], MIN_WIDTH_FACTOR[dim - 1]);
    let mut n = n_default;
    for _ in 0..=MAX_REFINEMENTS {
        let target = wide * w_wide + span;
        let minimum = narrow * w_wide + span;
        let lambda = (PI * n as f64 / (2.0 * target)).max(lambda_need);
        let l = PI * n as f64 / (2.0 * lambda);
        if l >= minimum {
            return LatticePlan::new(dim, n, lambda, center);
        }
        n *= 2;
    }
    Err(Error::UnderResolved(format!(
        "need Λ ≥ {lambda_need:.3e} and half-width ≥ {:.3e}; N = {} per axis is not enough, increase N",
        narrow * w_wide + span,
        n / 2
    )))
}

/// Tabulated characteristic function on `[−Λ, Λ)^d`.
#[derive(Debug, Clone)]
pub struct CharFunctionGrid {
    pub plan: LatticePlan,
    pub values: Vec<Complex64>,
    pub meta: GridMeta,
    /// Largest `|φ| − 1` removed by clamping.
    pub clamped_excess: f64,
}

impl CharFunctionGrid {
    /// Evaluates `cf` on the lattice in parallel, computing each `±λ` pair once.
    pub fn build<F>(plan: LatticePlan, meta: GridMeta, cf: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<Complex64> + Sync,
    {
        let total = plan.len();
        let todo: Vec<usize> = (0..total)
            .filter(|&k| plan.partner(k).map_or(true, |p| k <= p))
            .collect();
        let computed: Vec<(usize, Complex64)> = todo
            .par_iter()
            .map(|&k| cf(&plan.lambda(k)).map(|v| (k, v)))
            .collect::<Result<_>>()?;
        let mut values = vec![Complex64::new(0.0, 0.0); total];
        let mut excess: f64 = 0.0;
        for (k, mut v) in computed {
            let m = v.norm();
            if m > 1.0 {
                excess = excess.max(m - 1.0);
                v /= m;
            }
            values[k] = v;
            if let Some(p) = plan.partner(k) {
                values[p] = v.conj();
            }
        }
        values[plan.zero_index()] = Complex64::new(1.0, 0.0);
        Ok(Self {
            plan,
            values,
            meta,
            clamped_excess: excess,
        })
    }

    pub fn lambda(&self, idx: usize) -> Vec<f64> {
        self.plan.lambda(idx)
    }

    /// Largest `|φ|` on the outer 5% shell.
    pub fn shell_max(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(k, _)| self.plan.radius_fraction(*k) >= 0.95)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn check_invariants(&self) -> Vec<CheckLine> {
        let zero = (self.values[self.plan.zero_index()] - 1.0).norm();
        let modulus = self.values.iter().map(|v| v.norm() - 1.0).fold(0.0, f64::max);
        let herm = (0..self.values.len())
            .filter_map(|k| self.plan.partner(k).map(|p| (self.values[k] - self.values[p].conj()).norm()))
            .fold(0.0, f64::max);
        vec![
            CheckLine::at_most("cf_at_zero", zero, 0.0),
            CheckLine::at_most("cf_modulus", modulus, 0.0),
            CheckLine::at_most("cf_hermitian", herm, 0.0),
        ]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        if self.plan.dim == 1 {
            writeln!(w, "lambda,re,im")?;
        } else {
            writeln!(w, "lambda1,lambda2,re,im")?;
        }
        for (k, v) in self.values.iter().enumerate() {
            for l in self.lambda(k) {
                write!(w, "{l},")?;
            }
            writeln!(w, "{},{}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Density tabulated on `x_c + (j − N/2)Δx`, clipped at zero and renormalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub dim: usize,
    pub n: usize,
    pub dx: f64,
    pub center: Vec<f64>,
    pub values: Vec<f64>,
    /// Mass before clipping negatives.
    pub pre_clip_mass: f64,
    /// Mass removed by clipping (absolute value of the negative part).
    pub clipped_mass: f64,
    /// Mass after clipping, before renormalising.
    pub mass: f64,
    /// Most negative value seen before clipping, as a positive number.
    pub noise_floor: f64,
    pub boundary_ratio: f64,
    pub under_resolved: bool,
}

impl DensityGrid {
    /// Tabulates a known density on a lattice (oracles, tests, rescaled copies).
    pub fn from_fn<F: Fn(&[f64]) -> f64>(dim: usize, n: usize, dx: f64, center: Vec<f64>, f: F) -> Result<Self> {
        if !(dim == 1 || dim == 2) || center.len() != dim || n < 4 || !(dx > 0.0) {
            return Err(Error::InvalidParameter("bad density lattice".into()));
        }
        let mut g = Self::empty(dim, n, dx, center);
        let vals: Vec<f64> = (0..g.len()).map(|k| f(&g.coords(k))).collect();
        g.finish(vals);
        Ok(g)
    }

    fn empty(dim: usize, n: usize, dx: f64, center: Vec<f64>) -> Self {
        Self {
            dim,
            n,
            dx,
            center,
            values: Vec::new(),
            pre_clip_mass: 0.0,
            clipped_mass: 0.0,
            mass: 0.0,
            noise_floor: 0.0,
            boundary_ratio: 0.0,
            under_resolved: false,
        }
    }

    /// Clips, measures and renormalises raw values.
    fn finish(&mut self, raw: Vec<f64>) {
        let cell = self.cell_volume();
        self.pre_clip_mass = raw.iter().sum::<f64>() * cell;
        self.noise_floor = raw.iter().fold(0.0f64, |m, v| m.max(-v));
        self.clipped_mass = raw.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>() * cell;
        let mut vals: Vec<f64> = raw.into_iter().map(|v| v.max(0.0)).collect();
        self.mass = vals.iter().sum::<f64>() * cell;
        if self.mass > 0.0 {
            let k = 1.0 / self.mass;
            vals.iter_mut().for_each(|v| *v *= k);
        }
        self.values = vals;
        let peak = self.peak();
        let shell = (self.n / 100).max(1);
        let boundary = (0..self.len())
            .filter(|&k| self.edge_distance(k) < shell)
            .map(|k| self.values[k])
            .fold(0.0, f64::max);
        self.boundary_ratio = if peak > 0.0 { boundary / peak } else { f64::INFINITY };
        self.under_resolved =
            self.boundary_ratio >= BOUNDARY_RATIO || (self.mass - 1.0).abs() > MASS_TOL || (self.pre_clip_mass - 1.0).abs() > MASS_TOL;
    }

    fn edge_distance(&self, k: usize) -> usize {
        let e = |i: usize| i.min(self.n - 1 - i);
        if self.dim == 1 {
            e(k)
        } else {
            e(k / self.n).min(e(k % self.n))
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.n as f64 * self.dx
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Coordinate of node `j` along one axis.
    pub fn axis_coord(&self, axis: usize, j: usize) -> f64 {
        self.center[axis] + (j as f64 - (self.n / 2) as f64) * self.dx
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        if self.dim == 1 {
            vec![self.axis_coord(0, k)]
        } else {
            vec![self.axis_coord(0, k / self.n), self.axis_coord(1, k % self.n)]
        }
    }

    pub fn same_lattice(&self, other: &DensityGrid) -> bool {
        self.dim == other.dim
            && self.n == other.n
            && (self.dx - other.dx).abs() <= 1e-12 * self.dx
            && self.center.iter().zip(&other.center).all(|(a, b)| (a - b).abs() <= 1e-12 * self.dx.max(a.abs()))
    }

    /// Piecewise-linear (1D) / bilinear (2D) interpolant, zero off the lattice.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let pos = |axis: usize| (x[axis] - self.center[axis]) / self.dx + (self.n / 2) as f64;
        let n = self.n as isize;
        let get = |i: isize, j: isize| -> f64 {
            if i < 0 || i >= n || j < 0 || j >= n {
                0.0
            } else if self.dim == 1 {
                self.values[i as usize]
            } else {
                self.values[i as usize * self.n + j as usize]
            }
        };
        if self.dim == 1 {
            let p = pos(0);
            let i = p.floor();
            let w = p - i;
            let i = i as isize;
            let at = |i: isize| if i < 0 || i >= n { 0.0 } else { self.values[i as usize] };
            (1.0 - w) * at(i) + w * at(i + 1)
        } else {
            let (p, q) = (pos(0), pos(1));
            let (i, j) = (p.floor(), q.floor());
            let (u, v) = (p - i, q - j);
            let (i, j) = (i as isize, j as isize);
            (1.0 - u) * (1.0 - v) * get(i, j) + u * (1.0 - v) * get(i + 1, j) + (1.0 - u) * v * get(i, j + 1) + u * v * get(i + 1, j + 1)
        }
    }

    /// Density of `cX + b` on the rescaled lattice (`Δx → |c|Δx`), values divided by `|c|^d`.
    pub fn affine_image(&self, c: f64, b: &[f64]) -> Result<Self> {
        if c == 0.0 || !c.is_finite() || b.len() != self.dim {
            return Err(Error::InvalidParameter("affine map needs c ≠ 0 and a matching shift".into()));
        }
        let mut g = self.clone();
        g.dx = self.dx * c.abs();
        let jac = c.abs().powi(self.dim as i32);
        g.values = self.values.iter().map(|v| v / jac).collect();
        if c < 0.0 {
            // x_j ↦ c x_j reverses the order; re-index so node j sits at c·x_{N−j}
            let n = self.n;
            let flip = |j: usize| if j == 0 { None } else { Some(n - j) };
            let mut out = vec![0.0; g.len()];
            for k in 0..g.len() {
                let src = if self.dim == 1 {
                    flip(k)
                } else {
                    match (flip(k / n), flip(k % n)) {
                        (Some(i), Some(j)) => Some(i * n + j),
                        _ => None,
                    }
                };
                if let Some(s) = src {
                    out[k] = g.values[s];
                }
            }
            g.values = out;
        }
        g.center = self.center.iter().zip(b).map(|(x, bb)| c * x + bb).collect();
        Ok(g)
    }

    /// Same density, lattice translated by `b` (law of `X + b`).
    pub fn translated(&self, b: &[f64]) -> Result<Self> {
        self.affine_image(1.0, b)
    }

    /// `Σ_j f_j e^{i<λ, x_j>} Δx^d`.
    pub fn forward_cf(&self, lam: &[f64]) -> Complex64 {
        let cell = self.cell_volume();
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let x = self.coords(k);
                let th: f64 = x.iter().zip(lam).map(|(a, b)| a * b).sum();
                Complex64::from_polar(*v, th)
            })
            .sum::<Complex64>()
            * cell
    }

    pub fn check_invariants(&self) -> Vec<CheckLine> {
        vec![
            CheckLine::at_most("density_pre_clip_mass", (self.pre_clip_mass - 1.0).abs(), MASS_TOL),
            CheckLine::at_most("density_clipped_mass", (self.mass - 1.0).abs(), MASS_TOL),
            CheckLine::at_most("density_boundary_ratio", self.boundary_ratio, BOUNDARY_RATIO),
        ]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        if self.dim == 1 {
            writeln!(w, "x,density")?;
        } else {
            writeln!(w, "x1,x2,density")?;
        }
        for (k, v) in self.values.iter().enumerate() {
            for x in self.coords(k) {
                write!(w, "{x},")?;
            }
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

/// Inverts a CF grid. Fails when `|φ|` has not decayed on the outer shell.
pub fn invert_to_density(cfg: &CharFunctionGrid) -> Result<DensityGrid> {
    let plan = &cfg.plan;
    let shell = cfg.shell_max();
    if shell >= SHELL_TOL {
        return Err(Error::UnderResolved(format!(
            "|φ| = {shell:.3e} on the outer shell of Λ = {:.4e}; increase Λ (and N to keep the window)",
            plan.lambda_max
        )));
    }
    let n = plan.n;
    let h = plan.dlambda();
    let sign = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let raw: Vec<f64> = if plan.dim == 1 {
        let xc = plan.center[0];
        let mut buf: Vec<Complex64> = (0..n)
            .map(|k| cfg.values[k] * Complex64::from_polar(sign(k), -plan.lambda(k)[0] * xc))
            .collect();
        fft.process(&mut buf);
        (0..n).map(|j| h / (2.0 * PI) * sign(j) * buf[j].re).collect()
    } else {
        let (xc, yc) = (plan.center[0], plan.center[1]);
        let mut buf: Vec<Complex64> = (0..n * n)
            .map(|k| {
                let l = plan.lambda(k);
                let (i, j) = (k / n, k % n);
                cfg.values[k] * Complex64::from_polar(sign(i) * sign(j), -(l[0] * xc + l[1] * yc))
            })
            .collect();
        // rows, then columns through a transpose
        buf.par_chunks_mut(n).for_each(|row| fft.process(row));
        let mut t = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                t[j * n + i] = buf[i * n + j];
            }
        }
        t.par_chunks_mut(n).for_each(|col| fft.process(col));
        let k = (h / (2.0 * PI)).powi(2);
        (0..n * n)
            .map(|idx| {
                let (a, b) = (idx / n, idx % n);
                k * sign(a) * sign(b) * t[b * n + a].re
            })
            .collect()
    };
    let mut g = DensityGrid::empty(plan.dim, n, plan.dx(), plan.center.clone());
    g.finish(raw);
    Ok(g)
}
