//! Cut-off schedules, profile functions and the three distances
//!
//! * `d^{(ε)}(t) = ‖X^{(ε)}_t − X^{(ε)}_∞‖`,
//! * `D^{(ε)}(t) = ‖(e^{−tQ}x₀/√ε + I♮_∞) − I♮_∞‖`,
//! * `R(t) = ‖(C_t + I♮_t) − (C_∞ + I♮_∞)‖`,
//!
//! all evaluated in the noise-scaled frame `X/√ε` where every law is a shift
//! of `I♮_t` or `I♮_∞`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::char_engine::{
    check_condition_h, drift_center, invert_to_density, plan_lattice, smoothness_regime, CharFunctionGrid, DensityGrid,
    GridMeta, Horizon, Inatural, RegimeKind, DEFAULT_N_1D, DEFAULT_N_2D,
};
use crate::error::{Error, Result};
use crate::levy_models::{sphere_directions, LevyModel};
use crate::matrix_dynamics::{exp_action, oscillation_envelope, AsymptoticData, DriftSpectrum};
use crate::report::CheckLine;
use crate::sampler::{sample_invariant, sample_ou_exact, RngStream};
use crate::tv_metrics::{tv_empirical, tv_shift, tv_shifted_pair, TvEstimate, TvMethod};

/// Radii probed when (H) has to be checked numerically.
pub const H_RADII: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
/// Largest spread of `‖(r u + I♮_∞) − I♮_∞‖` over directions for isotropy.
pub const ISOTROPY_TOL: f64 = 2e-3;
const PROFILE_TOL: f64 = 0.02;
const TREND_TOL: f64 = 1e-3;
/// Limit vectors evaluated per band.
const BAND_SAMPLES: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSchedule {
    pub t_eps: f64,
    pub w_eps: f64,
    pub gamma: f64,
    pub ell: usize,
    pub eps: f64,
    /// The vanishing perturbation in `w_ε = 1/γ + o(1)`.
    pub w_correction: f64,
}

impl CutoffSchedule {
    pub fn time(&self, c: f64) -> f64 {
        self.t_eps + c * self.w_eps
    }

    /// `t_ε` recomputed from the stored fields.
    pub fn recomputed(&self) -> f64 {
        cutoff_time(self.gamma, self.ell, self.eps)
    }

    pub fn with_correction(mut self, o: f64) -> Self {
        self.w_correction = o;
        self.w_eps = 1.0 / self.gamma + o;
        self
    }
}

fn cutoff_time(gamma: f64, ell: usize, eps: f64) -> f64 {
    let l = (1.0 / eps).ln();
    let mut t = l / (2.0 * gamma);
    if ell > 1 {
        t += (ell - 1) as f64 / gamma * l.ln();
    }
    t
}

pub fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon out of (0,1): {eps}")));
    }
    Ok(())
}

/// `t_ε = (2γ)⁻¹ ln(1/ε) + ((ℓ−1)/γ) ln ln(1/ε)`, `w_ε = 1/γ`.
pub fn cutoff_schedule(gamma: f64, ell: usize, eps: f64) -> Result<CutoffSchedule> {
    check_epsilon(eps)?;
    if !(gamma > 0.0) || ell == 0 {
        return Err(Error::InvalidParameter("need γ > 0 and ℓ ≥ 1".into()));
    }
    let t = cutoff_time(gamma, ell, eps);
    if !(t > 0.0) {
        return Err(Error::NonpositiveCutoffTime(t));
    }
    Ok(CutoffSchedule {
        t_eps: t,
        w_eps: 1.0 / gamma,
        gamma,
        ell,
        eps,
        w_correction: 0.0,
    })
}

/// `(t^{ℓ−1}e^{−γt}/√ε, (2γ)^{1−ℓ}e^{−c})` at `t = t_ε + c w_ε`.
pub fn scaling_limit_ratio(gamma: f64, ell: usize, c: f64, eps: f64) -> Result<(f64, f64)> {
    let s = cutoff_schedule(gamma, ell, eps)?;
    let t = s.time(c);
    let k = (ell - 1) as i32;
    let lhs = (k as f64 * t.ln() - gamma * t - 0.5 * eps.ln()).exp();
    let rhs = (2.0 * gamma).powi(-k) * (-c).exp();
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    DensityShift,
    MonteCarlo { paths: usize, seed: u64 },
}

/// Requires a smoothness regime with a lattice density, or a passing (H) probe.
pub fn density_regime(model: &LevyModel, spec: &DriftSpectrum) -> Result<()> {
    if model.dim() > 2 {
        return Err(Error::MissingDensityRegime("density lattices are limited to d ≤ 2".into()));
    }
    if smoothness_regime(model, spec).regime != RegimeKind::None {
        return Ok(());
    }
    let t0 = 1.0 / spec.min_real();
    let rep = check_condition_h(model, spec, &H_RADII, &|_| t0);
    if rep.passed() {
        Ok(())
    } else {
        Err(Error::MissingDensityRegime(format!("hypothesis (H) not confirmed: {}", rep.note)))
    }
}

type PairCache = Mutex<HashMap<u64, Arc<(DensityGrid, DensityGrid)>>>;

/// Shared state for distance computations on one `(model, Q)` pair: the law
/// of `I♮_∞`, its density, and the densities of `I♮_t` per time.
pub struct Lab<'a> {
    model: &'a LevyModel,
    spec: &'a DriftSpectrum,
    inv: Arc<Inatural>,
    c_inf: DVector<f64>,
    f_inf: OnceLock<Result<DensityGrid>>,
    pairs: PairCache,
    n: usize,
}

impl<'a> Lab<'a> {
    pub fn new(model: &'a LevyModel, spec: &'a DriftSpectrum) -> Result<Self> {
        density_regime(model, spec)?;
        let inv = Arc::new(Inatural::new(model, spec, Horizon::Infinite)?);
        let c_inf = drift_center(spec, &model.total_drift(), Horizon::Infinite)?;
        let n = if model.dim() == 1 { DEFAULT_N_1D } else { DEFAULT_N_2D };
        Ok(Self {
            model,
            spec,
            inv,
            c_inf,
            f_inf: OnceLock::new(),
            pairs: Mutex::new(HashMap::new()),
            n,
        })
    }

    pub fn with_lattice_size(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    fn meta(&self, horizon: Horizon) -> GridMeta {
        GridMeta {
            horizon,
            ..GridMeta::default()
        }
    }

    /// Density of `I♮_∞` centred at the origin.
    pub fn invariant_density(&self) -> Result<&DensityGrid> {
        self.f_inf
            .get_or_init(|| {
                let inv = self.inv.clone();
                let cf = move |l: &[f64]| inv.cf(l);
                let plan = plan_lattice(&[&cf], self.dim(), vec![0.0; self.dim()], 0.0, self.n)?;
                invert_to_density(&CharFunctionGrid::build(plan, self.meta(Horizon::Infinite), cf)?)
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Densities of `I♮_t` and `I♮_∞` on one lattice.
    fn pair(&self, t: f64) -> Result<Arc<(DensityGrid, DensityGrid)>> {
        let key = t.to_bits();
        if let Some(p) = self.pairs.lock().expect("cache").get(&key) {
            return Ok(p.clone());
        }
        let law_t = Arc::new(Inatural::new(self.model, self.spec, Horizon::Finite(t))?);
        let inv = self.inv.clone();
        let cf_t = move |l: &[f64]| law_t.cf(l);
        let cf_inf = move |l: &[f64]| inv.cf(l);
        let plan = plan_lattice(&[&cf_t, &cf_inf], self.dim(), vec![0.0; self.dim()], 0.0, self.n)?;
        let f_t = invert_to_density(&CharFunctionGrid::build(plan.clone(), self.meta(Horizon::Finite(t)), cf_t)?)?;
        let f_inf = invert_to_density(&CharFunctionGrid::build(plan, self.meta(Horizon::Infinite), cf_inf)?)?;
        let p = Arc::new((f_t, f_inf));
        self.pairs.lock().expect("cache").insert(key, p.clone());
        Ok(p)
    }

    fn check_time(t: f64) -> Result<()> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::NegativeTime(t));
        }
        Ok(())
    }

    /// `‖(s + I♮_∞) − I♮_∞‖`, reported as 1 with a flag once `s` leaves the lattice.
    pub fn shift_distance(&self, shift: &[f64]) -> Result<TvEstimate> {
        let f = self.invariant_density()?;
        match tv_shift(f, shift) {
            Err(Error::OffLattice { .. }) => Ok(TvEstimate::beyond_resolution(f.dx)),
            other => other,
        }
    }

    /// `D^{(ε)}(t)`.
    pub fn auxiliary(&self, eps: f64, x0: &DVector<f64>, t: f64) -> Result<TvEstimate> {
        Self::check_time(t)?;
        let s = exp_action(self.spec, t, x0)? / eps.sqrt();
        self.shift_distance(s.as_slice())
    }

    /// `d^{(ε)}(t)` by the density method.
    pub fn distance(&self, eps: f64, x0: &DVector<f64>, t: f64) -> Result<TvEstimate> {
        Self::check_time(t)?;
        if t == 0.0 {
            // a point mass against a law with a density
            return Ok(TvEstimate::beyond_resolution(self.invariant_density()?.dx));
        }
        let p = self.pair(t)?;
        let c_t = drift_center(self.spec, &self.model.total_drift(), Horizon::Finite(t))?;
        let s = exp_action(self.spec, t, x0)? / eps.sqrt() + c_t - &self.c_inf;
        let mut e = tv_shifted_pair(&p.0, &p.1, s.as_slice())?;
        e.diagnostics.beyond_resolution = s.amax() > p.1.half_width();
        Ok(e)
    }

    /// `R(t)`.
    pub fn error_term(&self, t: f64) -> Result<TvEstimate> {
        Self::check_time(t)?;
        if t == 0.0 {
            return Ok(TvEstimate::beyond_resolution(self.invariant_density()?.dx));
        }
        let p = self.pair(t)?;
        let c_t = drift_center(self.spec, &self.model.total_drift(), Horizon::Finite(t))?;
        let s = c_t - &self.c_inf;
        tv_shifted_pair(&p.0, &p.1, s.as_slice())
    }

    /// `d^{(ε)}(t)` from exact samples of `X_t` and `X_∞`.
    pub fn distance_mc(&self, eps: f64, x0: &DVector<f64>, t: f64, paths: usize, stream: &RngStream) -> Result<TvEstimate> {
        let xs = sample_ou_exact(self.model, self.spec, eps, x0, t, paths, &stream.derive(1))?;
        let ys = sample_invariant(self.model, self.spec, eps, paths, &stream.derive(2))?;
        tv_empirical(&xs, &ys)
    }
}

/// `‖(e^{−tQ}x₀/√ε + I♮_∞) − I♮_∞‖`.
pub fn auxiliary_metric(model: &LevyModel, spec: &DriftSpectrum, eps: f64, x0: &DVector<f64>, t: f64) -> Result<TvEstimate> {
    check_epsilon(eps)?;
    Lab::new(model, spec)?.auxiliary(eps, x0, t)
}

/// `R(t) = ‖(C_t + I♮_t) − X^{(1)}_∞‖`.
pub fn error_term(model: &LevyModel, spec: &DriftSpectrum, t: f64) -> Result<TvEstimate> {
    if !(t > 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Lab::new(model, spec)?.error_term(t)
}

/// `d^{(ε)}(t)` on a time grid.
pub fn distance_curve(
    model: &LevyModel,
    spec: &DriftSpectrum,
    eps: f64,
    x0: &DVector<f64>,
    t_grid: &[f64],
    method: Method,
) -> Result<Vec<(f64, TvEstimate)>> {
    check_epsilon(eps)?;
    let lab = Lab::new(model, spec)?;
    t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let e = match method {
                Method::DensityShift => lab.distance(eps, x0, t)?,
                Method::MonteCarlo { paths, seed } => lab.distance_mc(eps, x0, t, paths, &RngStream::new(seed, k as u64))?,
            };
            Ok((t, e))
        })
        .collect()
}

/// The real profile shift `(2γ)^{1−ℓ}e^{−c}v`, rejecting a complex residual.
pub fn profile_shift(asym: &AsymptoticData, c: f64) -> Result<Vec<f64>> {
    let im = asym.v_sum.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    let scale = asym.v_sum.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
    if im > 1e-10 * scale {
        return Err(Error::ComplexShiftResidual(im));
    }
    let k = (2.0 * asym.gamma).powi(1 - asym.ell as i32) * (-c).exp();
    Ok(asym.v_sum.iter().map(|z| k * z.re).collect())
}

fn profile_with(lab: &Lab, model: &LevyModel, spec: &DriftSpectrum, asym: &AsymptoticData, c: f64, method: Method) -> Result<TvEstimate> {
    if asym.oscillatory {
        return Err(Error::InvalidParameter(
            "oscillatory asymptotics have no single profile; use oscillation_profile_band".into(),
        ));
    }
    let shift = profile_shift(asym, c)?;
    match method {
        Method::DensityShift => lab.shift_distance(&shift),
        Method::MonteCarlo { paths, seed } => {
            let stream = RngStream::new(seed, c.to_bits());
            let mut xs = sample_invariant(model, spec, 1.0, paths, &stream.derive(1))?;
            let ys = sample_invariant(model, spec, 1.0, paths, &stream.derive(2))?;
            let d = xs.dim;
            for (k, v) in xs.values.iter_mut().enumerate() {
                *v += shift[k % d];
            }
            tv_empirical(&xs, &ys)
        }
    }
}

/// `G_{x₀}(c) = ‖((2γ)^{1−ℓ}e^{−c}v + I♮_∞) − I♮_∞‖`.
pub fn profile_value(model: &LevyModel, spec: &DriftSpectrum, asym: &AsymptoticData, c: f64, method: Method) -> Result<TvEstimate> {
    let lab = Lab::new(model, spec)?;
    profile_with(&lab, model, spec, asym, c, method)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub c_grid: Vec<f64>,
    pub g_values: Vec<f64>,
    pub estimates: Vec<TvEstimate>,
    pub method: Method,
    pub gamma: f64,
    pub ell: usize,
    /// Real part of `v(x₀)`.
    pub v: Vec<f64>,
    /// `(G(c_min), G(c_max))`.
    pub limits_check: (f64, f64),
}

impl ProfileCurve {
    /// Largest increase of `G` along the grid.
    pub fn monotonicity_violation(&self) -> f64 {
        self.g_values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn limits_ok(&self) -> bool {
        self.limits_check.0 >= 0.95 && self.limits_check.1 <= 0.05
    }
}

/// `G` on a grid of `c` values (25 points on `[−6, 6]` by default).
pub fn profile_curve(
    model: &LevyModel,
    spec: &DriftSpectrum,
    asym: &AsymptoticData,
    c_grid: &[f64],
    method: Method,
) -> Result<ProfileCurve> {
    let lab = Lab::new(model, spec)?;
    let estimates: Vec<TvEstimate> = c_grid
        .iter()
        .map(|&c| profile_with(&lab, model, spec, asym, c, method))
        .collect::<Result<_>>()?;
    let g_values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let limits_check = (*g_values.first().unwrap_or(&f64::NAN), *g_values.last().unwrap_or(&f64::NAN));
    Ok(ProfileCurve {
        c_grid: c_grid.to_vec(),
        g_values,
        estimates,
        method,
        gamma: asym.gamma,
        ell: asym.ell,
        v: asym.v_sum.iter().map(|z| z.re).collect(),
        limits_check,
    })
}

pub fn default_c_grid() -> Vec<f64> {
    (0..25).map(|k| -6.0 + 0.5 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub radius: f64,
    pub values: Vec<f64>,
    pub max_gap: f64,
    pub passed: bool,
}

/// Spread of `‖(r u + I♮_∞) − I♮_∞‖` over unit vectors `u`.
pub fn check_invariance_property(f_inf: &DensityGrid, radius: f64, dirs: &[Vec<f64>]) -> InvarianceReport {
    let values: Vec<f64> = dirs
        .par_iter()
        .map(|u| {
            let s: Vec<f64> = u.iter().map(|x| x * radius).collect();
            tv_shift(f_inf, &s).map(|e| e.value).unwrap_or(1.0)
        })
        .collect();
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_gap = if values.is_empty() { 0.0 } else { hi - lo };
    InvarianceReport {
        radius,
        values,
        max_gap,
        passed: max_gap <= ISOTROPY_TOL,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBand {
    pub c: f64,
    pub lower: TvEstimate,
    pub upper: TvEstimate,
    pub width: f64,
    /// Limit vectors (scaled to the profile shift) with their distances.
    pub samples: Vec<(Vec<f64>, f64)>,
    /// Single profile value when the band collapses.
    pub profile: Option<f64>,
    pub isotropy: Option<InvarianceReport>,
}

fn band_with(lab: &Lab, asym: &AsymptoticData, c: f64, t_probe_grid: &[f64]) -> Result<ProfileBand> {
    if !asym.oscillatory {
        let shift = profile_shift(asym, c)?;
        let e = lab.shift_distance(&shift)?;
        return Ok(ProfileBand {
            c,
            lower: e.clone(),
            upper: e.clone(),
            width: 0.0,
            samples: vec![(shift, e.value)],
            profile: Some(e.value),
            isotropy: None,
        });
    }
    let env = oscillation_envelope(asym, t_probe_grid);
    let k = (2.0 * asym.gamma).powi(1 - asym.ell as i32) * (-c).exp();
    let m = env.basin_samples.len();
    let picks: Vec<&DVector<f64>> = if m > BAND_SAMPLES {
        (0..BAND_SAMPLES).map(|k| &env.basin_samples[k * m / BAND_SAMPLES]).collect()
    } else {
        env.basin_samples.iter().collect()
    };
    let estimates: Vec<(Vec<f64>, TvEstimate)> = picks
        .par_iter()
        .map(|b| {
            let s: Vec<f64> = b.iter().map(|x| k * x).collect();
            lab.shift_distance(&s).map(|e| (s, e))
        })
        .collect::<Result<_>>()?;
    let lo = estimates
        .iter()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .map(|p| p.1.clone())
        .ok_or_else(|| Error::InvalidParameter("empty basin sample".into()))?;
    let hi = estimates
        .iter()
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .map(|p| p.1.clone())
        .expect("nonempty");
    let constant = env.limsup_est - env.liminf_est <= 1e-9 * env.limsup_est.max(1.0);
    let isotropy = if constant && lab.dim() == 2 {
        let dirs = sphere_directions(2, 16);
        Some(check_invariance_property(lab.invariant_density()?, k * env.liminf_est, &dirs))
    } else {
        None
    };
    let collapsed = isotropy.as_ref().is_some_and(|r| r.passed);
    let profile = collapsed.then(|| estimates.iter().map(|p| p.1.value).sum::<f64>() / estimates.len() as f64);
    Ok(ProfileBand {
        c,
        width: hi.value - lo.value,
        lower: lo,
        upper: hi,
        samples: estimates.into_iter().map(|(s, e)| (s, e.value)).collect(),
        profile,
        isotropy,
    })
}

/// Range of `‖(v + I♮_∞) − I♮_∞‖` over the limit set of `v(t, x₀)`; collapses
/// to one value when `|v(t)|` is constant and the invariant law is isotropic.
pub fn oscillation_profile_band(
    model: &LevyModel,
    spec: &DriftSpectrum,
    asym: &AsymptoticData,
    c: f64,
    t_probe_grid: &[f64],
) -> Result<ProfileBand> {
    let lab = Lab::new(model, spec)?;
    band_with(&lab, asym, c, t_probe_grid)
}

/// One period-covering probe grid for the oscillating limit vector.
pub fn default_probe_grid(asym: &AsymptoticData) -> Vec<f64> {
    let w = asym.frequencies.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    let wmin = asym
        .frequencies
        .iter()
        .filter(|f| f.abs() > 1e-9)
        .fold(f64::INFINITY, |m, f| m.min(f.abs()));
    if !wmin.is_finite() {
        return vec![0.0];
    }
    let horizon = 20.0 * std::f64::consts::PI / wmin;
    let n = ((horizon * w / 0.05).ceil() as usize).clamp(64, 4096);
    (0..n).map(|k| horizon * k as f64 / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffLevel {
    Cutoff,
    Window,
    Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub eps: f64,
    pub t_or_c: f64,
    pub value: f64,
    pub stderr: f64,
    pub method: TvMethod,
    pub flags: String,
}

impl CurveRow {
    pub fn new(eps: f64, t_or_c: f64, e: &TvEstimate) -> Self {
        Self {
            eps,
            t_or_c,
            value: e.value,
            stderr: e.stderr,
            method: e.method,
            flags: if e.diagnostics.beyond_resolution {
                "beyond_resolution".into()
            } else {
                String::new()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub level: CutoffLevel,
    pub passed: bool,
    pub checks: Vec<CheckLine>,
    pub schedules: Vec<CutoffSchedule>,
    /// Distances `d^{(ε)}` at `c·t_ε` (cut-off) or `t_ε + c w_ε` (window, profile).
    pub rows: Vec<CurveRow>,
    /// Profile (or band midpoint) against `c`, when computed.
    pub profile: Vec<(f64, f64, f64)>,
    pub max_deviation: Option<f64>,
    pub band_width: Option<f64>,
}

const CUTOFF_FACTORS: [f64; 5] = [0.25, 0.5, 0.75, 1.5, 2.0];

/// Checks cut-off, window or profile behaviour of `d^{(ε)}` along a decreasing
/// list of `ε` values.
pub fn verify_cutoff(
    model: &LevyModel,
    spec: &DriftSpectrum,
    eps_list: &[f64],
    x0: &DVector<f64>,
    level: CutoffLevel,
) -> Result<CutoffReport> {
    if eps_list.len() < 3
        || eps_list.windows(2).any(|w| !(w[1] < w[0]))
        || eps_list[0] / eps_list[eps_list.len() - 1] < 1e4 * (1.0 - 1e-12)
    {
        return Err(Error::InsufficientEpsilonRange);
    }
    for &e in eps_list {
        check_epsilon(e)?;
    }
    let asym = crate::matrix_dynamics::asymptotic_decomposition(spec, x0)?;
    let lab = Lab::new(model, spec)?;
    let schedules: Vec<CutoffSchedule> = eps_list
        .iter()
        .map(|&e| cutoff_schedule(asym.gamma, asym.ell, e))
        .collect::<Result<_>>()?;
    let last = schedules.len() - 1;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut profile = Vec::new();
    let (mut max_deviation, mut band_width) = (None, None);

    // windows reaching before time zero see the point mass at x₀
    let eval = |s: &CutoffSchedule, t: f64| lab.distance(s.eps, x0, t.max(0.0));
    match level {
        CutoffLevel::Cutoff => {
            let table: Vec<Vec<f64>> = schedules
                .iter()
                .map(|s| {
                    CUTOFF_FACTORS
                        .iter()
                        .map(|&c| {
                            let e = eval(s, c * s.t_eps)?;
                            Ok(e)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .zip(&schedules)
                .map(|(es, s)| {
                    for (c, e) in CUTOFF_FACTORS.iter().zip(&es) {
                        rows.push(CurveRow::new(s.eps, *c, e));
                    }
                    es.iter().map(|e| e.value).collect()
                })
                .collect();
            for (j, &c) in CUTOFF_FACTORS.iter().enumerate() {
                let col: Vec<f64> = table.iter().map(|r| r[j]).collect();
                let (trend, terminal) = if c < 1.0 {
                    (
                        col.windows(2).map(|w| w[0] - w[1]).fold(0.0f64, f64::max),
                        1.0 - col[last],
                    )
                } else {
                    (col.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max), col[last])
                };
                checks.push(CheckLine::at_most(format!("trend_c{c}"), trend, TREND_TOL));
                checks.push(CheckLine::at_most(format!("terminal_c{c}"), terminal, 0.05));
            }
        }
        CutoffLevel::Window | CutoffLevel::Profile => {
            let c_grid = default_c_grid();
            for s in &schedules {
                for &c in &c_grid {
                    rows.push(CurveRow::new(s.eps, c, &eval(s, s.time(c))?));
                }
            }
            let smallest: Vec<f64> = rows[last * c_grid.len()..].iter().map(|r| r.value).collect();
            checks.push(CheckLine::at_most("left_limit", 1.0 - smallest[0], 0.05));
            checks.push(CheckLine::at_most("right_limit", smallest[smallest.len() - 1], 0.05));
            let rise = smallest.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
            checks.push(CheckLine::at_most("monotone_in_c", rise, TREND_TOL));
            if level == CutoffLevel::Profile {
                let probe = default_probe_grid(&asym);
                let bands: Vec<ProfileBand> = c_grid
                    .iter()
                    .map(|&c| band_with(&lab, &asym, c, &probe))
                    .collect::<Result<_>>()?;
                let width = bands.iter().map(|b| b.width).fold(0.0, f64::max);
                let dev = bands
                    .iter()
                    .zip(&smallest)
                    .map(|(b, d)| (d - b.upper.value).max(b.lower.value - d).max(0.0).max((d - 0.5 * (b.lower.value + b.upper.value)).abs() - 0.5 * b.width))
                    .fold(0.0, f64::max);
                for b in &bands {
                    profile.push((b.c, b.lower.value, b.upper.value));
                }
                checks.push(CheckLine::at_most("profile_deviation", dev, PROFILE_TOL));
                checks.push(CheckLine::at_most("band_width", width, PROFILE_TOL));
                max_deviation = Some(dev);
                band_width = Some(width);
            }
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(CutoffReport {
        level,
        passed,
        checks,
        schedules,
        rows,
        profile,
        max_deviation,
        band_width,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichProbe {
    pub eps: f64,
    pub t: f64,
    pub d: f64,
    pub aux: f64,
    pub r: f64,
}

impl SandwichProbe {
    /// `|d − D| − R`; non-positive when the inequality holds.
    pub fn excess(&self) -> f64 {
        (self.d - self.aux).abs() - self.r
    }
}

/// `d`, `D` and `R` on an `(ε, t)` grid.
pub fn sandwich_grid(model: &LevyModel, spec: &DriftSpectrum, x0: &DVector<f64>, eps: &[f64], ts: &[f64]) -> Result<Vec<SandwichProbe>> {
    let lab = Lab::new(model, spec)?;
    let mut out = Vec::new();
    for &t in ts {
        let r = lab.error_term(t)?.value;
        for &e in eps {
            out.push(SandwichProbe {
                eps: e,
                t,
                d: lab.distance(e, x0, t)?.value,
                aux: lab.auxiliary(e, x0, t)?.value,
                r,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_models::StableParams;
    use crate::matrix_dynamics::{asymptotic_decomposition, validate_mplus};
    use nalgebra::DMatrix;
    use statrs::function::erf::erf;
    use std::f64::consts::PI;

    fn q1(g: f64) -> DriftSpectrum {
        validate_mplus(&DMatrix::from_element(1, 1, g)).unwrap()
    }

    fn x1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    /// `‖N(m₁, v₁) − N(m₂, v₂)‖` by a fine midpoint rule.
    fn normal_tv(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
        let pdf = |x: f64, m: f64, v: f64| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        let lo = (m1 - 12.0 * v1.sqrt()).min(m2 - 12.0 * v2.sqrt());
        let hi = (m1 + 12.0 * v1.sqrt()).max(m2 + 12.0 * v2.sqrt());
        let n = 400_000;
        let h = (hi - lo) / n as f64;
        (0..n)
            .map(|k| {
                let x = lo + (k as f64 + 0.5) * h;
                (pdf(x, m1, v1) - pdf(x, m2, v2)).abs()
            })
            .sum::<f64>()
            * h
            / 2.0
    }

    #[test]
    fn schedules() {
        let s = cutoff_schedule(1.0, 1, 1e-4).unwrap();
        assert!((s.t_eps - 2.0 * 10f64.ln()).abs() < 1e-12 && s.w_eps == 1.0);
        let s = cutoff_schedule(2.0, 2, (-4.0f64).exp()).unwrap();
        assert!((s.t_eps - (1.0 + 0.5 * 4f64.ln())).abs() < 1e-12 && s.w_eps == 0.5);
        assert_eq!(s.recomputed(), s.t_eps);
        assert!(matches!(cutoff_schedule(1.0, 2, 0.9), Err(Error::NonpositiveCutoffTime(_))));
        assert!(cutoff_schedule(1.0, 1, 1.5).is_err());
    }

    #[test]
    fn scaling_limit_is_exact_for_simple_eigenvalues() {
        for c in [-2.0, 0.0, 2.0] {
            let (l, r) = scaling_limit_ratio(2.0, 1, c, 1e-10).unwrap();
            assert!((l / r - 1.0).abs() < 1e-9);
        }
        // logarithmic convergence for ℓ = 2: the ratio approaches 1 as ε → 0
        let errs: Vec<f64> = [1e-10, 1e-40, 1e-160]
            .iter()
            .map(|&e| {
                let (l, r) = scaling_limit_ratio(1.0, 2, 0.0, e).unwrap();
                (l / r - 1.0).abs()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2]);
    }

    #[test]
    fn gaussian_profile_and_auxiliary() {
        let m = LevyModel::brownian(1, 1.0).unwrap();
        let q = q1(1.0);
        let asym = asymptotic_decomposition(&q, &x1(1.0)).unwrap();
        let g = profile_value(&m, &q, &asym, 0.0, Method::DensityShift).unwrap();
        assert!((g.value - erf(0.5)).abs() < 1e-4, "{}", g.value);
        let d = auxiliary_metric(&m, &q, 1.0 - 1e-12, &x1(1.0), 0.0).unwrap();
        assert!((d.value - erf(0.5)).abs() < 1e-4);
        let far = auxiliary_metric(&m, &q, 1e-8, &x1(1.0), 0.0).unwrap();
        assert!(far.value == 1.0 && far.diagnostics.beyond_resolution);
        let late = auxiliary_metric(&m, &q, 0.5, &x1(1.0), 40.0).unwrap();
        assert!(late.value < 1e-12);
        let curve = profile_curve(&m, &q, &asym, &default_c_grid(), Method::DensityShift).unwrap();
        assert!(curve.limits_ok() && curve.monotonicity_violation() <= 1e-12);
    }

    #[test]
    fn cauchy_profile() {
        let m = LevyModel::stable(StableParams::symmetric(1.0, 1.0).unwrap()).unwrap();
        let q = q1(1.0);
        let asym = asymptotic_decomposition(&q, &x1(2.0)).unwrap();
        let g = profile_value(&m, &q, &asym, 0.0, Method::DensityShift).unwrap();
        assert!((g.value - 0.5).abs() < 1e-3, "{}", g.value);
        let g = profile_value(&m, &q, &asym, 1.0, Method::DensityShift).unwrap();
        assert!((g.value - 2.0 / PI * ((-1.0f64).exp()).atan()).abs() < 1e-3);
    }

    #[test]
    fn gaussian_distance_and_error_term() {
        let m = LevyModel::brownian(1, 1.0).unwrap();
        let q = q1(1.0);
        let lab = Lab::new(&m, &q).unwrap();
        let (eps, x0): (f64, f64) = (1e-2, 1.0);
        for t in [0.3f64, 1.0, 2.5, 5.0] {
            let vt = 0.5 * (1.0 - (-2.0 * t).exp());
            let exact = normal_tv((-t).exp() * x0 / eps.sqrt(), vt, 0.0, 0.5);
            let d = lab.distance(eps, &x1(x0), t).unwrap().value;
            assert!((d - exact).abs() < 1e-3, "t={t}: {d} vs {exact}");
            let r = lab.error_term(t).unwrap().value;
            assert!((r - normal_tv(0.0, vt, 0.0, 0.5)).abs() < 1e-3);
        }
        // tiny t: the variance ratio is extreme
        let r = lab.error_term(0.01).unwrap().value;
        let vt = 0.5 * (1.0 - (-0.02f64).exp());
        assert!((r - normal_tv(0.0, vt, 0.0, 0.5)).abs() < 1e-3);
        assert_eq!(lab.distance(eps, &x1(x0), 0.0).unwrap().value, 1.0);
    }

    #[test]
    fn sandwich_and_decay() {
        let m = LevyModel::stable(StableParams::symmetric(1.0, 1.0).unwrap()).unwrap();
        let q = q1(1.0);
        let probes = sandwich_grid(&m, &q, &x1(2.0), &[1e-2, 1e-4], &[0.5, 2.0, 6.0]).unwrap();
        for p in &probes {
            assert!(p.excess() <= 1e-3, "{p:?}");
        }
        let lab = Lab::new(&m, &q).unwrap();
        let r: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|&t| lab.error_term(t).unwrap().value).collect();
        assert!(r.windows(2).all(|w| w[1] < w[0]) && r[4] < 0.01, "{r:?}");
    }

    #[test]
    fn no_cutoff_from_origin() {
        let m = LevyModel::gaussian(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let q = q1(1.0);
        let lab = Lab::new(&m, &q).unwrap();
        let zero = x1(0.0);
        for t in [0.5, 2.0] {
            let a = lab.distance(1e-2, &zero, t).unwrap().value;
            let b = lab.distance(1e-6, &zero, t).unwrap().value;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_methods_agree() {
        let m = LevyModel::brownian(1, 1.0).unwrap();
        let q = q1(1.0);
        let grid = distance_curve(&m, &q, 1e-4, &x1(1.0), &[4.0, 5.0], Method::DensityShift).unwrap();
        let mc = distance_curve(&m, &q, 1e-4, &x1(1.0), &[4.0, 5.0], Method::MonteCarlo { paths: 100_000, seed: 3 }).unwrap();
        for (a, b) in grid.iter().zip(&mc) {
            assert!((a.1.value - b.1.value).abs() <= 0.02f64.max(3.0 * b.1.stderr), "{a:?} {b:?}");
        }
    }

    #[test]
    fn cutoff_levels_for_brownian() {
        let m = LevyModel::brownian(1, 1.0).unwrap();
        let q = q1(1.0);
        let eps = [1e-2, 1e-4, 1e-6, 1e-8];
        let r = verify_cutoff(&m, &q, &eps, &x1(1.0), CutoffLevel::Cutoff).unwrap();
        assert!(r.passed, "{:?}", r.checks);
        let r = verify_cutoff(&m, &q, &eps, &x1(1.0), CutoffLevel::Profile).unwrap();
        assert!(r.passed, "{:?}", r.checks);
        assert!(r.max_deviation.unwrap() < 0.02);
        assert!(matches!(
            verify_cutoff(&m, &q, &[1e-2, 1e-3, 1e-4], &x1(1.0), CutoffLevel::Cutoff),
            Err(Error::InsufficientEpsilonRange)
        ));
    }

    #[test]
    fn invariance_property() {
        let iso = DensityGrid::from_fn(2, 512, 0.04, vec![0.0, 0.0], |x| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp()).unwrap();
        let dirs = sphere_directions(2, 12);
        assert!(check_invariance_property(&iso, 1.5, &dirs).passed);
        let aniso =
            DensityGrid::from_fn(2, 512, 0.06, vec![0.0, 0.0], |x| (-(x[0] * x[0] + x[1] * x[1] / 4.0) / 2.0).exp()).unwrap();
        let r = check_invariance_property(&aniso, 1.5, &dirs);
        assert!(!r.passed);
        // axis values are erf(r/(2√2 σ)) with σ = 1 and 2
        let expect = erf(1.5 / (2.0 * 2f64.sqrt())) - erf(1.5 / (4.0 * 2f64.sqrt()));
        assert!((r.max_gap - expect).abs() < 2e-3, "{} vs {expect}", r.max_gap);
    }

    #[test]
    fn missing_density_regime() {
        let cp = LevyModel::compound_poisson(1.0, crate::levy_models::JumpLaw::Exponential { rate: 1.0 }).unwrap();
        assert!(matches!(Lab::new(&cp, &q1(1.0)), Err(Error::MissingDensityRegime(_))));
    }
}
