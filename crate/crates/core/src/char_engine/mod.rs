//! Characteristic functions of `I♮_t`, of the transition law and of the
//! invariant law, plus generating triples.
//!
//! Everything is expressed through
//! `log E e^{i<λ, I♮_t>} = ∫₀ᵗ ψ♮(e^{−sQᵀ}λ) ds`.
//! The Gaussian part always has a closed form (Lyapunov equation); stable
//! parts have one when `Q` is scalar (1D) or conformal (`Q + Qᵀ = 2γI`).
//! Everything else goes through adaptive quadrature in `s`.

mod checks;
mod grid;
mod special;

pub use checks::{check_condition_h, smoothness_regime, RegimeKind, SmoothnessCertificate};
pub use grid::{
    invert_to_density, plan_lattice, CharFunctionGrid, DensityGrid, GridMeta, LatticePlan, BOUNDARY_RATIO,
    DEFAULT_N_1D, DEFAULT_N_2D, SHELL_TOL,
};

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_models::{has_log_moment, norm, JumpLaw, JumpPart, LevyModel, StableParams};
use crate::matrix_dynamics::{exp_action, DecayConstants, DriftSpectrum};
use crate::quadrature::Quadrature;

/// Absolute tolerance of the `s`-integrals.
pub const CF_QUAD_TOL: f64 = 1e-10;

/// Time horizon of a law: a finite time or the stationary limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

impl Horizon {
    fn validate(self) -> Result<()> {
        match self {
            Horizon::Finite(t) if !(t >= 0.0) || !t.is_finite() => Err(Error::NegativeTime(t)),
            _ => Ok(()),
        }
    }
}

/// Solves `QX + XQᵀ = S`.
pub fn lyapunov(q: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = q.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let k = id.kronecker(q) + q.kronecker(&id);
    let rhs = DVector::from_column_slice(s.as_slice());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("Lyapunov operator is singular".into()))?;
    let x = DMatrix::from_column_slice(d, d, x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// `∫₀ᵗ e^{−sQ} S e^{−sQᵀ} ds`.
pub fn integrated_covariance(spec: &DriftSpectrum, s: &DMatrix<f64>, horizon: Horizon) -> Result<DMatrix<f64>> {
    horizon.validate()?;
    let d = spec.dim();
    if s.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(d, d));
    }
    let x = lyapunov(spec.matrix(), s)?;
    match horizon {
        Horizon::Infinite => Ok(x),
        Horizon::Finite(t) => {
            let e = spec.exp_matrix(t)?;
            let r = &x - &e * &x * e.transpose();
            Ok((&r + r.transpose()) * 0.5)
        }
    }
}

/// `C_t = (I − e^{−tQ})Q⁻¹a`.
pub fn drift_center(spec: &DriftSpectrum, a: &DVector<f64>, horizon: Horizon) -> Result<DVector<f64>> {
    horizon.validate()?;
    let qinv_a = spec
        .matrix()
        .clone()
        .lu()
        .solve(a)
        .ok_or_else(|| Error::InvalidParameter("Q is singular".into()))?;
    match horizon {
        Horizon::Infinite => Ok(qinv_a),
        Horizon::Finite(t) => Ok(&qinv_a - exp_action(spec, t, &qinv_a)?),
    }
}

#[derive(Debug, Clone)]
enum ClosedLeaf {
    /// Strictly stable 1D leaf; exponent multiplied by `factor`.
    Stable { params: StableParams, factor: f64 },
    /// `−c|λ|^α · factor`.
    Isotropic { alpha: f64, c: f64, factor: f64 },
    /// 1D atoms `(point, weight, compensated)` under the rate `gamma`.
    Atoms { atoms: Vec<(f64, f64, bool)>, gamma: f64, decay: f64 },
}

/// How `∫ψ♮` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfMode {
    /// Closed forms wherever available.
    Auto,
    /// Quadrature in `s` for every component, Gaussian included.
    Quadrature,
}

/// The law of `I♮_t` (or `I♮_∞`) prepared for repeated CF evaluation.
#[derive(Debug, Clone)]
pub struct Inatural {
    dim: usize,
    horizon: Horizon,
    spec: DriftSpectrum,
    sigma: DMatrix<f64>,
    /// Covariance of the Gaussian part at the horizon (closed form).
    sigma_t: Option<DMatrix<f64>>,
    closed: Vec<ClosedLeaf>,
    numeric: Vec<JumpPart>,
    decay: Option<DecayConstants>,
    tail_power: f64,
}

fn small_z_power(leaf: &JumpPart) -> f64 {
    match leaf {
        JumpPart::Stable { params } => params.alpha,
        JumpPart::IsotropicStable { alpha, .. } => *alpha,
        JumpPart::CompoundPoisson { law, .. } => match law {
            JumpLaw::Pareto { alpha, .. } => alpha.min(1.0),
            JumpLaw::InverseLogSquare => 0.05,
            _ => 1.0,
        },
        _ => 1.0,
    }
}

/// `e^{−γt}`, zero at `t = ∞`.
fn horizon_decay(gamma: f64, horizon: Horizon) -> f64 {
    match horizon {
        Horizon::Finite(t) => (-gamma * t).exp(),
        Horizon::Infinite => 0.0,
    }
}

fn stable_factor(alpha: f64, gamma: f64, horizon: Horizon) -> f64 {
    let r = alpha * gamma;
    match horizon {
        Horizon::Infinite => 1.0 / r,
        Horizon::Finite(t) => -(-r * t).exp_m1() / r,
    }
}

impl Inatural {
    pub fn new(model: &LevyModel, spec: &DriftSpectrum, horizon: Horizon) -> Result<Self> {
        Self::with_mode(model, spec, horizon, CfMode::Auto)
    }

    pub fn with_mode(model: &LevyModel, spec: &DriftSpectrum, horizon: Horizon, mode: CfMode) -> Result<Self> {
        horizon.validate()?;
        let d = model.dim();
        if spec.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: spec.dim(),
            });
        }
        if horizon == Horizon::Infinite && model.has_jumps() {
            let report = has_log_moment(model);
            if !report.passed() {
                return Err(Error::LogMomentRequired(report.note));
            }
        }
        let model = model.drift_free();
        let mut closed = Vec::new();
        let mut numeric = Vec::new();
        for leaf in model.jumps().leaves() {
            let gamma = if d == 1 { spec.scalar() } else { spec.conformal_rate() };
            match (leaf, gamma, mode) {
                (JumpPart::Stable { params }, Some(g), CfMode::Auto) => closed.push(ClosedLeaf::Stable {
                    params: *params,
                    factor: stable_factor(params.alpha, g, horizon),
                }),
                (JumpPart::IsotropicStable { alpha, c }, Some(g), CfMode::Auto) => closed.push(ClosedLeaf::Isotropic {
                    alpha: *alpha,
                    c: *c,
                    factor: stable_factor(*alpha, g, horizon),
                }),
                (JumpPart::Discrete { measure }, Some(g), CfMode::Auto) if d == 1 => closed.push(ClosedLeaf::Atoms {
                    atoms: measure.atoms.iter().map(|a| (a.point[0], a.weight, a.point[0].abs() <= 1.0)).collect(),
                    gamma: g,
                    decay: horizon_decay(g, horizon),
                }),
                (JumpPart::CompoundPoisson { rate, law: JumpLaw::Atoms { atoms } }, Some(g), CfMode::Auto) if d == 1 => {
                    closed.push(ClosedLeaf::Atoms {
                        atoms: atoms.iter().map(|a| (a.point[0], rate * a.weight, false)).collect(),
                        gamma: g,
                        decay: horizon_decay(g, horizon),
                    })
                }
                (leaf, _, _) => numeric.push(leaf.clone()),
            }
        }
        let sigma_t = match mode {
            CfMode::Auto => Some(integrated_covariance(spec, model.sigma(), horizon)?),
            CfMode::Quadrature => None,
        };
        let needs_quadrature = !numeric.is_empty() || sigma_t.is_none();
        let decay = if needs_quadrature && horizon == Horizon::Infinite {
            Some(spec.decay()?)
        } else {
            None
        };
        let tail_power = numeric.iter().map(small_z_power).fold(2.0, f64::min);
        Ok(Self {
            dim: d,
            horizon,
            spec: spec.clone(),
            sigma: model.sigma().clone(),
            sigma_t,
            closed,
            numeric,
            decay,
            tail_power,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    /// Covariance of the Gaussian component at the horizon.
    pub fn gaussian_covariance(&self) -> Result<DMatrix<f64>> {
        match &self.sigma_t {
            Some(s) => Ok(s.clone()),
            None => integrated_covariance(&self.spec, &self.sigma, self.horizon),
        }
    }

    /// True when no `s`-quadrature is needed.
    pub fn is_closed_form(&self) -> bool {
        self.numeric.is_empty() && self.sigma_t.is_some()
    }

    /// `∫₀ᵗ ψ♮(e^{−sQᵀ}λ) ds`.
    pub fn log_cf(&self, lam: &[f64]) -> Result<Complex64> {
        if lam.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: lam.len(),
            });
        }
        if lam.iter().all(|x| *x == 0.0) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        if let Some(s) = &self.sigma_t {
            let v = DVector::from_column_slice(lam);
            acc.re -= 0.5 * v.dot(&(s * &v));
        }
        for leaf in &self.closed {
            acc += match *leaf {
                ClosedLeaf::Stable { params, factor } => params.strict_exponent(lam[0]) * factor,
                ClosedLeaf::Isotropic { alpha, c, factor } => Complex64::new(-c * norm(lam).powf(alpha) * factor, 0.0),
                ClosedLeaf::Atoms { ref atoms, gamma, decay } => {
                    // ∫₀ᵗ k(λ p e^{−γs}) ds = γ⁻¹ [F(λp) − F(λp e^{−γt})]
                    let mut sum = Complex64::new(0.0, 0.0);
                    for &(p, w, comp) in atoms {
                        let x = lam[0] * p;
                        sum += w * (special::atom_integral(x, comp) - special::atom_integral(x * decay, comp));
                    }
                    sum / gamma
                }
            };
        }
        if !self.numeric.is_empty() || self.sigma_t.is_none() {
            acc += self.numeric_integral(lam)?;
        }
        Ok(acc)
    }

    pub fn cf(&self, lam: &[f64]) -> Result<Complex64> {
        Ok(self.log_cf(lam)?.exp())
    }

    fn rotated(&self, s: f64, lam: &[f64]) -> Vec<f64> {
        if self.dim == 1 {
            return vec![(-self.spec.matrix()[(0, 0)] * s).exp() * lam[0]];
        }
        let m = self.spec.exp_matrix_transpose(s).expect("s ≥ 0");
        (m * DVector::from_column_slice(lam)).as_slice().to_vec()
    }

    fn integrand(&self, s: f64, lam: &[f64]) -> Result<Complex64> {
        let z = self.rotated(s, lam);
        let mut acc = Complex64::new(0.0, 0.0);
        if self.sigma_t.is_none() {
            let v = DVector::from_column_slice(&z);
            acc.re -= 0.5 * v.dot(&(&self.sigma * &v));
            if self.numeric.is_empty() && self.closed.is_empty() {
                return Ok(acc);
            }
        }
        for leaf in &self.numeric {
            acc += leaf.exponent(&z)?;
        }
        Ok(acc)
    }

    fn numeric_integral(&self, lam: &[f64]) -> Result<Complex64> {
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let f = |s: f64| match self.integrand(s, lam) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        };
        let q = Quadrature::with_tol(CF_QUAD_TOL);
        let result = match self.horizon {
            Horizon::Finite(t) => {
                let pieces = self.pieces(t);
                q.integrate_pieces(&f, &pieces)?.value
            }
            Horizon::Infinite => {
                let k = self.decay.expect("decay computed for infinite horizon");
                let r = norm(lam);
                // |e^{−sQᵀ}λ| ≤ c₃e^{−c₁s}|λ|; past the point where this is tiny the
                // integrand behaves like |z|^p and the tail is |f(T)|/(p c₁)
                let mut big_t = (k.c3 * r).ln().max(0.0) / k.c1 + 10.0 / k.c1;
                let mut steps = 0;
                loop {
                    let tail = f(big_t).norm() / (self.tail_power * k.c1);
                    if tail < 0.1 * CF_QUAD_TOL || steps > 40 {
                        break;
                    }
                    big_t += 5.0 / k.c1;
                    steps += 1;
                }
                let pieces = self.pieces(big_t);
                q.integrate_pieces(&f, &pieces)?.value
            }
        };
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(result)
    }

    /// Breakpoints every `1/max Re(eigenvalue)` so each piece sees at most one e-fold.
    fn pieces(&self, t: f64) -> Vec<f64> {
        let scale = 1.0 / self.spec.max_real();
        let n = ((t / scale).ceil() as usize).clamp(1, 32);
        (0..=n).map(|k| t * k as f64 / n as f64).collect()
    }
}

/// `E e^{i<λ, I♮_t>}`; `horizon = Infinite` needs the log-moment condition.
pub fn cf_inatural(model: &LevyModel, spec: &DriftSpectrum, horizon: Horizon, lam: &[f64]) -> Result<Complex64> {
    if let Horizon::Finite(t) = horizon {
        if t == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
    }
    Inatural::new(model, spec, horizon)?.cf(lam)
}

fn scaled(lam: &[f64], k: f64) -> Vec<f64> {
    lam.iter().map(|x| x * k).collect()
}

fn dot(a: &DVector<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
    }
    Ok(())
}

/// CF of `X^{(ε)}_t` started at `x₀`.
pub fn cf_transition(
    model: &LevyModel,
    spec: &DriftSpectrum,
    eps: f64,
    x0: &DVector<f64>,
    t: f64,
    lam: &[f64],
) -> Result<Complex64> {
    check_eps(eps)?;
    let mean = exp_action(spec, t, x0)?;
    let phase = dot(&mean, lam);
    if t == 0.0 {
        return Ok(Complex64::from_polar(1.0, phase));
    }
    let c_t = drift_center(spec, &model.total_drift(), Horizon::Finite(t))?;
    let se = eps.sqrt();
    let log = Inatural::new(model, spec, Horizon::Finite(t))?.log_cf(&scaled(lam, se))?;
    Ok((log + Complex64::new(0.0, phase + se * dot(&c_t, lam))).exp())
}

/// CF of the invariant law `μ^{(ε)}`.
pub fn cf_invariant(model: &LevyModel, spec: &DriftSpectrum, eps: f64, lam: &[f64]) -> Result<Complex64> {
    check_eps(eps)?;
    let c_inf = drift_center(spec, &model.total_drift(), Horizon::Infinite)?;
    let se = eps.sqrt();
    let log = Inatural::new(model, spec, Horizon::Infinite)?.log_cf(&scaled(lam, se))?;
    Ok((log + Complex64::new(0.0, se * dot(&c_inf, lam))).exp())
}

/// A law `shift + I♮_t` in the noise-scaled frame, the building block of every
/// distance computed on density grids.
#[derive(Debug, Clone)]
pub struct ShiftedLaw {
    pub shift: DVector<f64>,
    pub base: Arc<Inatural>,
}

impl ShiftedLaw {
    pub fn new(shift: DVector<f64>, base: Arc<Inatural>) -> Self {
        Self { shift, base }
    }

    pub fn log_cf(&self, lam: &[f64]) -> Result<Complex64> {
        Ok(self.base.log_cf(lam)? + Complex64::new(0.0, dot(&self.shift, lam)))
    }

    pub fn cf(&self, lam: &[f64]) -> Result<Complex64> {
        Ok(self.log_cf(lam)?.exp())
    }
}

/// `X^{(ε)}_t/√ε = e^{−tQ}x₀/√ε + C_t + I♮_t`.
pub fn scaled_transition_law(
    model: &LevyModel,
    spec: &DriftSpectrum,
    eps: f64,
    x0: &DVector<f64>,
    t: f64,
) -> Result<ShiftedLaw> {
    check_eps(eps)?;
    let base = Arc::new(Inatural::new(model, spec, Horizon::Finite(t))?);
    let shift = exp_action(spec, t, x0)? / eps.sqrt() + drift_center(spec, &model.total_drift(), Horizon::Finite(t))?;
    Ok(ShiftedLaw::new(shift, base))
}

/// `X^{(ε)}_∞/√ε = C_∞ + I♮_∞`.
pub fn scaled_invariant_law(model: &LevyModel, spec: &DriftSpectrum) -> Result<ShiftedLaw> {
    let base = Arc::new(Inatural::new(model, spec, Horizon::Infinite)?);
    let shift = drift_center(spec, &model.total_drift(), Horizon::Infinite)?;
    Ok(ShiftedLaw::new(shift, base))
}

/// Pushforward descriptor of a jump leaf under `x ↦ √ε e^{−sQ}x`, integrated over `s`.
#[derive(Debug, Clone)]
pub enum JumpImage {
    /// Strictly stable with transformed scale.
    Stable { params: StableParams },
    IsotropicStable { alpha: f64, c: f64 },
    /// Time-integrated image of a leaf without a closed form.
    Integrated(ImageMeasure),
}

#[derive(Debug, Clone)]
pub struct ImageMeasure {
    pub leaf: JumpPart,
    pub eps: f64,
    pub horizon: Horizon,
    spec: DriftSpectrum,
}

impl ImageMeasure {
    /// `ν_t(|y| > r)` for finite-activity and atomic leaves.
    pub fn tail_mass(&self, r: f64) -> Result<f64> {
        let end = match self.horizon {
            Horizon::Finite(t) => t,
            Horizon::Infinite => {
                let k = self.spec.decay()?;
                // beyond this time every jump of size ≤ R_max lands inside the ball
                let rmax = leaf_extent(&self.leaf).unwrap_or(1e6);
                ((k.c3 * self.eps.sqrt() * rmax / r).ln().max(0.0)) / k.c1 + 1.0
            }
        };
        let q = Quadrature::with_tol(1e-9);
        let spec = &self.spec;
        let se = self.eps.sqrt();
        let mass_at = |s: f64| -> f64 {
            let m = spec.exp_matrix(s).expect("s ≥ 0");
            let outside = |p: &[f64]| (&m * DVector::from_column_slice(p)).norm() * se > r;
            match &self.leaf {
                JumpPart::Discrete { measure } => measure.atoms.iter().filter(|a| outside(&a.point)).map(|a| a.weight).sum(),
                JumpPart::CompoundPoisson { rate, law } => match law {
                    JumpLaw::Atoms { atoms } => rate * atoms.iter().filter(|a| outside(&a.point)).map(|a| a.weight).sum::<f64>(),
                    law => {
                        let g = m[(0, 0)] * se;
                        let cut = r / g;
                        let (lo, _) = law.support();
                        let right = law_survival(law, cut);
                        let left = if lo < -cut { 1.0 - law_survival(law, -cut) } else { 0.0 };
                        rate * (right + left)
                    }
                },
                _ => f64::NAN,
            }
        };
        let v = q.integrate(mass_at, 0.0, end)?.value;
        if v.is_nan() {
            return Err(Error::InvalidParameter("tail mass available for compound Poisson and atomic leaves only".into()));
        }
        Ok(v)
    }
}

fn law_survival(law: &JumpLaw, x: f64) -> f64 {
    // survival through the density: 1 − ∫_{lo}^{x} f
    let (lo, hi) = law.support();
    if x <= lo {
        return 1.0;
    }
    if x >= hi {
        return 0.0;
    }
    let q = Quadrature::with_tol(1e-11);
    let below = q.integrate(|y| law.density(y).unwrap_or(0.0), lo, x).map(|r| r.value).unwrap_or(0.0);
    (1.0 - below).clamp(0.0, 1.0)
}

fn leaf_extent(leaf: &JumpPart) -> Option<f64> {
    match leaf {
        JumpPart::Discrete { measure } => measure.atoms.iter().map(|a| norm(&a.point)).reduce(f64::max),
        JumpPart::CompoundPoisson { law, .. } => match law {
            JumpLaw::Atoms { atoms } => atoms.iter().map(|a| norm(&a.point)).reduce(f64::max),
            JumpLaw::Uniform { lo, hi } => Some(lo.abs().max(hi.abs())),
            _ => None,
        },
        _ => None,
    }
}

/// `(a_t, Σ_t, ν_t)` of `X^{(ε)}_t` w.r.t. the truncation `1{|y| ≤ 1}`.
#[derive(Debug, Clone)]
pub struct GeneratingTriple {
    pub a: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub nu: Vec<JumpImage>,
    pub horizon: Horizon,
}

/// Linear term produced by a leaf's own compensation convention after
/// pushforward, relative to the unit-ball truncation.
fn compensation_shift(leaf: &JumpPart, spec: &DriftSpectrum, eps: f64, horizon: Horizon) -> Result<DVector<f64>> {
    let d = spec.dim();
    let se = eps.sqrt();
    let end = match horizon {
        Horizon::Finite(t) => Some(t),
        Horizon::Infinite => None,
    };
    // ∫₀ᵗ e^{−sQ}p·(1{|√ε e^{−sQ}p| ≤ 1} − [compensated]·1{|p| ≤ 1}) ds
    let atom_term = |p: &[f64], weight: f64, compensated: bool| -> Result<DVector<f64>> {
        let pv = DVector::from_column_slice(p);
        let big_t = match end {
            Some(t) => t,
            None => {
                let k = spec.decay()?;
                (k.c3 * pv.norm()).ln().max(0.0) / k.c1 + 40.0 / k.c1
            }
        };
        let mut out = DVector::zeros(d);
        let inner = if compensated && pv.norm() <= 1.0 { 1.0 } else { 0.0 };
        for i in 0..d {
            let q = Quadrature::with_tol(1e-11);
            let f = |s: f64| {
                let y = spec.exp_matrix(s).expect("s ≥ 0") * &pv;
                let ind = if (y.norm() * se) <= 1.0 { 1.0 } else { 0.0 };
                y[i] * (ind - inner)
            };
            let n = 64;
            let pts: Vec<f64> = (0..=n).map(|k| big_t * k as f64 / n as f64).collect();
            out[i] = q.integrate_pieces(f, &pts)?.value;
        }
        if end.is_none() && inner > 0.0 {
            // −∫_T^∞ e^{−sQ}p ds for the compensated atoms, closed form
            let tail = drift_center(spec, &(exp_action(spec, big_t, &pv)?), Horizon::Infinite)?;
            out -= tail;
        }
        Ok(out * (weight * se))
    };
    match leaf {
        JumpPart::Discrete { measure } => {
            let mut acc = DVector::zeros(d);
            for a in &measure.atoms {
                acc += atom_term(&a.point, a.weight, true)?;
            }
            Ok(acc)
        }
        JumpPart::CompoundPoisson { rate, law } => match law {
            JumpLaw::Atoms { atoms } => {
                let mut acc = DVector::zeros(d);
                for a in atoms {
                    acc += atom_term(&a.point, rate * a.weight, false)?;
                }
                Ok(acc)
            }
            law => {
                // 1D: ∫₀ᵗ e^{−γs} 1{√ε e^{−γs}|x| ≤ 1} ds in closed form, then one x-integral
                let g = spec.matrix()[(0, 0)];
                let time_part = |x: f64| {
                    let s_star = ((se * x.abs()).ln() / g).max(0.0);
                    let upper = end.unwrap_or(f64::INFINITY);
                    if s_star >= upper {
                        0.0
                    } else {
                        ((-g * s_star).exp() - (-g * upper).exp()) / g
                    }
                };
                let (lo, hi) = law.support();
                let hi = if hi.is_finite() { hi } else { tail_cut(law) };
                let q = Quadrature::with_tol(1e-10);
                let v = q.integrate(|x| x * law.density(x).unwrap_or(0.0) * time_part(x), lo, hi)?.value;
                Ok(DVector::from_element(1, rate * se * v))
            }
        },
        _ => Ok(DVector::zeros(d)),
    }
}

fn tail_cut(law: &JumpLaw) -> f64 {
    match *law {
        JumpLaw::Exponential { rate } => 50.0 / rate,
        JumpLaw::Pareto { alpha, scale } => scale * 1e-12f64.powf(-1.0 / alpha),
        _ => 1e12,
    }
}

/// Linear term `∫_{|x|≤1} x ν(dx)` style correction for strictly stable laws.
fn stable_truncation_drift(params: &StableParams) -> f64 {
    if params.alpha == 1.0 || params.alpha >= 2.0 {
        return 0.0;
    }
    let (cp, cm) = params.levy_density_sides();
    (cp - cm) / (1.0 - params.alpha)
}

pub fn generating_triple(
    model: &LevyModel,
    spec: &DriftSpectrum,
    eps: f64,
    x0: &DVector<f64>,
    horizon: Horizon,
) -> Result<GeneratingTriple> {
    check_eps(eps)?;
    horizon.validate()?;
    let d = model.dim();
    if x0.len() != d || spec.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    if horizon == Horizon::Infinite && model.has_jumps() && !has_log_moment(model).passed() {
        return Err(Error::LogMomentRequired("generating triple at t = ∞".into()));
    }
    if horizon == Horizon::Finite(0.0) {
        return Ok(GeneratingTriple {
            a: x0.clone(),
            sigma: DMatrix::zeros(d, d),
            nu: Vec::new(),
            horizon,
        });
    }
    let se = eps.sqrt();
    let sigma = integrated_covariance(spec, model.sigma(), horizon)? * eps;
    let mut a = drift_center(spec, &model.total_drift(), horizon)? * se;
    if let Horizon::Finite(t) = horizon {
        a += exp_action(spec, t, x0)?;
    }
    let mut nu = Vec::new();
    for leaf in model.jumps().leaves() {
        match leaf {
            JumpPart::Stable { params } if d == 1 => {
                let g = spec.matrix()[(0, 0)];
                let k = stable_factor(params.alpha, g, horizon) * eps.powf(0.5 * params.alpha);
                let p = StableParams {
                    c: params.c * k,
                    a: 0.0,
                    ..*params
                };
                a[0] += stable_truncation_drift(&p);
                nu.push(JumpImage::Stable { params: p });
            }
            JumpPart::IsotropicStable { alpha, c } if spec.conformal_rate().is_some() || d == 1 => {
                let g = spec.conformal_rate().unwrap_or(spec.matrix()[(0, 0)]);
                let k = stable_factor(*alpha, g, horizon) * eps.powf(0.5 * alpha);
                nu.push(JumpImage::IsotropicStable { alpha: *alpha, c: c * k });
            }
            leaf => {
                a += compensation_shift(leaf, spec, eps, horizon)?;
                nu.push(JumpImage::Integrated(ImageMeasure {
                    leaf: leaf.clone(),
                    eps,
                    horizon,
                    spec: spec.clone(),
                }));
            }
        }
    }
    Ok(GeneratingTriple { a, sigma, nu, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_models::DiscreteMeasure;
    use crate::matrix_dynamics::validate_mplus;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn scalar(g: f64) -> DriftSpectrum {
        validate_mplus(&DMatrix::from_element(1, 1, g)).unwrap()
    }

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn brownian_inatural_closed_form() {
        let m = LevyModel::brownian(1, 1.0).unwrap();
        let s = scalar(1.0);
        for &t in &[0.1, 1.0, 3.0] {
            for &l in &[0.0, 0.5, 2.0, -3.0] {
                let v = cf_inatural(&m, &s, Horizon::Finite(t), &[l]).unwrap();
                let exact = (-l * l * (1.0 - (-2.0 * t).exp()) / 4.0).exp();
                assert_abs_diff_eq!(v.re, exact, epsilon = 1e-14);
                assert_abs_diff_eq!(v.im, 0.0);
            }
        }
    }

    #[test]
    fn cauchy_invariant_closed_form() {
        let m = LevyModel::stable(StableParams::symmetric(1.0, 1.0).unwrap()).unwrap();
        for &g in &[0.5, 1.0, 3.0] {
            let s = scalar(g);
            for &l in &[0.3, -2.0] {
                let v = cf_inatural(&m, &s, Horizon::Infinite, &[l]).unwrap();
                assert_abs_diff_eq!(v.re, (-l.abs() / g).exp(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        let s = scalar(1.3);
        let models = [
            LevyModel::gaussian(v1(0.4), DMatrix::from_element(1, 1, 0.7)).unwrap(),
            LevyModel::stable(StableParams::new(1.5, 0.8, 0.4, 0.2).unwrap()).unwrap(),
            LevyModel::stable(StableParams::new(0.7, 1.1, -0.6, 0.0).unwrap()).unwrap(),
            LevyModel::pure_jump(
                1,
                JumpPart::Discrete {
                    measure: DiscreteMeasure::factorial_series(8),
                },
            )
            .unwrap(),
            LevyModel::new(
                v1(0.1),
                DMatrix::from_element(1, 1, 0.5),
                JumpPart::CompoundPoisson {
                    rate: 2.0,
                    law: JumpLaw::from_table(&[(-1.0, 1.0), (0.5, 2.0), (2.0, 1.0)]).unwrap(),
                },
            )
            .unwrap(),
        ];
        for m in &models {
            for h in [Horizon::Finite(0.8), Horizon::Finite(5.0), Horizon::Infinite] {
                let a = Inatural::new(m, &s, h).unwrap();
                let b = Inatural::with_mode(m, &s, h, CfMode::Quadrature).unwrap();
                assert!(a.is_closed_form() && !b.is_closed_form());
                for &l in &[0.2, 1.7, -4.0] {
                    let x = a.log_cf(&[l]).unwrap();
                    let y = b.log_cf(&[l]).unwrap();
                    assert!((x - y).norm() < 1e-9, "{h:?} λ={l}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn transition_matches_gaussian_law() {
        let (g, sig2, a, x0, eps): (f64, f64, f64, f64, f64) = (0.7, 2.0, 0.3, 1.5, 0.01);
        let m = LevyModel::gaussian(v1(a), DMatrix::from_element(1, 1, sig2)).unwrap();
        let s = scalar(g);
        for &t in &[0.2, 1.0, 6.0] {
            let mean = (-g * t).exp() * x0 + eps.sqrt() * a * (1.0 - (-g * t).exp()) / g;
            let var = eps * sig2 * (1.0 - (-2.0 * g * t).exp()) / (2.0 * g);
            for &l in &[0.5, -3.0, 10.0] {
                let v = cf_transition(&m, &s, eps, &v1(x0), t, &[l]).unwrap();
                let exact = Complex64::new(-0.5 * var * l * l, mean * l).exp();
                assert!((v - exact).norm() < 1e-12);
            }
        }
        let v = cf_transition(&m, &s, eps, &v1(x0), 0.0, &[2.0]).unwrap();
        assert!((v - Complex64::from_polar(1.0, 2.0 * x0)).norm() < 1e-15);
    }

    #[test]
    fn epsilon_scaling() {
        let m = LevyModel::stable(StableParams::new(1.2, 1.0, 0.5, 0.0).unwrap()).unwrap();
        let s = scalar(1.0);
        let z = DVector::zeros(1);
        let eps: f64 = 0.04;
        for &l in &[0.3, -1.1, 5.0] {
            let a = cf_transition(&m, &s, eps, &z, 2.0, &[l]).unwrap();
            let b = cf_transition(&m, &s, 1.0, &z, 2.0, &[eps.sqrt() * l]).unwrap();
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn stationarity_fixed_point_2d() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let s = validate_mplus(&q).unwrap();
        let m = LevyModel::gaussian(
            DVector::from_vec(vec![0.2, -0.1]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
        )
        .unwrap();
        let eps = 0.3;
        let z = DVector::zeros(2);
        for &t in &[0.5, 2.0] {
            for lam in [[0.4f64, -1.0], [2.0, 0.7]] {
                let mu = cf_invariant(&m, &s, eps, &lam).unwrap();
                let l = DVector::from_column_slice(&lam);
                let rot = s.exp_matrix_transpose(t).unwrap() * l;
                let lhs = cf_invariant(&m, &s, eps, rot.as_slice()).unwrap() * cf_transition(&m, &s, eps, &z, t, &lam).unwrap();
                assert!((mu - lhs).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn compound_poisson_flow_identity() {
        let law = JumpLaw::Exponential { rate: 2.0 };
        let m = LevyModel::compound_poisson(1.5, law).unwrap();
        let s = scalar(0.8);
        for &(t, u) in &[(0.5, 1.0), (2.0, 0.3)] {
            let it = Inatural::new(&m, &s, Horizon::Finite(t)).unwrap();
            let iu = Inatural::new(&m, &s, Horizon::Finite(u)).unwrap();
            let itu = Inatural::new(&m, &s, Horizon::Finite(t + u)).unwrap();
            for &l in &[0.7, -2.5] {
                let rot = (-0.8 * u).exp() * l;
                let lhs = itu.cf(&[l]).unwrap();
                let rhs = it.cf(&[rot]).unwrap() * iu.cf(&[l]).unwrap();
                assert!((lhs - rhs).norm() < 1e-8);
            }
        }
        // invariant is dominated by every finite-time I♮_t
        let inf = Inatural::new(&m, &s, Horizon::Infinite).unwrap();
        for &t in &[0.1, 1.0, 10.0] {
            let it = Inatural::new(&m, &s, Horizon::Finite(t)).unwrap();
            for &l in &[0.3, 4.0] {
                assert!(inf.cf(&[l]).unwrap().norm() <= it.cf(&[l]).unwrap().norm() + 1e-10);
            }
        }
    }

    #[test]
    fn compound_poisson_infinite_horizon_matches_series() {
        // ∫₀^∞ (e^{iλe^{−γs}} − 1) ds = (1/γ)∫₀^λ (e^{iu} − 1)/u du
        let m = LevyModel::compound_poisson(1.0, JumpLaw::atom(1.0)).unwrap();
        let g = 0.5;
        let s = scalar(g);
        let lam: f64 = 3.0;
        let v = Inatural::new(&m, &s, Horizon::Infinite).unwrap().log_cf(&[lam]).unwrap();
        // power series of ∫₀^λ (e^{iu}−1)/u du = Σ_{k≥1} (iλ)^k/(k·k!)
        let mut sum = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for k in 1..60 {
            term *= Complex64::new(0.0, lam) / k as f64;
            sum += term / k as f64;
        }
        assert!((v - sum / g).norm() < 1e-9, "{v} vs {}", sum / g);
    }

    #[test]
    fn log_moment_enforced() {
        let m = LevyModel::compound_poisson(1.0, JumpLaw::InverseLogSquare).unwrap();
        let s = scalar(1.0);
        assert!(matches!(cf_inatural(&m, &s, Horizon::Infinite, &[1.0]), Err(Error::LogMomentRequired(_))));
        assert!(cf_inatural(&m, &s, Horizon::Finite(1.0), &[1.0]).is_ok());
    }

    #[test]
    fn isotropic_stable_rotation_closed_form() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        let s = validate_mplus(&q).unwrap();
        let m = LevyModel::isotropic_stable(2, 1.0, 1.0).unwrap();
        let a = Inatural::new(&m, &s, Horizon::Infinite).unwrap();
        assert!(a.is_closed_form());
        let b = Inatural::with_mode(&m, &s, Horizon::Infinite, CfMode::Quadrature).unwrap();
        for lam in [[1.0f64, 0.0], [0.3, -2.0]] {
            let r = (lam[0] * lam[0] + lam[1] * lam[1]).sqrt();
            assert_abs_diff_eq!(a.log_cf(&lam).unwrap().re, -r, epsilon = 1e-14);
            assert!((a.log_cf(&lam).unwrap() - b.log_cf(&lam).unwrap()).norm() < 1e-9);
        }
    }

    #[test]
    fn triple_examples() {
        let (g, s2, eps): (f64, f64, f64) = (1.5, 2.0, 0.1);
        let m = LevyModel::gaussian(v1(0.7), DMatrix::from_element(1, 1, s2)).unwrap();
        let s = scalar(g);
        let x0 = v1(1.0);
        let tr = generating_triple(&m, &s, eps, &x0, Horizon::Finite(0.9)).unwrap();
        assert_abs_diff_eq!(tr.sigma[(0, 0)], eps * s2 * (1.0 - (-2.0 * g * 0.9).exp()) / (2.0 * g), epsilon = 1e-14);
        let inf = generating_triple(&m, &s, eps, &x0, Horizon::Infinite).unwrap();
        assert_abs_diff_eq!(inf.a[0], eps.sqrt() * 0.7 / g, epsilon = 1e-14);
        let zero = generating_triple(&m, &s, eps, &x0, Horizon::Finite(0.0)).unwrap();
        assert_eq!(zero.a[0], 1.0);
        assert_eq!(zero.sigma[(0, 0)], 0.0);
    }

    #[test]
    fn triple_reproduces_compound_poisson_cf() {
        // rebuild the CF from (a_t, ν_t) with ν_t in closed form for a single atom
        let (g, rate, x, eps, t): (f64, f64, f64, f64, f64) = (1.0, 2.0, 3.0, 0.25, 1.5);
        let m = LevyModel::compound_poisson(rate, JumpLaw::atom(x)).unwrap();
        let s = scalar(g);
        let tr = generating_triple(&m, &s, eps, &v1(0.0), Horizon::Finite(t)).unwrap();
        // jumps y(s) = √ε e^{−γs} x, |y| ≤ 1 iff s ≥ ln(√ε x)/γ
        let s_star: f64 = (eps.sqrt() * x).ln() / g;
        let small = eps.sqrt() * x * ((-g * s_star).exp() - (-g * t).exp()) / g;
        assert_abs_diff_eq!(tr.a[0], rate * small, epsilon = 1e-8);
        let tail = match &tr.nu[0] {
            JumpImage::Integrated(im) => im.tail_mass(1.0).unwrap(),
            _ => panic!(),
        };
        assert_abs_diff_eq!(tail, rate * s_star, epsilon = 1e-7);
    }

    #[test]
    fn covariance_loewner_monotone() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.5]);
        let s = validate_mplus(&q).unwrap();
        let sig = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.3]);
        let mut prev = DMatrix::zeros(2, 2);
        for &t in &[0.1, 0.5, 1.0, 2.0, 8.0] {
            let c = integrated_covariance(&s, &sig, Horizon::Finite(t)).unwrap();
            let diff = &c - &prev;
            let e = nalgebra::SymmetricEigen::new(diff).eigenvalues;
            assert!(e.min() >= -1e-12);
            prev = c;
        }
        let inf = integrated_covariance(&s, &sig, Horizon::Infinite).unwrap();
        let e = nalgebra::SymmetricEigen::new(&inf - &prev).eigenvalues;
        assert!(e.min() >= -1e-12);
    }

    #[test]
    fn lyapunov_against_scalar() {
        let q = DMatrix::from_element(1, 1, 2.0);
        let x = lyapunov(&q, &DMatrix::from_element(1, 1, 3.0)).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 0.75, epsilon = 1e-15);
        let _ = PI;
    }

    #[test]
    fn discrete_measure_numeric() {
        let m = LevyModel::pure_jump(1, JumpPart::Discrete {
            measure: DiscreteMeasure::factorial_series(8),
        })
        .unwrap();
        let s = scalar(1.0);
        let v = cf_inatural(&m, &s, Horizon::Finite(1.0), &[5.0]).unwrap();
        assert!(v.norm() <= 1.0 && v.norm() > 0.0);
    }
}
