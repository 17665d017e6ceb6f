//! Superpositions `Σ m_j X^{(ε,j)}` of independent one-dimensional OU processes
//! and the average `A^{(n)}` of `n` i.i.d. stable-driven OU processes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::char_engine::{
    check_condition_h, drift_center, invert_to_density, plan_lattice, smoothness_regime, CharFunctionGrid, DensityGrid,
    GridMeta, Horizon, Inatural, RegimeKind, DEFAULT_N_1D,
};
use crate::cutoff_lab::{check_epsilon, cutoff_schedule, CutoffSchedule, Lab, Method, H_RADII};
use crate::error::{Error, Result};
use crate::levy_models::{LevyModel, ModelDoc, StableParams};
use crate::matrix_dynamics::{validate_mplus, DriftSpectrum};
use crate::report::CheckLine;
use crate::sampler::{sample_invariant, sample_ou_exact, RngStream};
use crate::tv_metrics::{tv_empirical, tv_shift, tv_shifted_pair, TvEstimate};

pub const DEFAULT_MAX_BLOCKS: usize = 64;
const LEADING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub m: f64,
    pub gamma: f64,
    pub x: f64,
    pub model: ModelDoc,
}

/// Declared bounds for the series over blocks that are not stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TailCertificates {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub gaussian: f64,
    #[serde(default)]
    pub jumps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionConfig {
    pub blocks: Vec<Block>,
    #[serde(default)]
    pub tail: TailCertificates,
    /// Declared lower bound `γ̄` for the rates of the dropped blocks.
    #[serde(default)]
    pub gamma_floor: Option<f64>,
}

impl SuperpositionConfig {
    pub fn weights_total(&self) -> f64 {
        self.blocks.iter().map(|b| b.m).sum()
    }

    fn structural(&self) -> Result<()> {
        if self.blocks.is_empty() || self.blocks.len() > DEFAULT_MAX_BLOCKS {
            return Err(Error::InvalidParameter(format!(
                "need between 1 and {DEFAULT_MAX_BLOCKS} stored blocks"
            )));
        }
        for b in &self.blocks {
            if !(b.m > 0.0) || !(b.gamma.is_finite()) || !b.x.is_finite() {
                return Err(Error::InvalidParameter("blocks need m > 0 and finite γ, x".into()));
            }
            if b.model.drift.len() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    got: b.model.drift.len(),
                });
            }
        }
        if self.weights_total() > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter("stored weights exceed 1".into()));
        }
        Ok(())
    }
}

/// One stored block ready for computation.
struct Prepared {
    m: f64,
    gamma: f64,
    x: f64,
    model: LevyModel,
    spec: DriftSpectrum,
}

fn prepare(cfg: &SuperpositionConfig) -> Result<Vec<Prepared>> {
    cfg.structural()?;
    cfg.blocks
        .iter()
        .map(|b| {
            Ok(Prepared {
                m: b.m,
                gamma: b.gamma,
                x: b.x,
                model: LevyModel::try_from(&b.model)?,
                spec: validate_mplus(&DMatrix::from_element(1, 1, b.gamma)).map_err(|_| Error::CoercivityViolation(b.gamma))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionReport {
    pub passed: bool,
    pub series: Vec<CheckLine>,
    /// Partial sums after each stored block, per series.
    pub partial_sums: Vec<(String, Vec<f64>)>,
    pub leading_blocks: Vec<usize>,
    pub gamma_hat: f64,
    pub leading_sum: f64,
    pub declared_tail_mass: f64,
    pub notes: Vec<String>,
}

fn running(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    xs.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

/// Checks the series conditions on stored blocks, coercivity, and finds the
/// slowest block set `J` with `γ̂ = min γ_j`.
pub fn validate_superposition(cfg: &SuperpositionConfig) -> Result<SuperpositionReport> {
    cfg.structural()?;
    let floor = cfg
        .blocks
        .iter()
        .map(|b| b.gamma)
        .fold(cfg.gamma_floor.unwrap_or(f64::INFINITY), f64::min);
    // without a declared floor, rates decaying like a power of j count as a violation
    let n = cfg.blocks.len();
    let decaying = cfg.gamma_floor.is_none() && n >= 4 && {
        let xs: Vec<f64> = (1..=n).map(|j| (j as f64).ln()).collect();
        let ys: Vec<f64> = cfg.blocks.iter().map(|b| b.gamma.ln()).collect();
        crate::levy_models::ls_slope(&xs, &ys) < -0.5
    };
    if !(floor > 0.0) || decaying {
        return Err(Error::CoercivityViolation(floor));
    }
    let blocks = prepare(cfg)?;
    let gamma_hat = blocks.iter().map(|b| b.gamma).fold(f64::INFINITY, f64::min);
    let leading_blocks: Vec<usize> = (0..blocks.len())
        .filter(|&j| (blocks[j].gamma - gamma_hat).abs() <= 1e-12 * gamma_hat)
        .collect();
    let leading_sum: f64 = leading_blocks.iter().map(|&j| blocks[j].m * blocks[j].x).sum();
    if leading_sum.abs() <= LEADING_TOL {
        return Err(Error::DegenerateLeadingTerm);
    }
    let jumps: Vec<f64> = blocks
        .iter()
        .map(|b| {
            if b.model.has_jumps() {
                Ok(b.model.truncated_square_mass(&[1.0], 1.0 / b.m)? / b.gamma)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<_>>()?;
    let partial_sums = vec![
        ("m_x".to_string(), running(blocks.iter().map(|b| b.m * b.x.abs()))),
        ("drift".to_string(), running(blocks.iter().map(|b| (b.m * b.model.total_drift()[0] / b.gamma).abs()))),
        ("gaussian".to_string(), running(blocks.iter().map(|b| b.m * b.m * b.model.sigma()[(0, 0)] / b.gamma))),
        ("jumps".to_string(), running(jumps.into_iter())),
    ];
    let tails = [cfg.tail.x, cfg.tail.drift, cfg.tail.gaussian, cfg.tail.jumps];
    let series: Vec<CheckLine> = partial_sums
        .iter()
        .zip(tails)
        .map(|((name, s), tail)| {
            let total = s[s.len() - 1] + tail;
            let mut line = CheckLine::at_most(format!("{name}_series"), total, f64::MAX);
            line.passed = total.is_finite() && tail >= 0.0;
            line
        })
        .collect();
    let mut notes = vec![format!("stored blocks: {}, declared tails are not verified", blocks.len())];
    if cfg.weights_total() < 1.0 {
        notes.push(format!("declared tail mass {:.6}", 1.0 - cfg.weights_total()));
    }
    Ok(SuperpositionReport {
        passed: series.iter().all(|c| c.passed),
        series,
        partial_sums,
        leading_blocks,
        gamma_hat,
        leading_sum,
        declared_tail_mass: 1.0 - cfg.weights_total(),
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionTriple {
    /// `√ε Σ m_j a_j/γ_j` plus the per-block truncation corrections.
    pub a: f64,
    /// `ε Σ m_j² σ_j/(2γ_j)`, used downstream.
    pub sigma: f64,
    /// `Σ m_j² σ_j/(2γ_j)` without the noise factor.
    pub sigma_unscaled: f64,
    pub jump_blocks: Vec<usize>,
    pub declared_tail: TailCertificates,
    pub note: String,
}

/// Limit triple of the superposition's invariant law.
pub fn superposition_limit_triple(cfg: &SuperpositionConfig, eps: f64) -> Result<SuperpositionTriple> {
    check_epsilon(eps)?;
    validate_superposition(cfg)?;
    let blocks = prepare(cfg)?;
    let mut a = 0.0;
    let mut sigma_unscaled = 0.0;
    let mut jump_blocks = Vec::new();
    for (j, b) in blocks.iter().enumerate() {
        let tr = crate::char_engine::generating_triple(&b.model, &b.spec, eps, &DVector::zeros(1), Horizon::Infinite)?;
        a += b.m * tr.a[0];
        sigma_unscaled += b.m * b.m * b.model.sigma()[(0, 0)] / (2.0 * b.gamma);
        if b.model.has_jumps() {
            jump_blocks.push(j);
        }
    }
    Ok(SuperpositionTriple {
        a,
        sigma: eps * sigma_unscaled,
        sigma_unscaled,
        jump_blocks,
        declared_tail: cfg.tail.clone(),
        note: "Gaussian part carries the factor ε; the unscaled sum is reported alongside".into(),
    })
}

/// `t_ε = ln(1/ε)/(2γ̂)`, `w_ε = 1/γ̂`.
pub fn superposition_schedule(cfg: &SuperpositionConfig, eps: f64) -> Result<CutoffSchedule> {
    let r = validate_superposition(cfg)?;
    cutoff_schedule(r.gamma_hat, 1, eps)
}

fn block_has_density(b: &Prepared) -> bool {
    if smoothness_regime(&b.model, &b.spec).regime != RegimeKind::None {
        return true;
    }
    let t0 = 1.0 / b.gamma;
    check_condition_h(&b.model, &b.spec, &H_RADII, &|_| t0).passed()
}

/// Densities of `Σ m_j I^{(♮,j)}` built from the CF product.
pub struct SuperpositionLab {
    blocks: Vec<Prepared>,
    inv: Vec<Arc<Inatural>>,
    report: SuperpositionReport,
    f_inf: DensityGrid,
    n: usize,
}

fn product_cf(parts: &[(f64, Arc<Inatural>)], lam: &[f64]) -> Result<Complex64> {
    let mut acc = Complex64::new(1.0, 0.0);
    for (m, law) in parts {
        acc *= law.cf(&[m * lam[0]])?;
    }
    Ok(acc)
}

fn densities(parts: &[Vec<(f64, Arc<Inatural>)>], n: usize) -> Result<Vec<DensityGrid>> {
    let cfs: Vec<Box<dyn Fn(&[f64]) -> Result<Complex64> + Sync + '_>> =
        parts.iter().map(|p| Box::new(move |l: &[f64]| product_cf(p, l)) as Box<_>).collect();
    let refs: Vec<&(dyn Fn(&[f64]) -> Result<Complex64> + Sync)> = cfs.iter().map(|b| b.as_ref()).collect();
    let plan = plan_lattice(&refs, 1, vec![0.0], 0.0, n)?;
    cfs.iter()
        .map(|cf| invert_to_density(&CharFunctionGrid::build(plan.clone(), GridMeta::default(), cf)?))
        .collect()
}

impl SuperpositionLab {
    pub fn new(cfg: &SuperpositionConfig) -> Result<Self> {
        let report = validate_superposition(cfg)?;
        let blocks = prepare(cfg)?;
        if !blocks.iter().any(block_has_density) {
            return Err(Error::MissingDensityRegime("no block satisfies (H)".into()));
        }
        let inv: Vec<Arc<Inatural>> = blocks
            .iter()
            .map(|b| Ok(Arc::new(Inatural::new(&b.model, &b.spec, Horizon::Infinite)?)))
            .collect::<Result<_>>()?;
        let parts: Vec<(f64, Arc<Inatural>)> = blocks.iter().zip(&inv).map(|(b, l)| (b.m, l.clone())).collect();
        let f_inf = densities(&[parts], DEFAULT_N_1D)?.remove(0);
        Ok(Self {
            blocks,
            inv,
            report,
            f_inf,
            n: DEFAULT_N_1D,
        })
    }

    pub fn report(&self) -> &SuperpositionReport {
        &self.report
    }

    pub fn invariant_density(&self) -> &DensityGrid {
        &self.f_inf
    }

    /// `Π_j \hat μ^{(♮,j)}_t(m_j λ)`.
    pub fn cf(&self, horizon: Horizon, lam: f64) -> Result<Complex64> {
        let mut acc = Complex64::new(1.0, 0.0);
        for (b, l) in self.blocks.iter().zip(&self.inv) {
            let v = match horizon {
                Horizon::Infinite => l.cf(&[b.m * lam])?,
                h => Inatural::new(&b.model, &b.spec, h)?.cf(&[b.m * lam])?,
            };
            acc *= v;
        }
        Ok(acc)
    }

    /// `G_{x,m}(c) = ‖(e^{−c}Σ_{j∈J} m_j x_j + I^{♮,m}_∞) − I^{♮,m}_∞‖`.
    pub fn profile(&self, c: f64) -> Result<TvEstimate> {
        let s = (-c).exp() * self.report.leading_sum;
        match tv_shift(&self.f_inf, &[s]) {
            Err(Error::OffLattice { .. }) => Ok(TvEstimate::beyond_resolution(self.f_inf.dx)),
            other => other,
        }
    }

    /// `d^{(ε,m)}(t)` by the density method.
    pub fn distance(&self, eps: f64, t: f64) -> Result<TvEstimate> {
        check_epsilon(eps)?;
        if !(t > 0.0) {
            return Ok(TvEstimate::beyond_resolution(self.f_inf.dx));
        }
        let mut shift = 0.0;
        let mut parts_t = Vec::new();
        let mut parts_inf = Vec::new();
        for (b, l) in self.blocks.iter().zip(&self.inv) {
            let a = b.model.total_drift();
            let c_t = drift_center(&b.spec, &a, Horizon::Finite(t))?[0];
            let c_inf = drift_center(&b.spec, &a, Horizon::Infinite)?[0];
            shift += b.m * ((-b.gamma * t).exp() * b.x / eps.sqrt() + c_t - c_inf);
            parts_t.push((b.m, Arc::new(Inatural::new(&b.model, &b.spec, Horizon::Finite(t))?)));
            parts_inf.push((b.m, l.clone()));
        }
        let g = densities(&[parts_t, parts_inf], self.n)?;
        let mut e = tv_shifted_pair(&g[0], &g[1], &[shift])?;
        e.diagnostics.beyond_resolution = shift.abs() > g[1].half_width();
        Ok(e)
    }

    /// `d^{(ε,m)}(t)` from exact samples of every block.
    pub fn distance_mc(&self, eps: f64, t: f64, paths: usize, stream: &RngStream) -> Result<TvEstimate> {
        check_epsilon(eps)?;
        let draws: Vec<(Vec<f64>, Vec<f64>)> = self
            .blocks
            .par_iter()
            .enumerate()
            .map(|(j, b)| {
                let s = stream.derive(j as u64);
                let x = sample_ou_exact(&b.model, &b.spec, eps, &DVector::from_element(1, b.x), t, paths, &s.derive(1))?;
                let y = sample_invariant(&b.model, &b.spec, eps, paths, &s.derive(2))?;
                Ok((x.values, y.values))
            })
            .collect::<Result<_>>()?;
        let model = &self.blocks[0];
        let mut xs = sample_ou_exact(&model.model, &model.spec, eps, &DVector::from_element(1, model.x), t, paths, &stream.derive(1 << 20))?;
        let mut ys = sample_invariant(&model.model, &model.spec, eps, paths, &stream.derive(2 << 20))?;
        let scale = 1.0 / eps.sqrt();
        for k in 0..paths {
            xs.values[k] = scale * self.blocks.iter().zip(&draws).map(|(b, d)| b.m * d.0[k]).sum::<f64>();
            ys.values[k] = scale * self.blocks.iter().zip(&draws).map(|(b, d)| b.m * d.1[k]).sum::<f64>();
        }
        xs.law_tag = "superposition".into();
        ys.law_tag = "superposition_invariant".into();
        tv_empirical(&xs, &ys)
    }
}

/// Profile of the superposition at `c`.
pub fn superposition_profile(cfg: &SuperpositionConfig, c: f64, method: Method) -> Result<TvEstimate> {
    let lab = SuperpositionLab::new(cfg)?;
    match method {
        Method::DensityShift => lab.profile(c),
        Method::MonteCarlo { paths, seed } => {
            let stream = RngStream::new(seed, c.to_bits());
            let draw = |s: &RngStream| -> Result<Vec<f64>> {
                let parts: Vec<Vec<f64>> = lab
                    .blocks
                    .iter()
                    .enumerate()
                    .map(|(j, b)| Ok(sample_invariant(&b.model, &b.spec, 1.0, paths, &s.derive(j as u64))?.values))
                    .collect::<Result<_>>()?;
                Ok((0..paths).map(|k| lab.blocks.iter().zip(&parts).map(|(b, p)| b.m * p[k]).sum()).collect())
            };
            let b0 = &lab.blocks[0];
            let mut xs = sample_invariant(&b0.model, &b0.spec, 1.0, paths, &stream.derive(100))?;
            let mut ys = xs.clone();
            let shift = (-c).exp() * lab.report.leading_sum;
            xs.values = draw(&stream.derive(1))?.into_iter().map(|v| v + shift).collect();
            ys.values = draw(&stream.derive(2))?;
            ys.stream = stream.derive(2);
            tv_empirical(&xs, &ys)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageConfig {
    pub stable: StableParams,
    pub gamma: f64,
    pub x0: f64,
    pub n: u64,
    pub eps_n: f64,
}

impl AverageConfig {
    pub fn validate(&self) -> Result<()> {
        self.stable.validate()?;
        if self.x0 == 0.0 || !self.x0.is_finite() {
            return Err(Error::ZeroInitialCondition);
        }
        if !(self.gamma > 0.0) || self.n == 0 {
            return Err(Error::InvalidParameter("need γ > 0 and n ≥ 1".into()));
        }
        check_epsilon(self.eps_n)
    }

    /// `L^{(n)} = n⁻¹ Σ L^{(j)}`: same drift and skewness, scale `c n^{1−α}`.
    pub fn aggregate(&self) -> Result<LevyModel> {
        let p = StableParams {
            c: self.stable.c * (self.n as f64).powf(1.0 - self.stable.alpha),
            ..self.stable
        };
        LevyModel::stable(p)
    }

    pub fn spec(&self) -> Result<DriftSpectrum> {
        validate_mplus(&DMatrix::from_element(1, 1, self.gamma))
    }
}

/// `t_n = (2γ)⁻¹ ln(n^{2−2/α}/ε_n)`, `w_n = 1/γ`.
pub fn average_schedule(cfg: &AverageConfig) -> Result<CutoffSchedule> {
    cfg.validate()?;
    let a = cfg.stable.alpha;
    let t = ((2.0 - 2.0 / a) * (cfg.n as f64).ln() - cfg.eps_n.ln()) / (2.0 * cfg.gamma);
    if !(t > 0.0) {
        return Err(Error::NonpositiveCutoffTime(t));
    }
    Ok(CutoffSchedule {
        t_eps: t,
        w_eps: 1.0 / cfg.gamma,
        gamma: cfg.gamma,
        ell: 1,
        eps: cfg.eps_n,
        w_correction: 0.0,
    })
}

fn shift_on(f: &DensityGrid, s: f64) -> Result<TvEstimate> {
    match tv_shift(f, &[s]) {
        Err(Error::OffLattice { .. }) => Ok(TvEstimate::beyond_resolution(f.dx)),
        other => other,
    }
}

/// `‖(e^{−c}x₀ + S) − S‖` where `S` is the invariant law of the unit-noise OU
/// driven by the strictly stable part, exponent `ψ_α/(αγ)`.
pub fn average_profile(cfg: &AverageConfig, c: f64) -> Result<TvEstimate> {
    cfg.validate()?;
    let model = LevyModel::stable(StableParams { a: 0.0, ..cfg.stable })?;
    let spec = cfg.spec()?;
    let lab = Lab::new(&model, &spec)?;
    shift_on(lab.invariant_density()?, (-c).exp() * cfg.x0)
}

/// The profile with `S` taken to have exponent `ψ_α` itself.
pub fn average_profile_stated(cfg: &AverageConfig, c: f64) -> Result<TvEstimate> {
    cfg.validate()?;
    let model = LevyModel::stable(StableParams { a: 0.0, ..cfg.stable })?;
    // an OU with rate 1/α has invariant exponent ψ_α
    let spec = validate_mplus(&DMatrix::from_element(1, 1, 1.0 / cfg.stable.alpha))?;
    let lab = Lab::new(&model, &spec)?;
    shift_on(lab.invariant_density()?, (-c).exp() * cfg.x0)
}

/// `‖A^{(n)}_t − A^{(n)}_∞‖` from exact samples.
pub fn average_distance_mc(cfg: &AverageConfig, t: f64, paths: usize, seed: u64) -> Result<TvEstimate> {
    cfg.validate()?;
    if paths < 10_000 {
        return Err(Error::TooFewSamples { got: paths, min: 10_000 });
    }
    let model = cfg.aggregate()?;
    let spec = cfg.spec()?;
    let stream = RngStream::new(seed, t.to_bits());
    let x0 = DVector::from_element(1, cfg.x0);
    let xs = sample_ou_exact(&model, &spec, cfg.eps_n, &x0, t, paths, &stream.derive(1))?;
    let ys = sample_invariant(&model, &spec, cfg.eps_n, paths, &stream.derive(2))?;
    tv_empirical(&xs, &ys)
}

/// `‖A^{(n)}_t − A^{(n)}_∞‖` by the density method.
pub fn average_distance(cfg: &AverageConfig, t: f64) -> Result<TvEstimate> {
    cfg.validate()?;
    let model = cfg.aggregate()?;
    let spec = cfg.spec()?;
    Lab::new(&model, &spec)?.distance(cfg.eps_n, &DVector::from_element(1, cfg.x0), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_models::JumpPart;
    use statrs::function::erf::erf;
    use std::f64::consts::PI;

    fn gauss(sigma: f64) -> ModelDoc {
        ModelDoc {
            drift: vec![0.0],
            sigma: vec![vec![sigma]],
            jumps: JumpPart::None,
        }
    }

    fn cfg(ms: &[f64], gs: &[f64], xs: &[f64]) -> SuperpositionConfig {
        SuperpositionConfig {
            blocks: ms
                .iter()
                .zip(gs)
                .zip(xs)
                .map(|((&m, &gamma), &x)| Block {
                    m,
                    gamma,
                    x,
                    model: gauss(1.0),
                })
                .collect(),
            tail: TailCertificates::default(),
            gamma_floor: None,
        }
    }

    #[test]
    fn validation() {
        let r = validate_superposition(&cfg(&[0.5, 0.5], &[1.0, 2.0], &[1.0, 1.0])).unwrap();
        assert!(r.passed && r.leading_blocks == vec![0] && r.gamma_hat == 1.0);
        let ms = vec![1.0 / 16.0; 16];
        let gs: Vec<f64> = (1..=16).map(|j| 1.0 / j as f64).collect();
        assert!(matches!(
            validate_superposition(&cfg(&ms, &gs, &[1.0; 16])),
            Err(Error::CoercivityViolation(_))
        ));
        assert!(matches!(
            validate_superposition(&cfg(&[0.5, 0.5], &[1.0, 1.0], &[1.0, -1.0])),
            Err(Error::DegenerateLeadingTerm)
        ));
        assert!(validate_superposition(&cfg(&[0.7, 0.5], &[1.0, 1.0], &[1.0, 1.0])).is_err());
    }

    #[test]
    fn limit_triple() {
        let c = cfg(&[0.5, 0.5], &[1.0, 2.0], &[1.0, 1.0]);
        let t = superposition_limit_triple(&c, 0.01).unwrap();
        assert!((t.sigma_unscaled - 0.1875).abs() < 1e-12);
        assert!((t.sigma - 0.001875).abs() < 1e-14);
        let mut d = c.clone();
        d.blocks[0].model.drift = vec![2.0];
        d.blocks[1].model.drift = vec![-1.0];
        let t = superposition_limit_triple(&d, 0.04).unwrap();
        assert!((t.a - 0.2 * (0.5 * 2.0 / 1.0 - 0.5 * 1.0 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn schedule() {
        let c = cfg(&[0.5, 0.5], &[1.0, 2.0], &[1.0, 1.0]);
        let s = superposition_schedule(&c, 1e-4).unwrap();
        assert!((s.t_eps - 4.605170185988091).abs() < 1e-9 && s.w_eps == 1.0);
        let s = superposition_schedule(&cfg(&[1.0], &[2.0], &[1.0]), 1e-4).unwrap();
        assert!((s.t_eps - 4.605170185988091 / 2.0).abs() < 1e-9 && s.w_eps == 0.5);
        assert!(superposition_schedule(&c, 0.99).unwrap().t_eps > 0.0);
    }

    #[test]
    fn gaussian_superposition_profile() {
        let c = cfg(&[0.5, 0.5], &[1.0, 2.0], &[1.0, 1.0]);
        let lab = SuperpositionLab::new(&c).unwrap();
        let var: f64 = 0.1875;
        for cc in [-1.0, 0.0, 1.5] {
            let g = lab.profile(cc).unwrap().value;
            let exact = erf((-cc as f64).exp() * 0.5 / (2.0 * (2.0 * var).sqrt()));
            assert!((g - exact).abs() < 1e-4, "{g} vs {exact}");
        }
        // CF product identity
        for lam in [0.3, 1.7, -4.0] {
            let z = lab.cf(Horizon::Infinite, lam).unwrap();
            assert!((z.re - (-0.5 * var * lam * lam).exp()).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
        let single = superposition_profile(&cfg(&[1.0], &[1.0], &[1.0]), 0.0, Method::DensityShift).unwrap();
        assert!((single.value - erf(0.5)).abs() < 1e-4);
        // at small ε the distance follows the profile
        let eps = 1e-8;
        let s = superposition_schedule(&c, eps).unwrap();
        for cc in [-1.0, 0.0, 1.0] {
            let d = lab.distance(eps, s.time(cc)).unwrap().value;
            assert!((d - lab.profile(cc).unwrap().value).abs() < 5e-3);
        }
    }

    #[test]
    fn superposition_mc_agrees() {
        let c = cfg(&[0.5, 0.5], &[1.0, 2.0], &[1.0, 1.0]);
        let lab = SuperpositionLab::new(&c).unwrap();
        let (eps, t) = (1e-2, 2.0);
        let d = lab.distance(eps, t).unwrap();
        let mc = lab.distance_mc(eps, t, 100_000, &RngStream::new(9, 0)).unwrap();
        assert!((d.value - mc.value).abs() < 0.03f64.max(3.0 * mc.stderr), "{d:?} {mc:?}");
    }

    fn avg(alpha: f64, c: f64, n: u64, eps_n: f64) -> AverageConfig {
        AverageConfig {
            stable: StableParams::symmetric(alpha, c).unwrap(),
            gamma: 1.0,
            x0: 1.0,
            n,
            eps_n,
        }
    }

    #[test]
    fn average_schedules() {
        let s = average_schedule(&avg(2.0, 0.5, 100, 0.01)).unwrap();
        assert!((s.t_eps - 100f64.ln()).abs() < 1e-12);
        let s = average_schedule(&avg(1.0, 1.0, 1000, 1e-4)).unwrap();
        assert!((s.t_eps - 0.5 * 1e4f64.ln()).abs() < 1e-12);
        let mut c = avg(1.5, 1.0, 10_000, 1e-4);
        c.gamma = 2.0;
        let s = average_schedule(&c).unwrap();
        assert!((s.t_eps - 0.25 * (20.0 / 3.0) * 10f64.ln()).abs() < 1e-12);
        assert!((s.t_eps - 3.8376).abs() < 1e-4);
    }

    #[test]
    fn average_profiles() {
        let mut c = avg(1.0, 1.0, 10, 0.1);
        c.x0 = 2.0;
        let stated = average_profile_stated(&c, 0.0).unwrap().value;
        assert!((stated - 0.5).abs() < 1e-3);
        // the invariant law has scale 1/(αγ) = 1 here, so both forms agree
        assert!((average_profile(&c, 0.0).unwrap().value - 0.5).abs() < 1e-3);
        let g = avg(2.0, 0.5, 10, 0.1);
        assert!((average_profile_stated(&g, 0.0).unwrap().value - erf(1.0 / (2.0 * 2f64.sqrt()))).abs() < 1e-4);
        assert!((average_profile(&g, 0.0).unwrap().value - erf(0.5)).abs() < 1e-4);
        assert!(average_profile(&g, 6.0).unwrap().value <= 0.05);
        let mut c2 = avg(1.0, 1.0, 10, 0.1);
        c2.gamma = 2.0;
        // Cauchy of scale 1/2
        let v = average_profile(&c2, 0.0).unwrap().value;
        assert!((v - 2.0 / PI * (1.0f64).atan()).abs() < 1e-3, "{v}");
    }

    #[test]
    fn aggregate_exponent() {
        let c = AverageConfig {
            stable: StableParams::new(1.5, 0.8, 0.4, 0.3).unwrap(),
            gamma: 1.0,
            x0: 1.0,
            n: 50,
            eps_n: 0.02,
        };
        let m = c.aggregate().unwrap();
        for z in [-2.0, 0.3, 1.1] {
            let got = crate::levy_models::char_exponent(&m, &[z]).unwrap();
            let skew = 0.4 * (PI * 0.75).tan();
            let mag = 0.8 * 50f64.powf(-0.5) * f64::abs(z).powf(1.5);
            let want = Complex64::new(-mag, 0.3 * z + mag * skew * f64::signum(z));
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn average_gaussian_distance() {
        // σ² = 2c = 1 per copy: A_t − x₀e^{−t} ~ N(0, ε_n (1 − e^{−2t})/(2n))
        let c = avg(2.0, 0.5, 100, 0.01);
        let t = 1.5;
        let sd = |t: f64| (0.01 * (1.0 - (-2.0 * t).exp()) / 200.0).sqrt();
        let (m1, s1, s2) = ((-t as f64).exp(), sd(t), (0.01f64 / 200.0).sqrt());
        let pdf = |x: f64, m: f64, s: f64| (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
        let n = 200_000;
        let (lo, hi) = (-10.0 * s2, m1 + 10.0 * s2);
        let h = (hi - lo) / n as f64;
        let exact: f64 = (0..n)
            .map(|k| {
                let x = lo + (k as f64 + 0.5) * h;
                (pdf(x, m1, s1) - pdf(x, 0.0, s2)).abs()
            })
            .sum::<f64>()
            * h
            / 2.0;
        let d = average_distance(&c, t).unwrap().value;
        assert!((d - exact).abs() < 1e-3, "{d} vs {exact}");
        let mc = average_distance_mc(&c, t, 50_000, 1).unwrap();
        assert!((mc.value - exact).abs() < 0.03f64.max(3.0 * mc.stderr));
        assert_eq!(average_distance(&c, 0.0).unwrap().value, 1.0);
    }
}
