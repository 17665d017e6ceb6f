//! Samplers for stable variates, OU transitions and invariant laws.
//!
//! Every batch is drawn in fixed-size chunks; chunk `k` of a stream uses the
//! ChaCha keystream of `(seed, stream_id)` starting at word `k·2⁴⁰`, so the
//! output does not depend on the number of worker threads.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::char_engine::{cf_inatural, cf_invariant, cf_transition, drift_center, integrated_covariance, Horizon};
use crate::error::{Error, Result};
use crate::levy_models::{has_log_moment, JumpLaw, JumpPart, LevyModel, StableParams};
use crate::matrix_dynamics::{exp_action, DriftSpectrum};
use crate::stats::empirical_cf;

const CHUNK: usize = 4096;
const CHUNK_WORDS: u32 = 40;
/// Jumps of the inverse-log-square law are capped here to stay finite.
const JUMP_CAP: f64 = 1e300;
const MAX_BURN_DOUBLINGS: u32 = 12;

/// A reproducible random stream: master seed plus substream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Generator for chunk `k` of this stream.
    pub fn chunk(&self, k: u64) -> ChaCha12Rng {
        let mut r = ChaCha12Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r.set_word_pos((k as u128) << CHUNK_WORDS);
        r
    }

    /// An independent stream for a sub-task, keyed by `tag`.
    pub fn derive(&self, tag: u64) -> Self {
        // splitmix64 finaliser on (stream, tag)
        let mut z = self.stream_id ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self::new(self.seed, z ^ (z >> 31))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exactness {
    ExactInLaw,
    EulerApprox { h: f64 },
}

/// `n` points of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub dim: usize,
    pub values: Vec<f64>,
    pub law_tag: String,
    pub exactness: Exactness,
    pub stream: RngStream,
    /// Largest `|empirical CF − CF|` on the probes used for a diagnostic, if any.
    pub cf_gap: Option<f64>,
}

impl SampleBatch {
    fn new(dim: usize, values: Vec<f64>, law_tag: impl Into<String>, exactness: Exactness, stream: RngStream) -> Self {
        Self {
            dim,
            values,
            law_tag: law_tag.into(),
            exactness,
            stream,
            cf_gap: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, axis: usize) -> Vec<f64> {
        self.values.iter().skip(axis).step_by(self.dim).copied().collect()
    }

    pub fn is_exact(&self) -> bool {
        self.exactness == Exactness::ExactInLaw
    }

    /// Empirical CF at `lam`.
    pub fn ecf(&self, lam: &[f64]) -> num_complex::Complex64 {
        empirical_cf(&self.values, self.dim, lam)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let head: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        writeln!(w, "{}", head.join(","))?;
        for p in self.values.chunks(self.dim) {
            let row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    fn check(self) -> Result<Self> {
        if self.is_empty() || self.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample batch '{}' is empty or not finite", self.law_tag)));
        }
        Ok(self)
    }
}

/// Fills `n` points chunk by chunk in parallel.
fn fill<G>(n: usize, dim: usize, stream: &RngStream, gen: G) -> Vec<f64>
where
    G: Fn(&mut ChaCha12Rng, &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream.chunk(k as u64);
            let m = CHUNK.min(n - k * CHUNK);
            let mut out = vec![0.0; m * dim];
            for p in out.chunks_mut(dim) {
                gen(&mut rng, p);
            }
            out
        })
        .collect();
    parts.concat()
}

fn uniform_open(rng: &mut ChaCha12Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard `S_α(1, β, 0)` variate (Chambers–Mallows–Stuck).
pub fn standard_stable(alpha: f64, beta: f64, rng: &mut ChaCha12Rng) -> f64 {
    let v = PI * (uniform_open(rng) - 0.5);
    let w: f64 = Exp1.sample(rng);
    if alpha == 1.0 {
        return if beta == 0.0 {
            v.tan()
        } else {
            let p = PI / 2.0 + beta * v;
            2.0 / PI * (p * v.tan() - beta * ((PI / 2.0 * w * v.cos()) / p).ln())
        };
    }
    let zeta = beta * (PI * alpha / 2.0).tan();
    let b = zeta.atan() / alpha;
    let s = (1.0 + zeta * zeta).powf(1.0 / (2.0 * alpha));
    let arg = alpha * (v + b);
    s * arg.sin() / v.cos().powf(1.0 / alpha) * ((v - arg).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Variate with exponent `−c|z|^α(1 − iβ tan(πα/2) sgn z)` (no drift).
fn strict_stable(alpha: f64, c: f64, beta: f64, rng: &mut ChaCha12Rng) -> f64 {
    if alpha == 2.0 {
        let g: f64 = StandardNormal.sample(rng);
        return (2.0 * c).sqrt() * g;
    }
    c.powf(1.0 / alpha) * standard_stable(alpha, beta, rng)
}

/// Isotropic vector with CF `exp(−c|λ|^α)`, as `√A·G` with `A` positive `α/2`-stable.
fn isotropic_stable(alpha: f64, c: f64, rng: &mut ChaCha12Rng, out: &mut [f64]) {
    let scale = if alpha == 2.0 {
        1.0
    } else {
        let a = alpha / 2.0;
        let sa = (PI * a / 2.0).cos().powf(1.0 / a);
        (sa * standard_stable(a, 1.0, rng)).max(0.0)
    };
    let sd = (2.0 * c.powf(2.0 / alpha) * scale).sqrt();
    for o in out.iter_mut() {
        let g: f64 = StandardNormal.sample(rng);
        *o += sd * g;
    }
}

/// `n` draws of the 1D stable law with exponent `iza − c|z|^α(1 − iβ tan(πα/2) sgn z)`.
pub fn sample_stable(params: StableParams, n: usize, rng: &RngStream) -> Result<SampleBatch> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let p = params;
    let values = fill(n, 1, rng, |r, out| out[0] = p.a + strict_stable(p.alpha, p.c, p.beta, r));
    SampleBatch::new(
        1,
        values,
        format!("stable(alpha={}, c={}, beta={}, a={})", p.alpha, p.c, p.beta, p.a),
        Exactness::ExactInLaw,
        *rng,
    )
    .check()
}

fn sample_jump(law: &JumpLaw, cum: &[f64], rng: &mut ChaCha12Rng, out: &mut [f64]) {
    match law {
        JumpLaw::Atoms { atoms } => {
            let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
            let k = cum.partition_point(|c| *c <= u).min(atoms.len() - 1);
            out.copy_from_slice(&atoms[k].point);
        }
        JumpLaw::Exponential { rate } => {
            let e: f64 = Exp1.sample(rng);
            out[0] = e / rate;
        }
        JumpLaw::Uniform { lo, hi } => out[0] = lo + (hi - lo) * rng.random::<f64>(),
        JumpLaw::Pareto { alpha, scale } => out[0] = (scale * uniform_open(rng).powf(-1.0 / alpha)).min(JUMP_CAP),
        JumpLaw::InverseLogSquare => out[0] = (1.0 / uniform_open(rng)).exp().min(JUMP_CAP),
    }
}

fn cumulative(law: &JumpLaw) -> Vec<f64> {
    match law {
        JumpLaw::Atoms { atoms } => atoms
            .iter()
            .scan(0.0, |acc, a| {
                *acc += a.weight;
                Some(*acc)
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// An independent summand of `I♮` (or of a `ξ` increment) with an exact sampler.
#[derive(Debug, Clone)]
enum Piece {
    /// `L·N(0, I)`.
    Gaussian(DMatrix<f64>),
    Stable { alpha: f64, c: f64, beta: f64 },
    Isotropic { alpha: f64, c: f64 },
    /// Uncompensated jumps with rate `rate` on `[0, span]`, each propagated by
    /// `e^{−(span − T)Q}` when `propagate`.
    Jumps {
        rate: f64,
        law: JumpLaw,
        cum: Vec<f64>,
        span: f64,
        propagate: bool,
    },
}

fn psd_factor(s: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(s.clone());
    let d = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&d)
}

fn discrete_as_jumps(atoms: &[crate::levy_models::Atom]) -> Option<(f64, JumpLaw, DVector<f64>)> {
    let rate: f64 = atoms.iter().map(|a| a.weight).sum();
    if !(rate > 0.0) {
        return None;
    }
    let d = atoms[0].point.len();
    let mut comp = DVector::zeros(d);
    for a in atoms {
        if crate::levy_models::norm(&a.point) <= 1.0 {
            comp += DVector::from_column_slice(&a.point) * a.weight;
        }
    }
    let law = JumpLaw::Atoms {
        atoms: atoms
            .iter()
            .map(|a| crate::levy_models::Atom {
                point: a.point.clone(),
                weight: a.weight / rate,
            })
            .collect(),
    };
    Some((rate, law, comp))
}

/// Exact sampling recipe for `I♮` at a horizon: independent pieces plus a
/// deterministic offset (from compensators).
#[derive(Debug, Clone)]
struct ExactRecipe {
    pieces: Vec<Piece>,
    offset: DVector<f64>,
}

fn stable_factor(alpha: f64, gamma: f64, horizon: Horizon) -> f64 {
    let r = alpha * gamma;
    match horizon {
        Horizon::Infinite => 1.0 / r,
        Horizon::Finite(t) => -(-r * t).exp_m1() / r,
    }
}

fn exact_recipe(model: &LevyModel, spec: &DriftSpectrum, horizon: Horizon) -> Result<ExactRecipe> {
    let d = model.dim();
    let mut pieces = Vec::new();
    let mut offset = DVector::zeros(d);
    if model.sigma().amax() > 0.0 {
        pieces.push(Piece::Gaussian(psd_factor(&integrated_covariance(spec, model.sigma(), horizon)?)));
    }
    let no_exact = |what: &str| Error::NoExactSampler(format!("{what}; use sample_ou_path"));
    for leaf in model.jumps().leaves() {
        match leaf {
            JumpPart::Stable { params } => {
                let gamma = spec.scalar().ok_or_else(|| no_exact("stable noise needs a scalar drift matrix"))?;
                let f = stable_factor(params.alpha, gamma, horizon);
                pieces.push(Piece::Stable {
                    alpha: params.alpha,
                    c: params.c * f,
                    beta: params.beta,
                });
            }
            JumpPart::IsotropicStable { alpha, c } => {
                let gamma = spec
                    .conformal_rate()
                    .ok_or_else(|| no_exact("isotropic stable noise needs Q + Qᵀ = 2γI"))?;
                pieces.push(Piece::Isotropic {
                    alpha: *alpha,
                    c: c * stable_factor(*alpha, gamma, horizon),
                });
            }
            JumpPart::CompoundPoisson { rate, law } => {
                let Horizon::Finite(t) = horizon else {
                    return Err(no_exact("compound Poisson noise has no closed-form invariant sampler"));
                };
                pieces.push(Piece::Jumps {
                    rate: *rate,
                    law: law.clone(),
                    cum: cumulative(law),
                    span: t,
                    propagate: true,
                });
            }
            JumpPart::Discrete { measure } => {
                let Horizon::Finite(t) = horizon else {
                    return Err(no_exact("discrete Lévy measures have no closed-form invariant sampler"));
                };
                if let Some((rate, law, comp)) = discrete_as_jumps(&measure.atoms) {
                    offset -= drift_center(spec, &comp, horizon)?;
                    let cum = cumulative(&law);
                    pieces.push(Piece::Jumps {
                        rate,
                        law,
                        cum,
                        span: t,
                        propagate: true,
                    });
                }
            }
            JumpPart::None | JumpPart::Sum { .. } => {}
        }
    }
    Ok(ExactRecipe { pieces, offset })
}

impl Piece {
    /// Adds one draw of this piece to `out`.
    fn draw(&self, spec: &DriftSpectrum, rng: &mut ChaCha12Rng, out: &mut [f64], scratch: &mut [f64]) {
        match self {
            Piece::Gaussian(l) => {
                let d = l.nrows();
                for s in scratch.iter_mut().take(d) {
                    *s = StandardNormal.sample(rng);
                }
                for i in 0..d {
                    out[i] += (0..d).map(|j| l[(i, j)] * scratch[j]).sum::<f64>();
                }
            }
            Piece::Stable { alpha, c, beta } => out[0] += strict_stable(*alpha, *c, *beta, rng),
            Piece::Isotropic { alpha, c } => isotropic_stable(*alpha, *c, rng, out),
            Piece::Jumps {
                rate,
                law,
                cum,
                span,
                propagate,
            } => {
                let mean = rate * span;
                if mean <= 0.0 {
                    return;
                }
                let k = Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0) as usize;
                let d = out.len();
                let scalar = spec.scalar();
                for _ in 0..k {
                    sample_jump(law, cum, rng, &mut scratch[..d]);
                    if !*propagate {
                        for i in 0..d {
                            out[i] += scratch[i];
                        }
                        continue;
                    }
                    let age = span * rng.random::<f64>();
                    if let Some(g) = scalar {
                        let f = (-g * age).exp();
                        for i in 0..d {
                            out[i] += f * scratch[i];
                        }
                    } else {
                        let j = DVector::from_column_slice(&scratch[..d]);
                        if let Ok(v) = exp_action(spec, age, &j) {
                            for i in 0..d {
                                out[i] += v[i];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
    }
    Ok(())
}

fn draw_law(
    spec: &DriftSpectrum,
    recipe: &ExactRecipe,
    shift: &DVector<f64>,
    scale: f64,
    n: usize,
    rng: &RngStream,
) -> Vec<f64> {
    let d = shift.len();
    fill(n, d, rng, |r, out| {
        let mut scratch = vec![0.0; d];
        let mut acc = vec![0.0; d];
        for p in &recipe.pieces {
            p.draw(spec, r, &mut acc, &mut scratch);
        }
        for i in 0..d {
            out[i] = shift[i] + scale * (acc[i] + recipe.offset[i]);
        }
    })
}

/// Exact draws of `X^{(ε)}_t = e^{−tQ}x₀ + √ε (C_t + I♮_t)`.
pub fn sample_ou_exact(
    model: &LevyModel,
    spec: &DriftSpectrum,
    eps: f64,
    x0: &DVector<f64>,
    t: f64,
    n: usize,
    rng: &RngStream,
) -> Result<SampleBatch> {
    check_eps(eps)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::NegativeTime(t));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let tag = format!("X^(eps={eps})_t at t={t}");
    let mean = exp_action(spec, t, x0)?;
    if t == 0.0 {
        let values = (0..n).flat_map(|_| mean.iter().copied()).collect();
        return SampleBatch::new(x0.len(), values, tag, Exactness::ExactInLaw, *rng).check();
    }
    let h = Horizon::Finite(t);
    let recipe = exact_recipe(model, spec, h)?;
    let se = eps.sqrt();
    let shift = mean + drift_center(spec, &model.total_drift(), h)? * se;
    let values = draw_law(spec, &recipe, &shift, se, n, rng);
    SampleBatch::new(x0.len(), values, tag, Exactness::ExactInLaw, *rng).check()
}

/// Probe frequencies on a few radii and directions.
fn probes(dim: usize, radii: &[f64]) -> Vec<Vec<f64>> {
    let dirs = crate::levy_models::sphere_directions(dim, if dim == 1 { 1 } else { 5 });
    let mut out = Vec::new();
    for r in radii {
        for u in &dirs {
            out.push(u.iter().map(|x| x * r).collect());
            if dim == 1 {
                out.push(vec![-u[0] * r]);
            }
        }
    }
    out
}

/// Draws from the invariant law `μ^{(ε)}`: exact for Gaussian and stable
/// classes, otherwise a burn-in run from the origin checked for stationarity.
pub fn sample_invariant(model: &LevyModel, spec: &DriftSpectrum, eps: f64, n: usize, rng: &RngStream) -> Result<SampleBatch> {
    check_eps(eps)?;
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let lm = has_log_moment(model);
    if !lm.passed() {
        return Err(Error::LogMomentRequired(lm.note));
    }
    let d = model.dim();
    let se = eps.sqrt();
    let tag = format!("invariant law, eps={eps}");
    match exact_recipe(model, spec, Horizon::Infinite) {
        Ok(recipe) => {
            let shift = drift_center(spec, &model.total_drift(), Horizon::Infinite)? * se;
            let values = draw_law(spec, &recipe, &shift, se, n, rng);
            return SampleBatch::new(d, values, tag, Exactness::ExactInLaw, *rng).check();
        }
        Err(Error::NoExactSampler(_)) => {}
        Err(e) => return Err(e),
    }
    // burn-in: the deterministic CF gap on the probes must fall below 0.5/√n
    let probe_set = probes(d, &[0.1, 0.3, 1.0, 3.0]);
    let target = 0.5 / (n as f64).sqrt();
    let c_inf = drift_center(spec, &model.total_drift(), Horizon::Infinite)?;
    let phi_inf: Vec<_> = probe_set
        .iter()
        .map(|l| cf_inatural(model, spec, Horizon::Infinite, l).map(|v| v * shift_phase(&c_inf, l)))
        .collect::<Result<_>>()?;
    let mut horizon = 5.0 / spec.min_real();
    let mut gap = f64::INFINITY;
    for _ in 0..=MAX_BURN_DOUBLINGS {
        let c_t = drift_center(spec, &model.total_drift(), Horizon::Finite(horizon))?;
        gap = 0.0;
        for (l, pi) in probe_set.iter().zip(&phi_inf) {
            let v = cf_inatural(model, spec, Horizon::Finite(horizon), l)? * shift_phase(&c_t, l);
            gap = gap.max((v - pi).norm());
        }
        if gap < target {
            break;
        }
        horizon *= 2.0;
    }
    if gap >= target {
        return Err(Error::NotStationary { horizon, gap });
    }
    let zero = DVector::zeros(d);
    let mut batch = match sample_ou_exact(model, spec, eps, &zero, horizon, n, rng) {
        Ok(b) => b,
        Err(Error::NoExactSampler(_)) => {
            let h = euler_step_bound(spec)?.min(horizon / 64.0);
            sample_ou_path(model, spec, eps, &zero, &[0.0, horizon], h, n, rng)?
                .pop()
                .expect("two grid points")
        }
        Err(e) => return Err(e),
    };
    let check = probes(d, &[0.1, 0.3, 1.0, 3.0]);
    let mut worst: f64 = 0.0;
    for l in &check {
        let ls: Vec<f64> = l.iter().map(|x| x / se).collect();
        let e = batch.ecf(&ls);
        worst = worst.max((e - cf_invariant(model, spec, eps, &ls)?).norm());
    }
    if worst > 3.0 / (n as f64).sqrt() {
        return Err(Error::NotStationary { horizon, gap: worst });
    }
    batch.law_tag = tag;
    batch.cf_gap = Some(worst);
    Ok(batch)
}

fn shift_phase(c: &DVector<f64>, lam: &[f64]) -> num_complex::Complex64 {
    let th: f64 = c.iter().zip(lam).map(|(a, b)| a * b).sum();
    num_complex::Complex64::from_polar(1.0, th)
}

/// Largest admissible Euler step `1/(2 c₂)`.
pub fn euler_step_bound(spec: &DriftSpectrum) -> Result<f64> {
    Ok(0.5 / spec.decay()?.c2)
}

/// Pieces of a `ξ♮` increment over a step of length `h`, plus the
/// deterministic drift per unit time (model drift and compensators).
fn increment_recipe(model: &LevyModel, h: f64) -> (Vec<Piece>, DVector<f64>) {
    let d = model.dim();
    let mut pieces = Vec::new();
    let mut drift = model.total_drift();
    if model.sigma().amax() > 0.0 {
        pieces.push(Piece::Gaussian(psd_factor(&(model.sigma() * h))));
    }
    for leaf in model.jumps().leaves() {
        match leaf {
            JumpPart::Stable { params } => pieces.push(Piece::Stable {
                alpha: params.alpha,
                c: params.c * h,
                beta: params.beta,
            }),
            JumpPart::IsotropicStable { alpha, c } => pieces.push(Piece::Isotropic { alpha: *alpha, c: c * h }),
            JumpPart::CompoundPoisson { rate, law } => pieces.push(Piece::Jumps {
                rate: *rate,
                law: law.clone(),
                cum: cumulative(law),
                span: h,
                propagate: false,
            }),
            JumpPart::Discrete { measure } => {
                if let Some((rate, law, comp)) = discrete_as_jumps(&measure.atoms) {
                    drift -= comp;
                    let cum = cumulative(&law);
                    pieces.push(Piece::Jumps {
                        rate,
                        law,
                        cum,
                        span: h,
                        propagate: false,
                    });
                }
            }
            JumpPart::None | JumpPart::Sum { .. } => {}
        }
    }
    debug_assert_eq!(drift.len(), d);
    (pieces, drift)
}

/// Euler scheme `X ← X − QXh + √ε Δξ` with exact noise increments; one batch
/// per point of `t_grid` (which must start at 0 and increase).
#[allow(clippy::too_many_arguments)]
pub fn sample_ou_path(
    model: &LevyModel,
    spec: &DriftSpectrum,
    eps: f64,
    x0: &DVector<f64>,
    t_grid: &[f64],
    h: f64,
    n: usize,
    rng: &RngStream,
) -> Result<Vec<SampleBatch>> {
    check_eps(eps)?;
    if t_grid.first() != Some(&0.0) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("t_grid must start at 0 and increase".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let bound = euler_step_bound(spec)?;
    if !(h > 0.0) || h > bound {
        return Err(Error::StepTooLarge { step: h, bound });
    }
    let d = model.dim();
    let q = spec.matrix().clone();
    let se = eps.sqrt();
    // substeps per interval, with the step length used on that interval
    let plan: Vec<(usize, f64)> = t_grid
        .windows(2)
        .map(|w| {
            let m = ((w[1] - w[0]) / h).ceil().max(1.0) as usize;
            (m, (w[1] - w[0]) / m as f64)
        })
        .collect();
    let recipes: Vec<(Vec<Piece>, DVector<f64>)> = plan.iter().map(|(_, tau)| increment_recipe(model, *tau)).collect();
    let k = t_grid.len();
    let values = fill(n, d * k, rng, |r, out| {
        let mut x = x0.clone();
        out[..d].copy_from_slice(x.as_slice());
        let mut scratch = vec![0.0; d];
        let mut inc = vec![0.0; d];
        for (seg, ((m, tau), (pieces, drift))) in plan.iter().zip(&recipes).enumerate() {
            for _ in 0..*m {
                inc.iter_mut().for_each(|v| *v = 0.0);
                for p in pieces {
                    p.draw(spec, r, &mut inc, &mut scratch);
                }
                let qx = &q * &x;
                for i in 0..d {
                    x[i] += -qx[i] * tau + se * (inc[i] + drift[i] * tau);
                }
            }
            out[(seg + 1) * d..(seg + 2) * d].copy_from_slice(x.as_slice());
        }
    });
    let mut batches = Vec::with_capacity(k);
    for (j, t) in t_grid.iter().enumerate() {
        let vals: Vec<f64> = values.chunks(d * k).flat_map(|row| row[j * d..(j + 1) * d].to_vec()).collect();
        let ex = if j == 0 {
            Exactness::ExactInLaw
        } else {
            Exactness::EulerApprox { h: plan[j - 1].1 }
        };
        batches.push(SampleBatch::new(d, vals, format!("Euler path, eps={eps}, t={t}"), ex, *rng).check()?);
    }
    Ok(batches)
}

/// Largest `|empirical CF − cf_transition|` of a terminal batch over probes.
pub fn weak_error(
    batch: &SampleBatch,
    model: &LevyModel,
    spec: &DriftSpectrum,
    eps: f64,
    x0: &DVector<f64>,
    t: f64,
    probe_set: &[Vec<f64>],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for l in probe_set {
        worst = worst.max((batch.ecf(l) - cf_transition(model, spec, eps, x0, t, l)?).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::char_engine::{invert_to_density, plan_lattice, CharFunctionGrid, GridMeta};
    use crate::levy_models::DiscreteMeasure;
    use crate::matrix_dynamics::validate_mplus;
    use crate::stats::{grid_cdf, ks_one_sample, ks_pvalue, ks_two_sample_pvalue, quantile_sorted};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn q1(g: f64) -> DriftSpectrum {
        validate_mplus(&DMatrix::from_element(1, 1, g)).unwrap()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn var(v: &[f64]) -> f64 {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    }

    #[test]
    fn stable_gaussian_limit_and_drift() {
        let b = sample_stable(StableParams::new(2.0, 0.5, 0.0, 0.0).unwrap(), 100_000, &RngStream::new(1, 0)).unwrap();
        assert!((var(&b.values) - 1.0).abs() < 0.02);
        let b = sample_stable(StableParams::new(2.0, 0.5, 0.0, 5.0).unwrap(), 100_000, &RngStream::new(2, 0)).unwrap();
        assert!((mean(&b.values) - 5.0).abs() < 0.02);
    }

    #[test]
    fn cauchy_median() {
        let b = sample_stable(StableParams::symmetric(1.0, 1.0).unwrap(), 100_000, &RngStream::new(3, 0)).unwrap();
        let mut v = b.values.clone();
        v.sort_by(f64::total_cmp);
        assert!(quantile_sorted(&v, 0.5).abs() < 0.02);
        // quartiles of Cauchy(0,1) are ±1
        assert!((quantile_sorted(&v, 0.75) - 1.0).abs() < 0.03);
    }

    #[test]
    fn skewed_alpha_one_rejected() {
        let p = StableParams {
            alpha: 1.0,
            c: 1.0,
            beta: 0.5,
            a: 0.0,
        };
        assert!(sample_stable(p, 10, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn stable_ks_against_inverted_density() {
        for p in [StableParams::new(1.5, 1.0, 0.5, 0.0).unwrap(), StableParams::new(1.2, 2.0, 1.0, 1.0).unwrap()] {
            let cf = move |l: &[f64]| Ok(p.exponent(l[0]).exp());
            let plan = plan_lattice(&[&cf], 1, vec![p.a], 0.0, 1 << 16).unwrap();
            let g = invert_to_density(&CharFunctionGrid::build(plan, GridMeta::default(), cf).unwrap()).unwrap();
            let cdf = grid_cdf(&g);
            let b = sample_stable(p, 100_000, &RngStream::new(7, 1)).unwrap();
            let d = ks_one_sample(&b.values, &cdf);
            let pv = ks_pvalue(d, 1e5);
            assert!(pv >= 1e-3, "{p:?}: D = {d}, p = {pv}");
        }
    }

    /// Gil-Pelaez: `F(x) = ½ − π⁻¹ ∫₀^∞ Im(e^{−iux} φ(u))/u du`.
    fn gil_pelaez(p: StableParams, x: f64) -> f64 {
        let top = (40.0 / p.c).powf(1.0 / p.alpha);
        let mut pts = vec![0.0];
        let mut u = 1e-10;
        while u < top {
            pts.push(u);
            u *= 4.0;
        }
        pts.push(top);
        let f = |u: f64| {
            if u == 0.0 {
                return 0.0;
            }
            (Complex64::new(0.0, -u * x).exp() * p.exponent(u).exp()).im / u
        };
        let r = crate::quadrature::Quadrature::with_tol(1e-9).integrate_pieces(f, &pts).unwrap();
        0.5 - r.value / PI
    }

    #[test]
    fn heavy_tailed_stable_against_gil_pelaez() {
        // tails too heavy for a lattice window; compare at sample quantiles instead
        let p = StableParams::new(0.7, 1.0, -0.3, 0.0).unwrap();
        let b = sample_stable(p, 100_000, &RngStream::new(7, 1)).unwrap();
        let mut v = b.values.clone();
        v.sort_by(f64::total_cmp);
        let d = (1..100)
            .map(|k| {
                let q = k as f64 / 100.0;
                let x = quantile_sorted(&v, q);
                (gil_pelaez(p, x) - q).abs()
            })
            .fold(0.0, f64::max);
        assert!(ks_pvalue(d, 1e5) >= 1e-3, "{d}");
    }

    #[test]
    fn empirical_cf_matches_transition_cf() {
        let n = 40_000;
        let x0 = DVector::from_element(1, 1.5);
        let tol = 5.0 / (n as f64).sqrt();
        let q = q1(1.3);
        let models = [
            LevyModel::brownian(1, 2.0).unwrap(),
            LevyModel::stable(StableParams::new(1.5, 1.0, 0.4, 0.3).unwrap()).unwrap(),
            LevyModel::compound_poisson(2.0, JumpLaw::Exponential { rate: 1.5 }).unwrap(),
            LevyModel::pure_jump(
                1,
                JumpPart::Discrete {
                    measure: DiscreteMeasure::factorial_series(4),
                },
            )
            .unwrap(),
        ];
        for (k, m) in models.iter().enumerate() {
            let b = sample_ou_exact(m, &q, 0.5, &x0, 0.8, n, &RngStream::new(11, k as u64)).unwrap();
            for j in 0..20 {
                let l = [-3.0 + 0.3 * j as f64];
                let gap = (b.ecf(&l) - cf_transition(m, &q, 0.5, &x0, 0.8, &l).unwrap()).norm();
                assert!(gap < tol, "model {k}, λ = {l:?}: {gap}");
            }
        }
    }

    #[test]
    fn empirical_cf_two_dimensional() {
        let n = 40_000;
        let tol = 5.0 / (n as f64).sqrt();
        let x0 = DVector::from_vec(vec![1.0, -1.0]);
        let q = validate_mplus(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.5])).unwrap();
        let rot = validate_mplus(&DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 3.0, 1.0])).unwrap();
        let cases = [
            (LevyModel::gaussian(DVector::from_vec(vec![0.5, 0.0]), DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap(), &q),
            (
                LevyModel::compound_poisson(
                    1.5,
                    JumpLaw::Atoms {
                        atoms: vec![
                            crate::levy_models::Atom {
                                point: vec![1.0, 0.5],
                                weight: 0.5,
                            },
                            crate::levy_models::Atom {
                                point: vec![-0.5, 2.0],
                                weight: 0.5,
                            },
                        ],
                    },
                )
                .unwrap(),
                &q,
            ),
            (LevyModel::isotropic_stable(2, 1.2, 0.7).unwrap(), &rot),
        ];
        for (k, (m, s)) in cases.iter().enumerate() {
            let b = sample_ou_exact(m, s, 1.0, &x0, 0.7, n, &RngStream::new(5, k as u64)).unwrap();
            for dir in crate::levy_models::sphere_directions(2, 10) {
                for r in [0.5, 1.5] {
                    let l = [dir[0] * r, dir[1] * r];
                    let gap = (b.ecf(&l) - cf_transition(m, s, 1.0, &x0, 0.7, &l).unwrap()).norm();
                    assert!(gap < tol, "case {k}: {gap}");
                }
            }
        }
    }

    #[test]
    fn compound_poisson_zero_jump_paths() {
        let m = LevyModel::compound_poisson(1.0, JumpLaw::Uniform { lo: 0.5, hi: 1.0 }).unwrap();
        let x0 = DVector::from_element(1, 2.0);
        let b = sample_ou_exact(&m, &q1(1.0), 1.0, &x0, 1.0, 50_000, &RngStream::new(9, 0)).unwrap();
        let base = 2.0 * (-1.0f64).exp();
        let zero = b.values.iter().filter(|v| **v == base).count() as f64 / 50_000.0;
        // P(no jump) = e^{-1}; all other paths sit strictly above e^{-1}·x0
        assert!((zero - (-1.0f64).exp()).abs() < 0.01, "{zero}");
        assert!(b.values.iter().all(|v| *v >= base));
    }

    #[test]
    fn stable_transition_scale() {
        let eps: f64 = 0.25;
        let t = 2f64.ln();
        let m = LevyModel::stable(StableParams::symmetric(1.5, 1.0).unwrap()).unwrap();
        let recipe = exact_recipe(&m, &q1(1.0), Horizon::Finite(t)).unwrap();
        let Piece::Stable { c, .. } = recipe.pieces[0] else { panic!() };
        let expected = ((1.0 - 2f64.powf(-1.5)) / 1.5).powf(2.0 / 3.0) * eps.sqrt();
        assert!((c.powf(1.0 / 1.5) * eps.sqrt() - expected).abs() < 1e-14);
    }

    #[test]
    fn invariant_samples() {
        let (eps, gamma, s2) = (0.3, 2.0, 1.5);
        let m = LevyModel::brownian(1, s2).unwrap();
        let b = sample_invariant(&m, &q1(gamma), eps, 100_000, &RngStream::new(4, 0)).unwrap();
        assert!((var(&b.values) / (eps * s2 / (2.0 * gamma)) - 1.0).abs() < 0.02);
        // Cauchy OU: invariant law Cauchy with scale √ε c/γ
        let m = LevyModel::stable(StableParams::symmetric(1.0, 1.0).unwrap()).unwrap();
        let b = sample_invariant(&m, &q1(2.0), 0.25, 100_000, &RngStream::new(4, 1)).unwrap();
        let scale = 0.5 * 1.0 / 2.0;
        let d = ks_one_sample(&b.values, |x| 0.5 + (x / scale).atan() / PI);
        assert!(ks_pvalue(d, 1e5) > 1e-3);
    }

    #[test]
    fn invariant_burn_in_for_compound_poisson() {
        let m = LevyModel::compound_poisson(1.0, JumpLaw::Exponential { rate: 2.0 }).unwrap();
        let b = sample_invariant(&m, &q1(1.0), 1.0, 20_000, &RngStream::new(8, 0)).unwrap();
        assert!(b.is_exact());
        assert!(b.cf_gap.unwrap() < 3.0 / (20_000f64).sqrt());
        let bad = LevyModel::compound_poisson(1.0, JumpLaw::InverseLogSquare).unwrap();
        assert!(matches!(
            sample_invariant(&bad, &q1(1.0), 1.0, 100, &RngStream::new(8, 0)),
            Err(Error::LogMomentRequired(_))
        ));
    }

    #[test]
    fn epsilon_scaling() {
        let m = LevyModel::stable(StableParams::new(1.7, 1.0, 0.2, 0.0).unwrap()).unwrap();
        let q = q1(1.0);
        let zero = DVector::zeros(1);
        let a = sample_ou_exact(&m, &q, 1e-4, &zero, 1.0, 20_000, &RngStream::new(1, 1)).unwrap();
        let b = sample_ou_exact(&m, &q, 1.0, &zero, 1.0, 20_000, &RngStream::new(1, 2)).unwrap();
        let scaled: Vec<f64> = b.values.iter().map(|x| x * 1e-2).collect();
        assert!(ks_two_sample_pvalue(&a.values, &scaled) > 1e-3);
        // matched seeds give exactly scaled draws
        let c = sample_ou_exact(&m, &q, 1.0, &zero, 1.0, 20_000, &RngStream::new(1, 1)).unwrap();
        let err = a.values.iter().zip(&c.values).map(|(x, y)| (x - 1e-2 * y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12 * c.values.iter().fold(1.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn euler_paths() {
        let q = q1(1.0);
        let x0 = DVector::from_element(1, 3.0);
        let still = LevyModel::brownian(1, 0.0).unwrap();
        let b = sample_ou_path(&still, &q, 1.0, &x0, &[0.0, 1.0], 1e-4, 8, &RngStream::new(0, 0)).unwrap();
        // forward Euler of x' = −x
        assert!((b[1].values[0] - 3.0 * (-1.0f64).exp()).abs() < 3e-4);
        let only = sample_ou_path(&still, &q, 1.0, &x0, &[0.0], 0.1, 4, &RngStream::new(0, 0)).unwrap();
        assert_eq!(only[0].values, vec![3.0; 4]);
        let bm = LevyModel::brownian(1, 1.0).unwrap();
        assert!(matches!(
            sample_ou_path(&bm, &q, 1.0, &x0, &[0.0, 1.0], 0.9, 4, &RngStream::new(0, 0)),
            Err(Error::StepTooLarge { .. })
        ));
    }

    fn normal_tv(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
        let pdf = |x: f64, m: f64, v: f64| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        let h = 1e-4;
        (0..200_000).map(|k| {
            let x = -10.0 + (k as f64 + 0.5) * h;
            (pdf(x, m1, v1) - pdf(x, m2, v2)).abs()
        }).sum::<f64>() * h / 2.0
    }

    #[test]
    fn euler_weak_error_shrinks() {
        // terminal TV gap to the exact Gaussian law at each step size
        let q = q1(1.0);
        let x0 = DVector::from_element(1, 1.0);
        let bm = LevyModel::brownian(1, 1.0).unwrap();
        let t = 1.0;
        let exact_mean = (-1.0f64).exp();
        let exact_var = 0.5 * (1.0 - (-2.0f64).exp());
        let mut gaps = Vec::new();
        for h in [0.4, 0.2, 0.1] {
            let b = sample_ou_path(&bm, &q, 1.0, &x0, &[0.0, t], h, 400_000, &RngStream::new(21, 0)).unwrap();
            let v = b[1].values.clone();
            gaps.push(normal_tv(mean(&v), var(&v), exact_mean, exact_var));
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        let slope = (gaps[0] / gaps[2]).log2() / 2.0;
        assert!((0.6..1.5).contains(&slope), "{slope}");
        let b = sample_ou_path(&bm, &q, 1.0, &x0, &[0.0, t], 0.1, 20_000, &RngStream::new(3, 0)).unwrap();
        let w = weak_error(&b[1], &bm, &q, 1.0, &x0, t, &[vec![0.5], vec![1.0]]).unwrap();
        assert!(w < 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn reproducible(seed in any::<u64>(), stream in 0u64..1000) {
            let p = StableParams::new(1.3, 1.0, 0.1, 0.0).unwrap();
            let a = sample_stable(p, 5000, &RngStream::new(seed, stream)).unwrap();
            let b = sample_stable(p, 5000, &RngStream::new(seed, stream)).unwrap();
            prop_assert_eq!(a.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            let c = sample_stable(p, 5000, &RngStream::new(seed, stream + 1)).unwrap();
            prop_assert!(a.values != c.values);
        }

        #[test]
        fn empirical_cf_within_bound(seed in any::<u64>(), lam in -4.0f64..4.0) {
            let m = LevyModel::brownian(1, 1.0).unwrap();
            let q = q1(0.7);
            let x0 = DVector::from_element(1, 0.4);
            let n = 20_000;
            let b = sample_ou_exact(&m, &q, 1.0, &x0, 0.5, n, &RngStream::new(seed, 0)).unwrap();
            let gap = (b.ecf(&[lam]) - cf_transition(&m, &q, 1.0, &x0, 0.5, &[lam]).unwrap()).norm();
            prop_assert!(gap < 5.0 / (n as f64).sqrt());
        }
    }
}
