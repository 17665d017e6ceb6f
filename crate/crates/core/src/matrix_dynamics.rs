//! Drift matrices `Q ∈ M⁺(d)`: spectral structure, the action of `e^{−tQ}`,
//! decay constants, and the leading asymptotics of `e^{−tQ}x₀`.
//!
//! The spectral structure comes from clustered Schur eigenvalues. Each
//! cluster's generalized eigenspace is the null space of `(Q − λI)^m`, and
//! Jordan block sizes are read off the ranks of `(Q − λI)^k` restricted to it.
//! Everything downstream of the structure is checked against the independent
//! matrix-exponential route through residuals.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible real part of an eigenvalue.
pub const MPLUS_TOL: f64 = 1e-12;
/// Basis condition number above which a warning is recorded.
pub const ILL_CONDITIONED: f64 = 1e8;
/// Relative tolerance for merging eigenvalues and real-part ties.
pub const CLUSTER_TOL: f64 = 1e-8;

type CMatrix = DMatrix<Complex64>;
type CVector = DVector<Complex64>;

#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub eigenvalue: Complex64,
    pub multiplicity: usize,
    /// Jordan block sizes, largest first.
    pub blocks: Vec<usize>,
    /// Basis of the generalized eigenspace (d × multiplicity).
    basis: CMatrix,
}

impl EigenCluster {
    pub fn max_block(&self) -> usize {
        self.blocks.first().copied().unwrap_or(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Margin subtracted from / added to the extreme real parts.
    pub delta: f64,
}

impl DecayConstants {
    /// `c₄e^{−c₂t}|λ| ≤ |e^{−tQᵀ}λ| ≤ c₃e^{−c₁t}|λ|`, as (lower, upper) factors of `|λ|`.
    pub fn envelope(&self, t: f64) -> (f64, f64) {
        (self.c4 * (-self.c2 * t).exp(), self.c3 * (-self.c1 * t).exp())
    }
}

#[derive(Debug, Clone)]
pub struct DriftSpectrum {
    q: DMatrix<f64>,
    clusters: Vec<EigenCluster>,
    /// Full generalized-eigenvector basis, clusters side by side.
    basis: CMatrix,
    basis_inverse: CMatrix,
    pub condition_number: f64,
    pub warnings: Vec<String>,
    decay: OnceLock<std::result::Result<DecayConstants, Error>>,
}

fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

fn singular_values_sorted(m: &CMatrix) -> Vec<f64> {
    let svd = SVD::new(m.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn numeric_rank(m: &CMatrix, tol: f64) -> usize {
    singular_values_sorted(m).iter().filter(|&&s| s > tol).count()
}

/// Null space of `m` of the requested dimension (right singular vectors of the smallest values).
fn null_space(m: &CMatrix, dim: usize) -> CMatrix {
    let n = m.ncols();
    let svd = SVD::new(m.clone(), false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut out = CMatrix::zeros(n, dim);
    for (j, &idx) in order.iter().take(dim).enumerate() {
        for i in 0..n {
            out[(i, j)] = vt[(idx, i)].conj();
        }
    }
    out
}

/// Agglomerative clustering: two groups merge when their centroids are closer
/// than `scale · max(1e-8, (1e4·ε_mach)^{1/(m₁+m₂)})`. Defective eigenvalues of
/// a size-k Jordan block scatter by roughly `ε^{1/k}`, so the radius widens
/// with the combined multiplicity.
fn cluster_eigenvalues(eigs: &[Complex64], scale: f64) -> Vec<(Complex64, usize)> {
    let mut left: Vec<Complex64> = eigs.to_vec();
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    let centroid = |g: &[Complex64]| g.iter().sum::<Complex64>() / g.len() as f64;
    // a perturbed k-block splits into k eigenvalues on a circle of radius ~η^{1/k}
    for k in (2..=eigs.len()).rev() {
        let radius = scale * CLUSTER_TOL.max((1e4 * f64::EPSILON).powf(1.0 / k as f64));
        while left.len() >= k {
            let mut best: Option<(Vec<usize>, f64)> = None;
            for a in 0..left.len() {
                let mut idx: Vec<usize> = (0..left.len()).collect();
                idx.sort_by(|&i, &j| (left[i] - left[a]).norm().total_cmp(&(left[j] - left[a]).norm()));
                idx.truncate(k);
                let pts: Vec<Complex64> = idx.iter().map(|&i| left[i]).collect();
                let c = centroid(&pts);
                let spread = pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
                if spread <= radius && best.as_ref().map_or(true, |b| spread < b.1) {
                    best = Some((idx, spread));
                }
            }
            let Some((mut idx, _)) = best else { break };
            idx.sort_unstable_by(|a, b| b.cmp(a));
            groups.push(idx.into_iter().map(|i| left.remove(i)).collect());
        }
    }
    groups.extend(left.into_iter().map(|e| vec![e]));
    let mut out: Vec<(Complex64, usize)> = groups.iter().map(|g| (centroid(g), g.len())).collect();
    for c in out.iter_mut() {
        if c.0.im.abs() <= scale * 1e-12 {
            c.0.im = 0.0;
        }
    }
    out.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    out
}

/// Checks membership in `M⁺(d)` and computes the generalized eigenstructure.
pub fn validate_mplus(q: &DMatrix<f64>) -> Result<DriftSpectrum> {
    let d = q.nrows();
    if d == 0 || q.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: q.ncols(),
        });
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("Q must have finite entries".into()));
    }
    let schur = Schur::new(q.clone());
    let eigs: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    if let Some(bad) = eigs.iter().find(|e| e.re <= MPLUS_TOL) {
        return Err(Error::NotMPlus(*bad));
    }
    let scale = q.norm().max(f64::MIN_POSITIVE);
    let grouped = cluster_eigenvalues(&eigs, scale);
    let qc = complexify(q);
    let ident = CMatrix::identity(d, d);
    let mut clusters = Vec::with_capacity(grouped.len());
    for (lambda, mult) in grouped {
        let shifted = &qc - ident.scale(1.0) * lambda;
        let mut power = ident.clone();
        for _ in 0..mult {
            power = &power * &shifted;
        }
        let basis = null_space(&power, mult);
        // ranks of (Q−λI)^k on the generalized eigenspace
        let mut ranks = vec![mult];
        let mut img = basis.clone();
        let unit = scale.max(1.0);
        for k in 1..=mult {
            img = &shifted * &img;
            let r = numeric_rank(&img, 1e-7 * unit.powi(k as i32));
            ranks.push(r);
            if r == 0 {
                break;
            }
        }
        while ranks.len() < mult + 2 {
            ranks.push(0);
        }
        // blocks of size ≥ k: ranks[k-1] − ranks[k]; exactly k: difference of those
        let mut blocks = Vec::new();
        for k in (1..=mult).rev() {
            let at_least_k = ranks[k - 1] - ranks[k];
            let at_least_k1 = ranks[k] - ranks[k + 1];
            for _ in 0..at_least_k.saturating_sub(at_least_k1) {
                blocks.push(k);
            }
        }
        clusters.push(EigenCluster {
            eigenvalue: lambda,
            multiplicity: mult,
            blocks,
            basis,
        });
    }
    let mut basis = CMatrix::zeros(d, d);
    let mut col = 0;
    for c in &clusters {
        for j in 0..c.multiplicity {
            basis.set_column(col, &c.basis.column(j));
            col += 1;
        }
    }
    let sv = singular_values_sorted(&basis);
    let condition_number = sv[0] / sv[d - 1].max(f64::MIN_POSITIVE);
    let basis_inverse = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("generalized eigenvector basis is singular".into()))?;
    let mut warnings = Vec::new();
    if condition_number > ILL_CONDITIONED {
        warnings.push(format!("IllConditionedBasis: condition number {condition_number:.3e}"));
    }
    Ok(DriftSpectrum {
        q: q.clone(),
        clusters,
        basis,
        basis_inverse,
        condition_number,
        warnings,
        decay: OnceLock::new(),
    })
}

impl DriftSpectrum {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn clusters(&self) -> &[EigenCluster] {
        &self.clusters
    }

    /// Eigenvalues with multiplicity.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.clusters
            .iter()
            .flat_map(|c| std::iter::repeat(c.eigenvalue).take(c.multiplicity))
            .collect()
    }

    pub fn diagonalizable(&self) -> bool {
        self.clusters.iter().all(|c| c.max_block() == 1)
    }

    pub fn min_real(&self) -> f64 {
        self.clusters.iter().map(|c| c.eigenvalue.re).fold(f64::INFINITY, f64::min)
    }

    pub fn max_real(&self) -> f64 {
        self.clusters.iter().map(|c| c.eigenvalue.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Q = γI` for some scalar γ.
    pub fn scalar(&self) -> Option<f64> {
        let d = self.dim();
        let g = self.q[(0, 0)];
        let tol = 1e-14 * self.q.norm().max(1.0);
        let ok = (0..d).all(|i| (0..d).all(|j| (self.q[(i, j)] - if i == j { g } else { 0.0 }).abs() <= tol));
        ok.then_some(g)
    }

    /// `Q + Qᵀ = 2γI`: `e^{−sQ}` is `e^{−γs}` times an orthogonal matrix.
    pub fn conformal_rate(&self) -> Option<f64> {
        let d = self.dim();
        let sym = &self.q + self.q.transpose();
        let g = 0.5 * sym[(0, 0)];
        let tol = 1e-13 * self.q.norm().max(1.0);
        let ok = (0..d).all(|i| (0..d).all(|j| (sym[(i, j)] - if i == j { 2.0 * g } else { 0.0 }).abs() <= tol));
        ok.then_some(g)
    }

    /// `e^{−tQ}`.
    pub fn exp_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::NegativeTime(t));
        }
        if t == 0.0 {
            return Ok(DMatrix::identity(self.dim(), self.dim()));
        }
        Ok((&self.q * (-t)).exp())
    }

    /// `e^{−tQᵀ}`.
    pub fn exp_matrix_transpose(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.exp_matrix(t)?.transpose())
    }

    /// Decay constants, computed once and cached.
    pub fn decay(&self) -> Result<DecayConstants> {
        self.decay.get_or_init(|| calibrate_decay(self)).clone()
    }

    /// Projection of `x` onto the generalized eigenspace of cluster `k`.
    fn project(&self, k: usize, x: &CVector) -> CVector {
        let coords = &self.basis_inverse * x;
        let offset: usize = self.clusters[..k].iter().map(|c| c.multiplicity).sum();
        let c = &self.clusters[k];
        let mut out = CVector::zeros(self.dim());
        for j in 0..c.multiplicity {
            out += self.basis.column(offset + j) * coords[offset + j];
        }
        out
    }
}

/// `e^{−tQ}x` by Padé scaling-and-squaring.
pub fn exp_action(spec: &DriftSpectrum, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: x.len(),
        });
    }
    Ok(spec.exp_matrix(t)? * x)
}

/// Largest and smallest singular values of `e^{−tQᵀ}`.
fn extreme_gains(spec: &DriftSpectrum, t: f64) -> (f64, f64) {
    let m = spec.exp_matrix_transpose(t).expect("t ≥ 0");
    let s = SVD::new(m, false, false).singular_values;
    (s.max(), s.min())
}

fn calibrate_decay(spec: &DriftSpectrum) -> std::result::Result<DecayConstants, Error> {
    let min_re = spec.min_real();
    let max_re = spec.max_real();
    let max_block = spec.clusters.iter().map(|c| c.max_block()).max().unwrap_or(1);
    let mut delta = if max_block > 1 { 0.05 * min_re } else { 0.0 };
    let mut inflate = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0x00de_ca70);
    for _round in 0..5 {
        let c1 = min_re - delta;
        let c2 = max_re + delta;
        // the polynomial factor t^{k−1}e^{−δt} peaks near (k−1)/δ
        let horizon = 50.0 / c1 + if delta > 0.0 { 20.0 * max_block as f64 / delta } else { 0.0 };
        let n = 2000;
        let mut c3: f64 = 0.0;
        let mut c4 = f64::INFINITY;
        for i in 0..=n {
            let u = i as f64 / n as f64;
            let t = horizon * u * u;
            let (hi, lo) = extreme_gains(spec, t);
            c3 = c3.max(hi * (c1 * t).exp());
            c4 = c4.min(lo * (c2 * t).exp());
        }
        let c3 = c3 * inflate;
        let c4 = c4 / inflate;
        let constants = DecayConstants { c1, c2, c3, c4, delta };
        if probe_decay(spec, &constants, 1000, horizon, &mut rng) {
            return Ok(constants);
        }
        inflate *= 1.05;
        delta = if delta > 0.0 { 2.0 * delta } else { 1e-3 * min_re };
    }
    Err(Error::DecayCalibration { rounds: 5 })
}

fn probe_decay(spec: &DriftSpectrum, k: &DecayConstants, probes: usize, horizon: f64, rng: &mut ChaCha8Rng) -> bool {
    let d = spec.dim();
    (0..probes).all(|_| {
        let t = horizon * rng.random::<f64>().powi(2);
        let lam = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let img = spec.exp_matrix_transpose(t).expect("t ≥ 0") * &lam;
        let (lo, hi) = k.envelope(t);
        let n = lam.norm();
        let m = img.norm();
        m <= hi * n * (1.0 + 1e-12) && m >= lo * n * (1.0 - 1e-12)
    })
}

/// Decay constants `(c₁, c₂, c₃, c₄)` satisfying the two-sided exponential bound.
pub fn decay_constants(spec: &DriftSpectrum) -> Result<DecayConstants> {
    spec.decay()
}

/// One term `e^{−λt}(−t)^k/k! · vector` of the exact spectral expansion of `e^{−tQ}x₀`.
#[derive(Debug, Clone)]
pub struct SpectralTerm {
    pub eigenvalue: Complex64,
    pub power: usize,
    pub vector: CVector,
}

impl SpectralTerm {
    fn eval(&self, t: f64) -> CVector {
        let mut coef = (-self.eigenvalue * t).exp();
        for j in 1..=self.power {
            coef *= -t / j as f64;
        }
        self.vector.map(|v| v * coef)
    }
}

#[derive(Debug, Clone)]
pub struct AsymptoticData {
    pub gamma: f64,
    pub ell: usize,
    pub m: usize,
    /// Angular frequencies `θ_k` reduced to `[0, 2π)`.
    pub thetas: Vec<f64>,
    /// Unreduced frequencies `−Im λ_k`; `Σ e^{i t ω_k} v_k` is the limit curve.
    pub frequencies: Vec<f64>,
    pub vs: Vec<CVector>,
    pub v_sum: CVector,
    pub oscillatory: bool,
    /// All terms of the expansion, leading ones included.
    pub expansion: Vec<SpectralTerm>,
    /// `(t, leading residual)` on `t ∈ [5/γ, 50/γ]`.
    pub residual_curve: Vec<(f64, f64)>,
    x0: DVector<f64>,
}

impl AsymptoticData {
    /// Builds limit data directly from frequencies and vectors (no expansion attached).
    pub fn from_terms(gamma: f64, ell: usize, frequencies: Vec<f64>, vs: Vec<CVector>) -> Self {
        let d = vs.first().map(|v| v.len()).unwrap_or(0);
        let v_sum = vs.iter().fold(CVector::zeros(d), |acc, v| acc + v);
        let thetas = frequencies.iter().map(|w| w.rem_euclid(2.0 * PI)).collect();
        let oscillatory = frequencies.iter().any(|w| w.abs() > 1e-9);
        Self {
            gamma,
            ell,
            m: vs.len(),
            thetas,
            frequencies,
            vs,
            v_sum,
            oscillatory,
            expansion: Vec::new(),
            residual_curve: Vec::new(),
            x0: DVector::zeros(d),
        }
    }

    /// `v(t, x₀) = Σ e^{i t ω_k} v_k`.
    pub fn limit_vector(&self, t: f64) -> CVector {
        let d = self.v_sum.len();
        self.frequencies
            .iter()
            .zip(&self.vs)
            .fold(CVector::zeros(d), |acc, (w, v)| acc + v * Complex64::from_polar(1.0, w * t))
    }

    /// `(e^{γt}/t^{ℓ−1}) e^{−tQ}x₀`, from the matrix exponential.
    pub fn scaled_trajectory(&self, spec: &DriftSpectrum, t: f64) -> Result<DVector<f64>> {
        let x = exp_action(spec, t, &self.x0)?;
        Ok(x * ((self.gamma * t).exp() / t.powi(self.ell as i32 - 1)))
    }

    /// Leading-term residual `|(e^{γt}/t^{ℓ−1})e^{−tQ}x₀ − v(t,x₀)|`.
    pub fn leading_residual(&self, spec: &DriftSpectrum, t: f64) -> Result<f64> {
        let x = self.scaled_trajectory(spec, t)?;
        let v = self.limit_vector(t);
        Ok(x.iter().zip(v.iter()).map(|(a, b)| (Complex64::new(*a, 0.0) - b).norm_sqr()).sum::<f64>().sqrt())
    }

    /// Relative gap between the matrix exponential and the full spectral
    /// expansion, both scaled by `e^{γt}/t^{ℓ−1}`.
    pub fn expansion_residual(&self, spec: &DriftSpectrum, t: f64) -> Result<f64> {
        let x = exp_action(spec, t, &self.x0)?;
        let d = x.len();
        let recon = self.expansion.iter().fold(CVector::zeros(d), |acc, term| acc + term.eval(t));
        let scale = (self.gamma * t).exp() / t.powi(self.ell as i32 - 1);
        let gap = x
            .iter()
            .zip(recon.iter())
            .map(|(a, b)| (Complex64::new(*a, 0.0) - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let reference = self.v_sum.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(
            self.vs.iter().map(|v| v.norm()).fold(0.0, f64::max),
        );
        Ok(gap * scale / reference.max(f64::MIN_POSITIVE))
    }

    /// Largest `|Im|` over the components of `v(t)` on a grid; zero for genuine decompositions.
    pub fn imaginary_residual(&self, t_grid: &[f64]) -> f64 {
        t_grid
            .iter()
            .map(|&t| self.limit_vector(t).iter().map(|v| v.im.abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

/// Leading asymptotics of `e^{−tQ}x₀`: rate γ, polynomial order ℓ, and the
/// oscillating limit vectors.
pub fn asymptotic_decomposition(spec: &DriftSpectrum, x0: &DVector<f64>) -> Result<AsymptoticData> {
    let d = spec.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    let x_norm = x0.norm();
    if x_norm == 0.0 {
        return Err(Error::ZeroInitialCondition);
    }
    let xc = x0.map(|v| Complex64::new(v, 0.0));
    let qc = complexify(&spec.q);
    let scale = spec.q.norm().max(1.0);
    let mut expansion = Vec::new();
    // (cluster index, activated order ℓ_λ, leading vector)
    let mut active: Vec<(usize, usize)> = Vec::new();
    for (k, cluster) in spec.clusters.iter().enumerate() {
        let w = spec.project(k, &xc);
        if w.norm() <= 1e-9 * x_norm {
            continue;
        }
        let shifted = &qc - CMatrix::identity(d, d) * cluster.eigenvalue;
        let mut nk = w.clone();
        let mut order = 0;
        for p in 0..cluster.multiplicity {
            if nk.norm() <= 1e-9 * x_norm * scale.powi(p as i32) {
                break;
            }
            expansion.push(SpectralTerm {
                eigenvalue: cluster.eigenvalue,
                power: p,
                vector: nk.clone(),
            });
            order = p + 1;
            nk = &shifted * &nk;
        }
        if order > 0 {
            active.push((k, order));
        }
    }
    let gamma_min = active
        .iter()
        .map(|&(k, _)| spec.clusters[k].eigenvalue.re)
        .fold(f64::INFINITY, f64::min);
    let group: Vec<(usize, usize)> = active
        .iter()
        .copied()
        .filter(|&(k, _)| spec.clusters[k].eigenvalue.re - gamma_min <= CLUSTER_TOL * scale)
        .collect();
    let ell = group.iter().map(|g| g.1).max().unwrap_or(1);
    let gamma = gamma_min;
    let mut frequencies = Vec::new();
    let mut vs = Vec::new();
    for &(k, order) in &group {
        if order != ell {
            continue;
        }
        let lambda = spec.clusters[k].eigenvalue;
        let term = expansion
            .iter()
            .find(|t| t.eigenvalue == lambda && t.power == ell - 1)
            .expect("activated term present");
        // e^{−λt}(−t)^{ℓ−1}/(ℓ−1)! N^{ℓ−1}w  →  v = (−1)^{ℓ−1}/(ℓ−1)! N^{ℓ−1}w
        let mut coef = 1.0;
        for j in 1..ell {
            coef *= -1.0 / j as f64;
        }
        frequencies.push(-lambda.im);
        vs.push(term.vector.map(|v| v * coef));
    }
    let mut data = AsymptoticData::from_terms(gamma, ell, frequencies, vs);
    data.expansion = expansion;
    data.x0 = x0.clone();
    let mut curve = Vec::new();
    for i in 0..=20 {
        let t = 5.0 / gamma * 10f64.powf(i as f64 / 20.0);
        curve.push((t, data.leading_residual(spec, t)?));
    }
    data.residual_curve = curve;
    Ok(data)
}

#[derive(Debug, Clone)]
pub struct Envelope {
    pub liminf_est: f64,
    pub limsup_est: f64,
    /// Representative limit vectors (real parts) of `v(t, x₀)`.
    pub basin_samples: Vec<DVector<f64>>,
}

/// Range of `|v(t, x₀)|` over `t_grid` plus a thinned set of limit vectors.
pub fn oscillation_envelope(asym: &AsymptoticData, t_grid: &[f64]) -> Envelope {
    let norm_of = |v: &CVector| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if !asym.oscillatory || t_grid.is_empty() {
        let n = norm_of(&asym.v_sum);
        return Envelope {
            liminf_est: n,
            limsup_est: n,
            basin_samples: vec![asym.v_sum.map(|c| c.re)],
        };
    }
    let vals: Vec<CVector> = t_grid.iter().map(|&t| asym.limit_vector(t)).collect();
    let norms: Vec<f64> = vals.iter().map(norm_of).collect();
    let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = norms.iter().copied().fold(0.0, f64::max);
    let spacing = 0.01 * hi.max(f64::MIN_POSITIVE);
    let mut basin: Vec<DVector<f64>> = Vec::new();
    for v in &vals {
        let r = v.map(|c| c.re);
        if basin.iter().all(|b| (b - &r).norm() > spacing) {
            basin.push(r);
            if basin.len() >= 256 {
                break;
            }
        }
    }
    Envelope {
        liminf_est: lo,
        limsup_est: hi,
        basin_samples: basin,
    }
}
