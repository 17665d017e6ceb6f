//! Hypothesis (H) and smoothness-regime checkers.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Horizon, Inatural};
use crate::levy_models::{char_exponent, ls_slope, sphere_directions, LevyModel};
use crate::matrix_dynamics::{DecayConstants, DriftSpectrum};
use crate::report::{ConditionName, ConditionReport, Evidence, Verdict};

const ANGLES_2D: usize = 32;

/// `∫_{R < |λ| < Λ} |φ(λ)| dλ` by the trapezoid rule in polar coordinates.
fn shell_integral(law: &Inatural, r_in: f64, r_out: f64, radial: usize) -> crate::Result<f64> {
    let d = law.dim();
    let dirs: Vec<Vec<f64>> = if d == 1 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        (0..ANGLES_2D)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / ANGLES_2D as f64;
                vec![a.cos(), a.sin()]
            })
            .collect()
    };
    let weight = if d == 1 { 1.0 } else { 2.0 * PI / ANGLES_2D as f64 };
    let h = (r_out - r_in) / radial as f64;
    let mut total = 0.0;
    for dir in &dirs {
        let terms: Vec<f64> = (0..=radial)
            .into_par_iter()
            .map(|i| {
                let r = r_in + i as f64 * h;
                let lam: Vec<f64> = dir.iter().map(|u| u * r).collect();
                let w = if i == 0 || i == radial { 0.5 } else { 1.0 };
                let jac = if d == 1 { 1.0 } else { r };
                law.cf(&lam).map(|v| w * jac * v.norm())
            })
            .collect::<crate::Result<_>>()?;
        total += terms.iter().sum::<f64>() * h;
    }
    Ok(total * weight)
}

/// Probes hypothesis (H): integrability of `|φ♮_t|` and uniform vanishing of
/// its tails beyond `R` for `s > t₀(R)`.
///
/// Pass requires the tail suprema to be non-increasing along `r_grid`, the last
/// one to be negligible, and `|φ♮|` to be negligible at the outer radius.
pub fn check_condition_h(model: &LevyModel, spec: &DriftSpectrum, r_grid: &[f64], t0_rule: &dyn Fn(f64) -> f64) -> ConditionReport {
    let name = ConditionName::HypothesisH;
    if r_grid.len() < 3 || r_grid.windows(2).any(|w| w[1] <= w[0]) || r_grid[0] <= 0.0 {
        return ConditionReport::inconclusive(name, "R grid must hold ≥ 3 increasing positive radii");
    }
    if model.dim() > 2 {
        return ConditionReport::inconclusive(name, "lattice integrals are available for d ≤ 2 only");
    }
    let t0s: Vec<f64> = r_grid.iter().map(|&r| t0_rule(r)).collect();
    if t0s.iter().any(|t| !(*t > 0.0)) || t0s.windows(2).any(|w| w[1] < w[0]) {
        return ConditionReport::inconclusive(name, "t0 rule must be positive and non-decreasing");
    }
    let r_max = *r_grid.last().unwrap();
    let outer = 4.0 * r_max;
    let radial = 1024;
    let run = || -> crate::Result<(Vec<Evidence>, f64, f64, Vec<f64>)> {
        // (a) integrability at the smallest t₀
        let base = Inatural::new(model, spec, Horizon::Finite(t0s[0]))?;
        let full = shell_integral(&base, 0.0, outer, 4 * radial)?;
        let edge = {
            let lam: Vec<f64> = std::iter::once(outer).chain(std::iter::repeat(0.0)).take(model.dim()).collect();
            base.cf(&lam)?.norm()
        };
        // (b) sup over s ∈ [t₀(R), 100 t₀(R)] of the tail integral
        let mut evidence = vec![Evidence {
            probe: vec![0.0, t0s[0]],
            value: full,
        }];
        let mut sups = Vec::new();
        for (&r, &t0) in r_grid.iter().zip(&t0s) {
            let mut sup: f64 = 0.0;
            for k in 0..8 {
                let s = t0 * 100f64.powf(k as f64 / 7.0);
                let law = Inatural::new(model, spec, Horizon::Finite(s))?;
                sup = sup.max(shell_integral(&law, r, outer, radial)?);
            }
            evidence.push(Evidence { probe: vec![r, t0], value: sup });
            sups.push(sup);
        }
        Ok((evidence, full, edge, sups))
    };
    match run() {
        Err(e) => ConditionReport::inconclusive(name, format!("evaluation failed: {e}")),
        Ok((evidence, full, edge, sups)) => {
            let monotone = sups.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14);
            let last = *sups.last().unwrap();
            let vanishing = last <= 1e-3 * sups[0].max(1e-300) || last <= 1e-8;
            let integrable = edge <= 1e-6;
            let verdict = if monotone && vanishing && integrable {
                Verdict::PassNumeric
            } else {
                Verdict::FailNumeric
            };
            let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
            let note = format!(
                "∫|φ| over |λ|<{outer:.3e} = {full:.4e}; |φ| at the outer radius = {edge:.3e}; tail sups [{}] \
                 for t0 = [{}]; verdict depends on the supplied t0 rule",
                fmt(&sups),
                fmt(&t0s)
            );
            ConditionReport::new(ConditionName::HypothesisH, verdict, evidence, note)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegimeKind {
    FullRankGaussian,
    StableTail { alpha: f64 },
    RadialKappa,
    None,
}

/// Tail bound `|φ♮_t(λ)| ≤ exp(−k ∫₀ᵗ κ(c₄e^{−c₂s}|λ|) ds)` with
/// `κ(r) = r^exponent` (or `ln r` when `logarithmic`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCertificate {
    pub regime: RegimeKind,
    pub k: f64,
    pub exponent: f64,
    pub logarithmic: bool,
    pub decay: Option<DecayConstants>,
    pub note: String,
}

impl SmoothnessCertificate {
    /// Upper bound on `|φ♮_t(λ)|` implied by the certificate.
    pub fn bound(&self, t: f64, lam_norm: f64) -> f64 {
        let Some(dc) = self.decay else { return 1.0 };
        if self.regime == RegimeKind::None {
            return 1.0;
        }
        let r = dc.c4 * lam_norm;
        let integral = if self.logarithmic {
            // ∫₀ᵗ ln⁺(r e^{−c₂s}) ds
            let s_max = (r.ln() / dc.c2).max(0.0).min(t);
            r.ln() * s_max - 0.5 * dc.c2 * s_max * s_max
        } else {
            let a = self.exponent * dc.c2;
            r.powf(self.exponent) * (-(-a * t).exp_m1()) / a
        };
        (-self.k * integral).exp()
    }
}

/// Which of the three smoothness regimes applies, with bound constants.
pub fn smoothness_regime(model: &LevyModel, spec: &DriftSpectrum) -> SmoothnessCertificate {
    let decay = spec.decay().ok();
    let d = model.dim();
    let eig = SymmetricEigen::new(model.sigma().clone()).eigenvalues;
    let lmin = eig.min();
    if lmin > 1e-12 * (1.0 + eig.max()) {
        return SmoothnessCertificate {
            regime: RegimeKind::FullRankGaussian,
            k: 0.5 * lmin,
            exponent: 2.0,
            logarithmic: false,
            decay,
            note: format!("Σ has full rank, λ_min = {lmin:.4e}"),
        };
    }
    let dirs = sphere_directions(d, if d == 1 { 2 } else { 16 });
    let radii: Vec<f64> = (4..=16).map(|k| 10f64.powf(k as f64 * 0.5)).collect();
    let mut table: Vec<Vec<f64>> = Vec::new();
    for u in &dirs {
        let mut row = Vec::new();
        for &r in &radii {
            let z: Vec<f64> = u.iter().map(|x| x * r).collect();
            let v = char_exponent(model, &z).map(|c| -c.re).unwrap_or(f64::NAN);
            row.push(v);
        }
        table.push(row);
    }
    if table.iter().flatten().any(|v| !v.is_finite()) {
        return none_certificate(decay, "exponent evaluation failed");
    }
    let ln_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let tail = radii.len() / 2;
    // ratio test: −Re ψ(ru)/r^α along every ray
    let slopes: Vec<f64> = table
        .iter()
        .map(|row| {
            let ys: Vec<f64> = row[tail..].iter().map(|v| v.max(1e-300).ln()).collect();
            ls_slope(&ln_r[tail..], &ys)
        })
        .collect();
    let a_lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let a_hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // a power law has the same local slope at every scale
    let local_spread = table
        .iter()
        .map(|row| {
            let loc: Vec<f64> = (tail..radii.len() - 1)
                .map(|i| (row[i + 1].max(1e-300).ln() - row[i].max(1e-300).ln()) / (ln_r[i + 1] - ln_r[i]))
                .collect();
            let lo = loc.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = loc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .fold(0.0, f64::max);
    if a_lo > 0.05 && a_hi - a_lo < 0.02 && local_spread < 0.02 && a_hi < 2.0 + 1e-9 {
        let alpha = (1e6 * a_lo).round() / 1e6;
        let k = table
            .iter()
            .flat_map(|row| row.iter().zip(&radii).map(|(v, r)| v / r.powf(alpha)))
            .fold(f64::INFINITY, f64::min);
        if k > 0.0 {
            return SmoothnessCertificate {
                regime: RegimeKind::StableTail { alpha },
                k,
                exponent: alpha,
                logarithmic: false,
                decay,
                note: format!("−Re ψ(λ) ≥ {k:.4e}|λ|^{alpha} on probe rays"),
            };
        }
    }
    // logarithmic κ: −Re ψ(ru) ≥ k ln r with growing ratio
    let ratios: Vec<Vec<f64>> = table
        .iter()
        .map(|row| row.iter().zip(&ln_r).map(|(v, l)| v / l).collect())
        .collect();
    let k_log = ratios.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let non_decreasing = ratios
        .iter()
        .all(|row| ls_slope(&ln_r[tail..], &row[tail..]) >= -1e-9);
    if k_log > 0.0 && non_decreasing {
        return SmoothnessCertificate {
            regime: RegimeKind::RadialKappa,
            k: k_log,
            exponent: 0.0,
            logarithmic: true,
            decay,
            note: format!("−Re ψ(λ) ≥ {k_log:.4e} ln|λ| on probe rays, ratio non-decreasing"),
        };
    }
    none_certificate(decay, "no regime certificate: −Re ψ stays bounded or irregular on probe rays")
}

fn none_certificate(decay: Option<DecayConstants>, note: &str) -> SmoothnessCertificate {
    SmoothnessCertificate {
        regime: RegimeKind::None,
        k: 0.0,
        exponent: 0.0,
        logarithmic: false,
        decay,
        note: note.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_models::{DiscreteMeasure, JumpLaw, JumpPart, StableParams};
    use crate::matrix_dynamics::validate_mplus;
    use nalgebra::DMatrix;

    fn scalar(g: f64) -> DriftSpectrum {
        validate_mplus(&DMatrix::from_element(1, 1, g)).unwrap()
    }

    #[test]
    fn hypothesis_h_verdicts() {
        let s = scalar(1.0);
        let r_grid = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        let rule = |r: f64| r;
        let bm = LevyModel::brownian(1, 1.0).unwrap();
        assert_eq!(check_condition_h(&bm, &s, &r_grid, &rule).verdict, Verdict::PassNumeric);
        let cauchy = LevyModel::stable(StableParams::symmetric(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(check_condition_h(&cauchy, &s, &r_grid, &rule).verdict, Verdict::PassNumeric);
        let cp = LevyModel::compound_poisson(1.0, JumpLaw::Exponential { rate: 1.0 }).unwrap();
        let rep = check_condition_h(&cp, &s, &r_grid, &rule);
        assert_eq!(rep.verdict, Verdict::FailNumeric);
    }

    #[test]
    fn compound_poisson_cf_floor() {
        // |φ♮_t| ≥ e^{−2·rate·t}: the tail never vanishes
        let s = scalar(1.0);
        let cp = LevyModel::compound_poisson(1.0, JumpLaw::atom(1.0)).unwrap();
        let law = Inatural::new(&cp, &s, Horizon::Finite(2.0)).unwrap();
        for &l in &[10.0, 1e3, 1e5] {
            assert!(law.cf(&[l]).unwrap().norm() >= (-4.0f64).exp() - 1e-12);
        }
    }

    #[test]
    fn regimes() {
        let s = scalar(1.0);
        let bm = LevyModel::brownian(1, 1.0).unwrap();
        assert_eq!(smoothness_regime(&bm, &s).regime, RegimeKind::FullRankGaussian);
        let st = LevyModel::stable(StableParams::new(1.5, 1.0, 0.3, 0.0).unwrap()).unwrap();
        assert_eq!(smoothness_regime(&st, &s).regime, RegimeKind::StableTail { alpha: 1.5 });
        let fact = LevyModel::pure_jump(
            1,
            JumpPart::Discrete {
                measure: DiscreteMeasure::factorial_series(170),
            },
        )
        .unwrap();
        let cert = smoothness_regime(&fact, &s);
        assert_eq!(cert.regime, RegimeKind::RadialKappa);
        assert!(cert.logarithmic);
        let cp = LevyModel::compound_poisson(2.0, JumpLaw::atom(1.0)).unwrap();
        assert_eq!(smoothness_regime(&cp, &s).regime, RegimeKind::None);
    }

    #[test]
    fn certificate_bounds_the_cf() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let s = validate_mplus(&q).unwrap();
        let m = LevyModel::brownian(2, 0.5).unwrap();
        let cert = smoothness_regime(&m, &s);
        let law = Inatural::new(&m, &s, Horizon::Finite(1.5)).unwrap();
        for lam in [[1.0f64, 0.0], [3.0, -2.0], [0.0, 6.0]] {
            let r = (lam[0] * lam[0] + lam[1] * lam[1]).sqrt();
            assert!(law.cf(&lam).unwrap().norm() <= cert.bound(1.5, r) * (1.0 + 1e-12));
        }
    }
}
