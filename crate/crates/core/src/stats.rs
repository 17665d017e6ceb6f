//! Small statistical helpers shared by the samplers and the TV estimators:
//! Kolmogorov–Smirnov statistics, empirical characteristic functions and
//! quantiles.

use num_complex::Complex64;

use crate::char_engine::DensityGrid;

/// Asymptotic Kolmogorov tail `P(K > x) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²x²}`.
pub fn kolmogorov_tail(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        s += if k as usize % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// p-value for a KS distance `d` with effective sample size `n_eff`
/// (Stephens' small-sample correction).
pub fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_tail((s + 0.12 + 0.11 / s) * d)
}

/// One-sample KS distance of `xs` against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS distance.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample KS p-value.
pub fn ks_two_sample_pvalue(xs: &[f64], ys: &[f64]) -> f64 {
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    ks_pvalue(ks_two_sample(xs, ys), n * m / (n + m))
}

/// `n⁻¹ Σ e^{i<λ, x_k>}` over row-major points of dimension `dim`.
pub fn empirical_cf(values: &[f64], dim: usize, lam: &[f64]) -> Complex64 {
    let n = values.len() / dim;
    let s: Complex64 = values
        .chunks(dim)
        .map(|x| {
            let th: f64 = x.iter().zip(lam).map(|(a, b)| a * b).sum();
            Complex64::new(th.cos(), th.sin())
        })
        .sum();
    s / n as f64
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = h.floor() as usize;
    let w = h - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] * (1.0 - w) + sorted[i + 1] * w
    }
}

/// CDF of the piecewise-linear interpolant of a 1D density grid.
pub fn grid_cdf(g: &DensityGrid) -> impl Fn(f64) -> f64 + '_ {
    let mut cum = Vec::with_capacity(g.n + 1);
    // the interpolant ramps from 0 one cell before the first node
    let mut acc = 0.5 * g.values[0] * g.dx;
    cum.push(0.0);
    cum.push(acc);
    for j in 1..g.n {
        acc += 0.5 * (g.values[j - 1] + g.values[j]) * g.dx;
        cum.push(acc);
    }
    let total = acc + 0.5 * g.values[g.n - 1] * g.dx;
    move |x: f64| {
        let p = (x - g.center[0]) / g.dx + (g.n / 2) as f64;
        // node j sits at position j; cum[j + 1] is the mass left of node j
        if p <= -1.0 {
            return 0.0;
        }
        if p >= g.n as f64 {
            return 1.0;
        }
        let i = p.floor();
        let w = p - i;
        let i = i as isize;
        let at = |k: isize| if k < 0 || k >= g.n as isize { 0.0 } else { g.values[k as usize] };
        let (f0, f1) = (at(i), at(i + 1));
        let base = cum[(i + 1) as usize];
        ((base + g.dx * (f0 * w + 0.5 * (f1 - f0) * w * w)) / total).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn kolmogorov_tail_values() {
        // P(K > 1.3581) ≈ 0.05, P(K > 1.6276) ≈ 0.01
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_against_exact_cdf() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.0005).abs() < 1e-12);
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.1).collect();
        assert!((ks_two_sample(&xs, &shifted) - 0.1).abs() < 2e-3);
    }

    #[test]
    fn grid_cdf_matches_normal() {
        let g = DensityGrid::from_fn(1, 2048, 0.01, vec![0.0], |x| (-x[0] * x[0] / 2.0).exp()).unwrap();
        let cdf = grid_cdf(&g);
        let n = Normal::new(0.0, 1.0).unwrap();
        for x in [-2.0, -0.3, 0.0, 0.77, 3.0] {
            assert!((cdf(x) - n.cdf(x)).abs() < 1e-4, "{x}");
        }
    }
}
