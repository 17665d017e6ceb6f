//! Sine and cosine integrals for the closed-form atom exponents.

use num_complex::Complex64;

const EULER: f64 = 0.577_215_664_901_532_9;
const SERIES_MAX: f64 = 2.0;

/// `(Cin(x), Si(x) − x)` by power series, for `|x| ≤ 2`.
fn series(x: f64) -> (f64, f64) {
    let x2 = x * x;
    let (mut cin, mut si) = (0.0, 0.0);
    // term_k = (−1)^k x^k / k!
    let mut fact_term = x2 / 2.0;
    let mut k = 2.0f64;
    let mut sign = 1.0;
    loop {
        // even k: Cin term; the following odd k: Si term
        cin += sign * fact_term / k;
        let odd = fact_term * x / (k + 1.0);
        si -= sign * odd / (k + 1.0);
        if fact_term.abs() < 1e-18 * cin.abs().max(1e-300) || k > 80.0 {
            break;
        }
        fact_term *= x2 / ((k + 1.0) * (k + 2.0));
        k += 2.0;
        sign = -sign;
    }
    (cin, si)
}

/// `(Ci(x), Si(x))` for `x > 2` by the continued fraction of `E₁(ix)`.
fn continued_fraction(x: f64) -> (f64, f64) {
    let tiny = 1e-300;
    let mut b = Complex64::new(1.0, x);
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 2..200 {
        let a = -((i - 1) as f64).powi(2);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h *= Complex64::new(x.cos(), -x.sin());
    (-h.re, std::f64::consts::FRAC_PI_2 + h.im)
}

/// `∫₀ˣ (e^{iu} − 1 − iu·[compensated])/u du`.
pub(crate) fn atom_integral(x: f64, compensated: bool) -> Complex64 {
    if x == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let a = x.abs();
    let (cin, si_minus) = if a <= SERIES_MAX {
        series(a)
    } else {
        let (ci, si) = continued_fraction(a);
        (EULER + a.ln() - ci, si - a)
    };
    // Cin is even, Si odd
    let im = if compensated { si_minus } else { si_minus + a };
    Complex64::new(-cin, im * x.signum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Quadrature;

    #[test]
    fn reference_values() {
        // Si(1), Ci(1), Si(10), Ci(10)
        let f = atom_integral(1.0, false);
        assert!((f.im - 0.946_083_070_367_183).abs() < 1e-14);
        assert!((-f.re - (EULER - 0.337_403_922_900_968)).abs() < 1e-14);
        let f = atom_integral(10.0, false);
        assert!((f.im - 1.658_347_594_218_874).abs() < 1e-13);
        assert!((-f.re - (EULER + 10f64.ln() + 0.045_456_433_004_455)).abs() < 1e-13);
    }

    #[test]
    fn matches_quadrature() {
        let q = Quadrature::with_tol(1e-13);
        for &x in &[1e-9f64, 0.3, -1.7, 2.0, 2.5, -9.0, 40.0, 1234.5] {
            for comp in [false, true] {
                let g = |u: f64| {
                    let k = if comp { u } else { 0.0 };
                    Complex64::new((u.cos() - 1.0) / u, (u.sin() - k) / u)
                };
                let n = ((x.abs() / 2.0).ceil() as usize).max(1);
                let (lo, hi) = (x.min(0.0), x.max(0.0));
                let pts: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
                let want = q.integrate_pieces(g, &pts).unwrap().value * x.signum();
                let got = atom_integral(x, comp);
                assert!((got - want).norm() < 1e-11 * (1.0 + want.norm()), "{x} {comp}: {got} vs {want}");
            }
        }
    }
}
