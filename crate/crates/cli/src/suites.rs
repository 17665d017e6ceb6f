//! Cheap invariant checks recorded in every manifest, per module touched.

use nalgebra::DVector;
use oulcut::char_engine::cf_invariant;
use oulcut::ensembles::SuperpositionReport;
use oulcut::levy_models::{char_exponent, has_log_moment, LevyModel};
use oulcut::matrix_dynamics::{asymptotic_decomposition, DriftSpectrum};
use oulcut::report::CheckLine;
use oulcut::sampler::{sample_ou_exact, RngStream};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub module: String,
    pub passed: bool,
    pub lines: Vec<CheckLine>,
}

impl Suite {
    fn new(module: &str, lines: Vec<CheckLine>) -> Self {
        Self {
            module: module.into(),
            passed: lines.iter().all(|l| l.passed),
            lines,
        }
    }
}

fn probes(d: usize) -> Vec<Vec<f64>> {
    let base = [0.1, -0.7, 1.3, 2.9, -5.0];
    (0..base.len()).map(|k| (0..d).map(|i| base[(k + i) % base.len()]).collect()).collect()
}

pub(crate) fn tv_range(values: impl Iterator<Item = f64>) -> CheckLine {
    let worst = values.map(|v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
    CheckLine::at_most("tv_in_unit_interval", worst, 1e-9)
}

pub(crate) fn for_model(model: &LevyModel, spec: &DriftSpectrum, x0: &DVector<f64>, sampled: bool) -> Vec<Suite> {
    let d = model.dim();
    let fail = |name: &str| CheckLine {
        name: name.into(),
        passed: false,
        measured: f64::NAN,
        tolerance: 0.0,
    };
    let mut out = Vec::new();

    let zero = char_exponent(model, &vec![0.0; d]).map_or(f64::INFINITY, |z| z.norm());
    let mut herm = 0.0f64;
    let mut re = 0.0f64;
    for z in probes(d) {
        let minus: Vec<f64> = z.iter().map(|x| -x).collect();
        if let (Ok(a), Ok(b)) = (char_exponent(model, &z), char_exponent(model, &minus)) {
            herm = herm.max((a - b.conj()).norm() / (1.0 + a.norm()));
            re = re.max(a.re);
        } else {
            herm = f64::INFINITY;
        }
    }
    out.push(Suite::new(
        "levy_models",
        vec![
            CheckLine::at_most("exponent_at_zero", zero, 1e-12),
            CheckLine::at_most("exponent_hermitian", herm, 1e-12),
            CheckLine::at_most("exponent_real_part_nonpositive", re, 1e-12),
        ],
    ));

    let mut md = Vec::new();
    if x0.iter().any(|v| *v != 0.0) {
        match asymptotic_decomposition(spec, x0) {
            Ok(a) => {
                let r = a.expansion_residual(spec, 50.0 / a.gamma).unwrap_or(f64::INFINITY);
                md.push(CheckLine::at_most("expansion_residual_t50", r, 1e-6));
            }
            Err(_) => md.push(fail("asymptotic_decomposition")),
        }
    }
    md.push(CheckLine::at_most("spectrum_positive_real_part", -spec.min_real(), 0.0));
    out.push(Suite::new("matrix_dynamics", md));

    if has_log_moment(model).passed() {
        let mut worst = 0.0f64;
        for z in probes(d) {
            worst = worst.max(cf_invariant(model, spec, 1.0, &z).map_or(f64::INFINITY, |v| v.norm() - 1.0));
        }
        let at0 = cf_invariant(model, spec, 1.0, &vec![0.0; d]).map_or(f64::INFINITY, |v| (v - 1.0).norm());
        out.push(Suite::new(
            "char_engine",
            vec![
                CheckLine::at_most("invariant_cf_at_zero", at0, 1e-12),
                CheckLine::at_most("invariant_cf_modulus", worst, 1e-12),
            ],
        ));
    }

    if sampled {
        let s = RngStream::new(7, 7);
        let a = sample_ou_exact(model, spec, 0.5, x0, 1.0, 64, &s);
        let b = sample_ou_exact(model, spec, 0.5, x0, 1.0, 64, &s);
        let line = match (a, b) {
            (Ok(a), Ok(b)) => CheckLine::at_most("reproducible_stream", if a.values == b.values { 0.0 } else { 1.0 }, 0.0),
            _ => CheckLine::at_most("reproducible_stream_skipped_no_exact_sampler", 0.0, 0.0),
        };
        out.push(Suite::new("sampler", vec![line]));
    }
    out
}

pub(crate) fn superposition(r: &SuperpositionReport) -> Suite {
    let mut lines = r.series.clone();
    lines.push(CheckLine::at_most("leading_sum_nonzero", -r.leading_sum.abs(), -1e-12));
    Suite::new("ensembles", lines)
}
