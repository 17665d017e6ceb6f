//! Acceptance suite. Prints one PASS/FAIL line per criterion; exits non-zero
//! only when a criterion fails that is not a known, analysed failure.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use oulcut::char_engine::DensityGrid;
use oulcut::cutoff_lab::{cutoff_schedule, default_probe_grid, oscillation_profile_band, sandwich_grid, scaling_limit_ratio, Lab};
use oulcut::ensembles::{
    average_distance_mc, average_profile, average_schedule, superposition_schedule, AverageConfig, SuperpositionConfig,
    SuperpositionLab,
};
use oulcut::levy_models::{check_small_jump_activity, DiscreteMeasure, JumpPart, LevyModel, SmallJumpVariant, StableParams};
use oulcut::matrix_dynamics::{asymptotic_decomposition, oscillation_envelope, validate_mplus, DriftSpectrum};
use oulcut::report::Verdict;
use oulcut::sampler::RngStream;
use oulcut::tv_metrics::{property_suite_appendix, AppendixParams};
use oulcut_cli::{run, Overrides};
use rand::Rng;
use statrs::function::erf::erf;
use std::f64::consts::PI;

struct Outcome {
    passed: bool,
    detail: String,
    /// Set when a failure is expected and its analysis was confirmed.
    explained: bool,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Self {
            passed,
            detail,
            explained: false,
        }
    }
}

type Res = Result<Outcome, String>;

fn q1(g: f64) -> DriftSpectrum {
    validate_mplus(&DMatrix::from_element(1, 1, g)).unwrap()
}

fn x1(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn gaussian() -> LevyModel {
    LevyModel::brownian(1, 1.0).unwrap()
}

fn cauchy() -> LevyModel {
    LevyModel::stable(StableParams::symmetric(1.0, 1.0).unwrap()).unwrap()
}

fn c_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn s(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// N(0,v) against N(b,v)
fn normal_shift_tv(b: f64, v: f64) -> f64 {
    erf(b.abs() / (2.0 * (2.0 * v).sqrt()))
}

fn c1_gaussian_profile() -> Res {
    let start = Instant::now();
    let (model, spec) = (gaussian(), q1(1.0));
    let lab = Lab::new(&model, &spec).map_err(s)?;
    let mut worst = 0.0f64;
    for eps in [1e-4, 1e-6, 1e-8] {
        let sch = cutoff_schedule(1.0, 1, eps).map_err(s)?;
        for c in c_grid(-4.0, 4.0, 25) {
            let d = lab.distance(eps, &x1(1.0), sch.time(c)).map_err(s)?.value;
            worst = worst.max((d - erf((-c).exp() / 2.0)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome::new(worst <= 0.02 && secs <= 60.0, format!("max |d − erf(e^-c/2)| = {worst:.2e}, {secs:.1} s")))
}

fn c2_cauchy_profile() -> Res {
    let start = Instant::now();
    let (model, spec) = (cauchy(), q1(1.0));
    let lab = Lab::new(&model, &spec).map_err(s)?;
    let (eps, x0, gamma) = (1e-6, 2.0, 1.0);
    let sch = cutoff_schedule(gamma, 1, eps).map_err(s)?;
    let mut worst = 0.0f64;
    for c in c_grid(-4.0, 4.0, 25) {
        let d = lab.distance(eps, &x1(x0), sch.time(c)).map_err(s)?.value;
        // invariant law is Cauchy with scale 1/γ
        let g = 2.0 / PI * ((-c).exp() * x0 * gamma / 2.0).atan();
        worst = worst.max((d - g).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome::new(worst <= 0.02 && secs <= 60.0, format!("max |d − (2/π)arctan(e^-c)| = {worst:.2e}, {secs:.1} s")))
}

fn c3_cutoff_step() -> Res {
    let (model, spec) = (gaussian(), q1(1.0));
    let lab = Lab::new(&model, &spec).map_err(s)?;
    let eps = 1e-8;
    let t = cutoff_schedule(1.0, 1, eps).map_err(s)?.t_eps;
    let early = lab.distance(eps, &x1(1.0), 0.5 * t).map_err(s)?.value;
    let late = lab.distance(eps, &x1(1.0), 1.5 * t).map_err(s)?.value;
    Ok(Outcome::new(early >= 0.95 && late <= 0.05, format!("d(0.5 t_eps) = {early:.6}, d(1.5 t_eps) = {late:.2e}")))
}

fn c4_sandwich() -> Res {
    let eps = [1e-2, 1e-3, 1e-4, 1e-6, 1e-8];
    let ts = [0.5, 1.0, 2.0, 4.0, 8.0];
    let mut worst = f64::NEG_INFINITY;
    for (model, x0) in [(gaussian(), 1.0), (cauchy(), 2.0)] {
        let probes = sandwich_grid(&model, &q1(1.0), &x1(x0), &eps, &ts).map_err(s)?;
        assert_eq!(probes.len(), 25);
        worst = probes.iter().map(|p| p.excess()).fold(worst, f64::max);
    }
    Ok(Outcome::new(worst <= 0.01, format!("max (|d − D| − R) over 2×25 probes = {worst:.2e}")))
}

fn c5_error_decay() -> Res {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, model, gamma) in [("gaussian", gaussian(), 1.0), ("cauchy", cauchy(), 1.0), ("cauchy γ=2", cauchy(), 2.0)] {
        let spec = q1(gamma);
        let lab = Lab::new(&model, &spec).map_err(s)?;
        let r: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|k| lab.error_term(k / gamma).map(|e| e.value))
            .collect::<Result<_, _>>()
            .map_err(s)?;
        ok &= r.windows(2).all(|w| w[1] < w[0]) && r[4] <= 0.01;
        lines.push(format!("{name}: R(16/γ) = {:.2e}", r[4]));
    }
    Ok(Outcome::new(ok, lines.join("; ")))
}

/// Random `Q = P J P⁻¹` with real Jordan blocks up to size 3 and rotation blocks.
fn random_q(rng: &mut impl Rng) -> DMatrix<f64> {
    let d = rng.random_range(1..=5usize);
    let mut j = DMatrix::zeros(d, d);
    let mut i = 0;
    while i < d {
        let left = d - i;
        let a = rng.random_range(0.5..3.0);
        if left >= 2 && rng.random_bool(0.4) {
            let b = rng.random_range(0.3..4.0);
            j[(i, i)] = a;
            j[(i + 1, i + 1)] = a;
            j[(i, i + 1)] = -b;
            j[(i + 1, i)] = b;
            i += 2;
        } else {
            let k = rng.random_range(1..=left.min(3));
            for r in 0..k {
                j[(i + r, i + r)] = a;
                if r + 1 < k {
                    j[(i + r, i + r + 1)] = 1.0;
                }
            }
            i += k;
        }
    }
    loop {
        let p: DMatrix<f64> = DMatrix::from_fn(d, d, |r, c| if r == c { 1.0 } else { 0.0 } + rng.random_range(-0.4..0.4));
        if p.determinant().abs() > 0.2 {
            let inv = p.clone().try_inverse().unwrap();
            return &p * j * inv;
        }
    }
}

fn c6_spectral() -> Res {
    let mut rng = RngStream::new(2024, 6).chunk(0);
    let (mut worst, mut osc, mut jordan, mut min_liminf) = (0.0f64, 0, 0, f64::INFINITY);
    for _ in 0..50 {
        let q = random_q(&mut rng);
        let d = q.nrows();
        let spec = validate_mplus(&q).map_err(s)?;
        let x0 = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
        let asym = asymptotic_decomposition(&spec, &x0).map_err(s)?;
        let r = asym.expansion_residual(&spec, 50.0 / asym.gamma).map_err(s)?;
        worst = worst.max(r);
        if spec.clusters().iter().any(|c| c.max_block() > 1) {
            jordan += 1;
        }
        if asym.oscillatory {
            osc += 1;
            let env = oscillation_envelope(&asym, &default_probe_grid(&asym));
            min_liminf = min_liminf.min(env.liminf_est);
        }
    }
    let ok = worst <= 1e-6 && (osc == 0 || min_liminf > 0.0);
    Ok(Outcome::new(
        ok,
        format!("max residual at 50/γ = {worst:.2e}; {osc} oscillatory (min liminf {min_liminf:.3e}), {jordan} with Jordan blocks"),
    ))
}

fn c7_scaling_limit() -> Res {
    let eps = 1e-10;
    let (mut worst, mut worst_l1, mut model_err) = (0.0f64, 0.0f64, 0.0f64);
    for gamma in [1.0, 2.0] {
        for ell in [1usize, 2, 3] {
            for c in [-2.0, 0.0, 2.0] {
                let (lhs, rhs) = scaling_limit_ratio(gamma, ell, c, eps).map_err(s)?;
                let rel = (lhs / rhs - 1.0).abs();
                worst = worst.max(rel);
                if ell == 1 {
                    worst_l1 = worst_l1.max(rel);
                }
                // logarithmic correction: (2γ t / ln(1/ε))^{ℓ−1}
                let t = cutoff_schedule(gamma, ell, eps).map_err(s)?.time(c);
                let predicted = (2.0 * gamma * t / (1.0 / eps).ln()).powi(ell as i32 - 1);
                model_err = model_err.max((lhs / rhs / predicted - 1.0).abs());
            }
        }
    }
    // the gap closes only like ln ln(1/ε)/ln(1/ε)
    let (a, b) = scaling_limit_ratio(1.0, 2, 0.0, 1e-300).map_err(s)?;
    let far = (a / b - 1.0).abs();
    let passed = worst <= 0.01;
    let mut out = Outcome::new(
        passed,
        format!("max rel err {worst:.3} (ℓ=1: {worst_l1:.1e}); matches (2γt/ln(1/ε))^(ℓ−1) to {model_err:.1e}; ℓ=2 at ε=1e-300: {far:.3}"),
    );
    out.explained = !passed && worst_l1 <= 1e-9 && model_err <= 1e-9 && far < worst;
    Ok(out)
}

fn c8_tv_identities() -> Res {
    let normal = |m: f64, sd: f64| {
        DensityGrid::from_fn(1, 8192, 0.005, vec![0.0], move |x| (-(x[0] - m).powi(2) / (2.0 * sd * sd)).exp()).unwrap()
    };
    let r = property_suite_appendix(&normal(0.0, 1.0), &normal(0.3, 1.5), &normal(0.0, 0.8), &AppendixParams::default(), 1e-6)
        .map_err(s)?;
    let (joint, parts) = r.subadditivity.ok_or("no subadditivity item")?;
    let monotone = r.divergence.windows(2).all(|w| w[1].1 > w[0].1);
    let ok = r.passed() && joint < parts && monotone;
    let worst = r.items[..3].iter().map(|c| c.measured).fold(0.0, f64::max);
    Ok(Outcome::new(
        ok,
        format!("shift/scale/affine worst {worst:.1e} (tol 1e-6); ‖sum‖ {joint:.4} < {parts:.4}; divergence monotone: {monotone}"),
    ))
}

fn c9_average() -> Res {
    let start = Instant::now();
    let n = 10_000u64;
    let cfg = AverageConfig {
        stable: StableParams::symmetric(1.5, 1.0).map_err(s)?,
        gamma: 1.0,
        x0: 1.0,
        n,
        eps_n: 1.0 / n as f64,
    };
    let sch = average_schedule(&cfg).map_err(s)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for c in [-2.0, 0.0, 2.0] {
        let g = average_profile(&cfg, c).map_err(s)?.value;
        let e = average_distance_mc(&cfg, sch.time(c), 100_000, 9).map_err(s)?;
        let tol = 0.03f64.max(3.0 * e.stderr);
        ok &= (e.value - g).abs() <= tol;
        parts.push(format!("c={c}: {:.4} vs {g:.4}", e.value));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome::new(ok && secs <= 300.0, format!("{}; {secs:.1} s", parts.join(", "))))
}

fn superposition_cfg(extra: bool) -> SuperpositionConfig {
    let gauss = serde_json::json!({ "drift": [0.0], "sigma": [[1.0]] });
    let mut blocks = vec![
        serde_json::json!({ "m": 0.4, "gamma": 1.0, "x": 1.0, "model": gauss }),
        serde_json::json!({ "m": 0.4, "gamma": 2.0, "x": 1.0, "model": gauss }),
    ];
    if extra {
        blocks.push(serde_json::json!({ "m": 0.2, "gamma": 10.0, "x": 1.0, "model": gauss }));
    }
    serde_json::from_value(serde_json::json!({ "blocks": blocks })).unwrap()
}

fn c10_superposition() -> Res {
    let eps = 1e-8;
    let cs = c_grid(-3.0, 3.0, 13);
    // invariant variance Σ m_j²/(2γ_j); the J-block (γ̂ = 1) carries the shift m_1 x_1
    let oracle = |blocks: &[(f64, f64)], c: f64| {
        let v: f64 = blocks.iter().map(|(m, g)| m * m / (2.0 * g)).sum();
        normal_shift_tv((-c).exp() * 0.4, v)
    };
    let two = SuperpositionLab::new(&superposition_cfg(false)).map_err(s)?;
    let three = SuperpositionLab::new(&superposition_cfg(true)).map_err(s)?;
    let t_two = superposition_schedule(&superposition_cfg(false), eps).map_err(s)?;
    let t_three = superposition_schedule(&superposition_cfg(true), eps).map_err(s)?;
    let (mut fit, mut fast) = (0.0f64, 0.0f64);
    for &c in &cs {
        let d2 = two.distance(eps, t_two.time(c)).map_err(s)?.value;
        fit = fit.max((d2 - oracle(&[(0.4, 1.0), (0.4, 2.0)], c)).abs());
        let d3 = three.distance(eps, t_three.time(c)).map_err(s)?.value;
        fast = fast.max((d3 - oracle(&[(0.4, 1.0), (0.4, 2.0), (0.2, 10.0)], c)).abs());
    }
    Ok(Outcome::new(
        fit <= 0.02 && fast < 0.005,
        format!("two blocks vs erf profile {fit:.2e}; with γ=10 block, departure from J-block profile {fast:.2e}"),
    ))
}

fn c11_conditions() -> Res {
    let m = LevyModel::pure_jump(
        1,
        JumpPart::Discrete {
            measure: DiscreteMeasure::factorial_series(170),
        },
    )
    .map_err(s)?;
    let grid: Vec<f64> = (1..=200).map(|j| 10f64.powi(-j)).collect();
    let bk = check_small_jump_activity(&m, &grid, SmallJumpVariant::BK1d, 5.0).verdict;
    let kal = check_small_jump_activity(&m, &grid, SmallJumpVariant::Kallenberg, 5.0).verdict;
    Ok(Outcome::new(
        bk == Verdict::PassNumeric && kal == Verdict::FailNumeric,
        format!("Σ n δ_(1/n!): BK1d {bk:?}, Kallenberg {kal:?}"),
    ))
}

fn c12_rotation_band() -> Res {
    let q = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 2.0, 1.0]);
    let spec = validate_mplus(&q).map_err(s)?;
    let x0 = DVector::from_vec(vec![1.0, 0.0]);
    let asym = asymptotic_decomposition(&spec, &x0).map_err(s)?;
    let probe = default_probe_grid(&asym);
    let iso = LevyModel::brownian(2, 1.0).map_err(s)?;
    let band_iso = oscillation_profile_band(&iso, &spec, &asym, 0.0, &probe).map_err(s)?;
    let aniso = LevyModel::gaussian(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.05])).map_err(s)?;
    let band_aniso = oscillation_profile_band(&aniso, &spec, &asym, 0.0, &probe).map_err(s)?;
    Ok(Outcome::new(
        band_iso.width < 1e-3 && band_iso.profile.is_some() && band_aniso.width > 0.05,
        format!("isotropic width {:.2e} (G(0) = {:.4}); anisotropic width {:.3}", band_iso.width, band_iso.profile.unwrap_or(f64::NAN), band_aniso.width),
    ))
}

fn c13_determinism() -> Res {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let tmp = tempfile::tempdir().map_err(s)?;
    let mut files = 0;
    for name in ["gaussian_profile", "cauchy_distance", "superposition", "average", "gaussian_window"] {
        let cfg = configs.join(format!("{name}.json"));
        let mut runs = Vec::new();
        for k in 0..2 {
            let dir = tmp.path().join(format!("{name}-{k}"));
            let m = run(&cfg, &Overrides {
                out_dir: Some(dir.clone()),
                ..Overrides::default()
            })
            .map_err(|e| e.message)?;
            let bytes: Vec<Vec<u8>> = m.outputs.iter().map(|a| std::fs::read(dir.join(&a.file)).unwrap()).collect();
            runs.push(bytes);
        }
        if runs[0] != runs[1] {
            return Ok(Outcome::new(false, format!("{name}: CSV bytes differ between runs")));
        }
        files += runs[0].len();
    }
    Ok(Outcome::new(true, format!("{files} CSV files byte-identical across repeated runs")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Res); 13] = [
        ("gaussian profile", c1_gaussian_profile),
        ("cauchy profile", c2_cauchy_profile),
        ("cut-off step", c3_cutoff_step),
        ("sandwich inequality", c4_sandwich),
        ("error-term decay", c5_error_decay),
        ("spectral asymptotics", c6_spectral),
        ("scaling limit", c7_scaling_limit),
        ("tv identities", c8_tv_identities),
        ("average process", c9_average),
        ("superposition", c10_superposition),
        ("condition checkers", c11_conditions),
        ("rotation band", c12_rotation_band),
        ("determinism", c13_determinism),
    ];
    let mut unexpected = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (status, detail) = match f() {
            Ok(o) if o.passed => ("PASS", o.detail),
            Ok(o) if o.explained => ("FAIL", format!("{} [known: logarithmic convergence for ℓ ≥ 2]", o.detail)),
            Ok(o) => {
                unexpected += 1;
                ("FAIL", o.detail)
            }
            Err(e) => {
                unexpected += 1;
                ("FAIL", format!("error: {e}"))
            }
        };
        println!("criterion {:>2} {name:<22} {status}  {detail} ({:.1} s)", k + 1, start.elapsed().as_secs_f64());
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    }
}
