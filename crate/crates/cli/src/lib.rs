//! Config-driven experiment runner: reads one JSON document, runs the
//! experiment, and writes CSV data, plot-ready CSV and a JSON manifest.

pub mod config;
mod output;
mod suites;

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use oulcut::char_engine::{check_condition_h, smoothness_regime, DEFAULT_N_1D, DEFAULT_N_2D};
use oulcut::cutoff_lab::{
    cutoff_schedule, default_c_grid, default_probe_grid, verify_cutoff, CurveRow, CutoffSchedule, Lab, Method, H_RADII,
};
use oulcut::ensembles::{
    average_distance, average_distance_mc, average_profile, average_profile_stated, average_schedule, superposition_limit_triple,
    superposition_schedule, SuperpositionLab,
};
use oulcut::levy_models::{check_small_jump_activity, has_log_moment, SmallJumpVariant};
use oulcut::matrix_dynamics::asymptotic_decomposition;
use oulcut::report::CheckLine;
use oulcut::sampler::RngStream;
use oulcut::tv_metrics::TvEstimate;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{Experiment, ExperimentConfig};
pub use output::{Artifact, Manifest, MANIFEST_SCHEMA};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "OULCUT_OUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    pub exit_code: i32,
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Value>,
}

impl RunError {
    pub fn validation(kind: &str, message: impl Into<String>) -> Self {
        Self {
            exit_code: 2,
            error: kind.into(),
            message: message.into(),
            report: None,
        }
    }

    pub fn numeric(kind: &str, message: impl Into<String>) -> Self {
        Self {
            exit_code: 3,
            ..Self::validation(kind, message)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.error, self.message)
    }
}

impl std::error::Error for RunError {}

fn variant_name(e: &oulcut::Error) -> String {
    let s = format!("{e:?}");
    let end = s.find(['(', ' ', '{']).unwrap_or(s.len());
    let mut out = String::new();
    for (i, ch) in s[..end].chars().enumerate() {
        if ch.is_uppercase() && i > 0 {
            out.push('_');
        }
        out.extend(ch.to_lowercase());
    }
    out
}

impl From<oulcut::Error> for RunError {
    fn from(e: oulcut::Error) -> Self {
        use oulcut::Error as E;
        let kind = variant_name(&e);
        match e {
            E::InvalidParameter(_)
            | E::NotMPlus(_)
            | E::ZeroInitialCondition
            | E::NegativeTime(_)
            | E::DimensionMismatch { .. }
            | E::InsufficientEpsilonRange
            | E::CoercivityViolation(_)
            | E::DegenerateLeadingTerm
            | E::TooFewSamples { .. }
            | E::NonpositiveCutoffTime(_)
            | E::StepTooLarge { .. }
            | E::LogMomentRequired(_) => RunError::validation(&kind, e.to_string()),
            _ => RunError::numeric(&kind, e.to_string()),
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Output directory: flag, then config, then `$OULCUT_OUT_ROOT/<stem>`, then `out/<stem>`.
pub fn resolve_out_dir(config_path: &Path, cfg: &ExperimentConfig, ov: &Overrides) -> PathBuf {
    if let Some(d) = &ov.out_dir {
        return d.clone();
    }
    let stem = config_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from);
    match (&cfg.out_dir, root) {
        (Some(d), Some(r)) if d.is_relative() => r.join(d),
        (Some(d), _) => d.clone(),
        (None, Some(r)) => r.join(stem),
        (None, None) => PathBuf::from("out").join(stem),
    }
}

fn load(config_path: &Path, ov: &Overrides) -> Result<ExperimentConfig, RunError> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if ov.workers.is_some() {
        cfg.workers = ov.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, RunError> {
    let n = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| RunError::numeric("worker_pool", e.to_string()))
}

/// Runs an experiment and writes its artifacts; returns the manifest.
pub fn run(config_path: &Path, ov: &Overrides) -> Result<Manifest, RunError> {
    let cfg = load(config_path, ov)?;
    let out = resolve_out_dir(config_path, &cfg, ov);
    let result = pool(cfg.workers)?.install(|| execute(&cfg));
    match result {
        Ok(res) => output::write_all(&out, &cfg, res),
        Err(e) => {
            // best effort: leave the error document next to where outputs would go
            if std::fs::create_dir_all(&out).is_ok() {
                let _ = std::fs::write(out.join("error.json"), e.to_json());
            }
            Err(e)
        }
    }
}

/// Everything an experiment produces before it is written out.
pub(crate) struct Outcome {
    pub tables: Vec<output::Table>,
    pub plot: output::Table,
    pub schedules: Vec<CutoffSchedule>,
    pub checks: Vec<CheckLine>,
    pub invariants: Vec<suites::Suite>,
    pub extra: Value,
}

fn tv_row(e: &TvEstimate) -> (f64, f64, String, String) {
    (
        e.value,
        e.stderr,
        format!("{:?}", e.method).to_lowercase(),
        if e.diagnostics.beyond_resolution {
            "beyond_resolution".into()
        } else {
            String::new()
        },
    )
}

fn rows_table(name: &str, first: &str, rows: &[CurveRow]) -> output::Table {
    let mut t = output::Table::new(name, &["eps", first, "value", "stderr", "method", "flags"]);
    for r in rows {
        t.push(vec![
            output::num(r.eps),
            output::num(r.t_or_c),
            output::num(r.value),
            output::num(r.stderr),
            format!("{:?}", r.method).to_lowercase(),
            r.flags.clone(),
        ]);
    }
    t
}

fn lab_for<'a>(cfg: &ExperimentConfig, model: &'a oulcut::levy_models::LevyModel, spec: &'a oulcut::matrix_dynamics::DriftSpectrum) -> Result<Lab<'a>, RunError> {
    let lab = Lab::new(model, spec).map_err(|e| with_h_report(e, model, spec))?;
    Ok(match cfg.lattice_n {
        Some(n) => lab.with_lattice_size(n),
        None => lab,
    })
}

/// Attaches the (H) checker output to a missing-density error.
fn with_h_report(e: oulcut::Error, model: &oulcut::levy_models::LevyModel, spec: &oulcut::matrix_dynamics::DriftSpectrum) -> RunError {
    let missing = matches!(e, oulcut::Error::MissingDensityRegime(_));
    let mut err = RunError::from(e);
    if missing {
        let t0 = 1.0 / spec.min_real();
        let rep = check_condition_h(model, spec, &H_RADII, &|_| t0);
        err.report = serde_json::to_value(&rep).ok();
    }
    err
}

fn execute(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match &cfg.experiment {
        Experiment::DistanceCurve {
            model,
            q,
            x0,
            eps,
            t_grid,
            method,
        } => {
            let model = model.build()?;
            let spec = config::build_q(q)?;
            let x0 = config::vector(x0);
            let lab = lab_for(cfg, &model, &spec)?;
            let asym = asymptotic_decomposition(&spec, &x0)?;
            let mut rows = Vec::new();
            let mut schedules = Vec::new();
            for (i, &e) in eps.iter().enumerate() {
                schedules.push(cutoff_schedule(asym.gamma, asym.ell, e)?);
                for (k, &t) in t_grid.iter().enumerate() {
                    let est = match *method {
                        Method::DensityShift => lab.distance(e, &x0, t)?,
                        Method::MonteCarlo { paths, .. } => {
                            lab.distance_mc(e, &x0, t, paths, &RngStream::new(cfg.seed, ((i as u64) << 32) | k as u64))?
                        }
                    };
                    rows.push(CurveRow::new(e, t, &est));
                }
            }
            let mut plot = output::Table::new("plot.csv", &["eps", "t", "d", "stderr"]);
            for r in &rows {
                plot.push(vec![output::num(r.eps), output::num(r.t_or_c), output::num(r.value), output::num(r.stderr)]);
            }
            let checks = vec![suites::tv_range(rows.iter().map(|r| r.value))];
            Ok(Outcome {
                tables: vec![rows_table("distance.csv", "t", &rows)],
                plot,
                schedules,
                checks,
                invariants: suites::for_model(&model, &spec, &x0, true),
                extra: json!({ "gamma": asym.gamma, "ell": asym.ell, "oscillatory": asym.oscillatory }),
            })
        }
        Experiment::Profile {
            model,
            q,
            x0,
            c_grid,
            method,
        } => {
            let model = model.build()?;
            let spec = config::build_q(q)?;
            let x0 = config::vector(x0);
            let c_grid = c_grid.clone().unwrap_or_else(default_c_grid);
            let asym = asymptotic_decomposition(&spec, &x0)?;
            lab_for(cfg, &model, &spec)?;
            let mut table = output::Table::new("profile.csv", &["c", "G", "G_upper", "stderr", "method", "flags"]);
            let mut plot = output::Table::new("plot.csv", &["c", "G", "stderr"]);
            let mut values = Vec::new();
            if asym.oscillatory {
                let probe = default_probe_grid(&asym);
                for &c in &c_grid {
                    let b = oulcut::cutoff_lab::oscillation_profile_band(&model, &spec, &asym, c, &probe)?;
                    let (v, s, m, f) = tv_row(&b.lower);
                    table.push(vec![output::num(c), output::num(v), output::num(b.upper.value), output::num(s), m, f]);
                    plot.push(vec![output::num(c), output::num(v), output::num(s)]);
                    values.push(v);
                    values.push(b.upper.value);
                }
            } else {
                let method = match *method {
                    Method::MonteCarlo { paths, .. } => Method::MonteCarlo { paths, seed: cfg.seed },
                    m => m,
                };
                let curve = oulcut::cutoff_lab::profile_curve(&model, &spec, &asym, &c_grid, method)?;
                for (c, e) in curve.c_grid.iter().zip(&curve.estimates) {
                    let (v, s, m, f) = tv_row(e);
                    table.push(vec![output::num(*c), output::num(v), output::num(v), output::num(s), m, f]);
                    plot.push(vec![output::num(*c), output::num(v), output::num(s)]);
                    values.push(v);
                }
            }
            Ok(Outcome {
                tables: vec![table],
                plot,
                schedules: Vec::new(),
                checks: vec![suites::tv_range(values.into_iter())],
                invariants: suites::for_model(&model, &spec, &x0, true),
                extra: json!({ "gamma": asym.gamma, "ell": asym.ell, "oscillatory": asym.oscillatory,
                               "v": asym.v_sum.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>() }),
            })
        }
        Experiment::VerifyCutoff { model, q, x0, eps, level } => {
            let model = model.build()?;
            let spec = config::build_q(q)?;
            let x0 = config::vector(x0);
            lab_for(cfg, &model, &spec)?;
            let rep = verify_cutoff(&model, &spec, eps, &x0, *level)?;
            let first = if *level == oulcut::cutoff_lab::CutoffLevel::Cutoff { "factor" } else { "c" };
            let mut plot = output::Table::new("plot.csv", &["eps", first, "d", "stderr"]);
            for r in &rep.rows {
                plot.push(vec![output::num(r.eps), output::num(r.t_or_c), output::num(r.value), output::num(r.stderr)]);
            }
            let mut tables = vec![rows_table("cutoff.csv", first, &rep.rows)];
            if !rep.profile.is_empty() {
                let mut t = output::Table::new("profile.csv", &["c", "G_lower", "G_upper"]);
                for (c, lo, hi) in &rep.profile {
                    t.push(vec![output::num(*c), output::num(*lo), output::num(*hi)]);
                }
                tables.push(t);
            }
            Ok(Outcome {
                tables,
                plot,
                schedules: rep.schedules.clone(),
                checks: rep.checks.clone(),
                invariants: suites::for_model(&model, &spec, &x0, true),
                extra: json!({ "passed": rep.passed, "max_deviation": rep.max_deviation, "band_width": rep.band_width }),
            })
        }
        Experiment::Superposition { config, eps, c_grid } => {
            let lab = SuperpositionLab::new(config)?;
            let c_grid = c_grid.clone().unwrap_or_else(default_c_grid);
            let triple = superposition_limit_triple(config, eps[0])?;
            let mut profile = output::Table::new("profile.csv", &["c", "G", "stderr", "method", "flags"]);
            let mut plot = output::Table::new("plot.csv", &["c", "G", "stderr"]);
            let mut g = Vec::new();
            for &c in &c_grid {
                let e = lab.profile(c)?;
                let (v, s, m, f) = tv_row(&e);
                profile.push(vec![output::num(c), output::num(v), output::num(s), m, f]);
                plot.push(vec![output::num(c), output::num(v), output::num(s)]);
                g.push(v);
            }
            let mut rows = Vec::new();
            let mut schedules = Vec::new();
            for &e in eps {
                let s = superposition_schedule(config, e)?;
                for &c in &c_grid {
                    rows.push(CurveRow::new(e, c, &lab.distance(e, s.time(c))?));
                }
                schedules.push(s);
            }
            let last = &rows[rows.len() - c_grid.len()..];
            let dev = last.iter().zip(&g).map(|(r, v)| (r.value - v).abs()).fold(0.0, f64::max);
            Ok(Outcome {
                tables: vec![profile, rows_table("distance.csv", "c", &rows)],
                plot,
                schedules,
                checks: vec![
                    CheckLine::at_most("profile_deviation_smallest_eps", dev, 0.02),
                    suites::tv_range(g.into_iter()),
                ],
                invariants: vec![suites::superposition(lab.report())],
                extra: json!({ "report": lab.report(), "limit_triple": triple }),
            })
        }
        Experiment::Average {
            stable,
            gamma,
            x0,
            n,
            eps_n,
            c_grid,
            paths,
        } => {
            let acfg = config::average_config(*stable, *gamma, *x0, *n, *eps_n);
            let sched = average_schedule(&acfg)?;
            let c_grid = c_grid.clone().unwrap_or_else(|| vec![-2.0, 0.0, 2.0]);
            let mut table = output::Table::new(
                "average.csv",
                &["c", "t", "G", "G_stated", "d_density", "d_mc", "d_mc_stderr"],
            );
            let mut plot = output::Table::new("plot.csv", &["c", "G", "stderr"]);
            let mut checks = Vec::new();
            for (k, &c) in c_grid.iter().enumerate() {
                let t = sched.time(c);
                let g = average_profile(&acfg, c)?.value;
                let gs = average_profile_stated(&acfg, c)?.value;
                let dd = average_distance(&acfg, t)?.value;
                let (mc, se) = if *paths > 0 {
                    let e = average_distance_mc(&acfg, t, *paths, cfg.seed.wrapping_add(k as u64))?;
                    checks.push(CheckLine::at_most(format!("mc_vs_profile_c{c}"), (e.value - g).abs(), 0.03f64.max(3.0 * e.stderr)));
                    (output::num(e.value), output::num(e.stderr))
                } else {
                    (String::new(), String::new())
                };
                table.push(vec![
                    output::num(c),
                    output::num(t),
                    output::num(g),
                    output::num(gs),
                    output::num(dd),
                    mc,
                    se.clone(),
                ]);
                plot.push(vec![output::num(c), output::num(g), if se.is_empty() { "0".into() } else { se }]);
            }
            let model = acfg.aggregate()?;
            let spec = acfg.spec()?;
            Ok(Outcome {
                tables: vec![table],
                plot,
                schedules: vec![sched],
                checks,
                invariants: suites::for_model(&model, &spec, &DVector::from_element(1, *x0), *paths > 0),
                extra: json!({ "eps_n": acfg.eps_n, "aggregate_scale": acfg.stable.c * (*n as f64).powf(1.0 - acfg.stable.alpha) }),
            })
        }
        Experiment::ConditionChecks { model, q, r_grid } => {
            let model = model.build()?;
            let spec = config::build_q(q)?;
            let small: Vec<f64> = r_grid.clone().unwrap_or_else(|| (1..=60).map(|j| 10f64.powi(-j)).collect());
            let t0 = 1.0 / spec.min_real();
            let mut reports = vec![
                has_log_moment(&model),
                check_condition_h(&model, &spec, &H_RADII, &|_| t0),
            ];
            if model.dim() == 1 {
                reports.push(check_small_jump_activity(&model, &small, SmallJumpVariant::Kallenberg, 5.0));
                reports.push(check_small_jump_activity(&model, &small, SmallJumpVariant::BK1d, 5.0));
            } else {
                reports.push(check_small_jump_activity(&model, &small, SmallJumpVariant::BKmulti, 5.0));
            }
            reports.push(check_small_jump_activity(&model, &small, SmallJumpVariant::NecessaryBound, 5.0));
            let regime = smoothness_regime(&model, &spec);
            let mut table = output::Table::new("conditions.csv", &["condition", "verdict", "note"]);
            let mut plot = output::Table::new("plot.csv", &["condition", "probe", "value"]);
            for r in &reports {
                let name = format!("{:?}", r.condition);
                table.push(vec![name.clone(), format!("{:?}", r.verdict), r.note.clone()]);
                for ev in &r.evidence {
                    plot.push(vec![name.clone(), output::num(ev.probe[0]), output::num(ev.value)]);
                }
            }
            Ok(Outcome {
                tables: vec![table],
                plot,
                schedules: Vec::new(),
                checks: Vec::new(),
                invariants: suites::for_model(&model, &spec, &DVector::zeros(model.dim()), false),
                extra: json!({ "regime": regime, "reports": reports }),
            })
        }
    }
}

/// Dry run: resolved schedules, regimes, grids and work estimate.
pub fn describe(config_path: &Path, ov: &Overrides) -> Result<String, RunError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let mut cfg = cfg;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let mut out = vec![format!("kind: {}", cfg.kind()), format!("seed: {}", cfg.seed)];
    out.push(format!("out_dir: {}", resolve_out_dir(config_path, &cfg, ov).display()));
    if let Err(e) = cfg.validate() {
        out.push(format!("validation: {e}"));
        return Ok(out.join("\n"));
    }
    let sched_line = |s: &CutoffSchedule| format!("  eps={:e}: t_eps={:.6} w_eps={:.6}", s.eps, s.t_eps, s.w_eps);
    let model_lines = |model: &config::ModelSpec, q: &[Vec<f64>], x0: Option<&[f64]>, eps: &[f64], out: &mut Vec<String>| {
        match (model.build(), config::build_q(q)) {
            (Ok(m), Ok(spec)) => {
                out.push(format!("dimension: {}", m.dim()));
                out.push(format!("regime: {:?}", smoothness_regime(&m, &spec).regime));
                let n = cfg.lattice_n.unwrap_or(if m.dim() == 1 { DEFAULT_N_1D } else { DEFAULT_N_2D });
                out.push(format!("lattice: {n} points per axis"));
                if let Some(x0) = x0 {
                    if let Ok(a) = asymptotic_decomposition(&spec, &config::vector(x0)) {
                        out.push(format!("gamma: {} ell: {} oscillatory: {}", a.gamma, a.ell, a.oscillatory));
                        out.push("schedules:".into());
                        for &e in eps {
                            match cutoff_schedule(a.gamma, a.ell, e) {
                                Ok(s) => out.push(sched_line(&s)),
                                Err(err) => out.push(format!("  eps={e:e}: {err}")),
                            }
                        }
                    }
                }
            }
            (Err(e), _) | (_, Err(e)) => out.push(format!("model: {e}")),
        }
    };
    match &cfg.experiment {
        Experiment::DistanceCurve { model, q, x0, eps, t_grid, .. } => {
            model_lines(model, q, Some(x0), eps, &mut out);
            out.push(format!("work units: {} distances", eps.len() * t_grid.len()));
        }
        Experiment::Profile { model, q, x0, c_grid, .. } => {
            model_lines(model, q, Some(x0), &[], &mut out);
            out.push(format!("work units: {} profile points", c_grid.as_ref().map_or(25, |c| c.len())));
        }
        Experiment::VerifyCutoff { model, q, x0, eps, level } => {
            model_lines(model, q, Some(x0), eps, &mut out);
            let per = if *level == oulcut::cutoff_lab::CutoffLevel::Cutoff { 5 } else { 25 };
            out.push(format!("level: {level:?}"));
            out.push(format!("work units: {} distances", eps.len() * per));
        }
        Experiment::Superposition { config, eps, c_grid } => {
            out.push(format!("blocks: {}", config.blocks.len()));
            out.push("schedules:".into());
            for &e in eps {
                match superposition_schedule(config, e) {
                    Ok(s) => out.push(sched_line(&s)),
                    Err(err) => out.push(format!("  eps={e:e}: {err}")),
                }
            }
            let nc = c_grid.as_ref().map_or(25, |c| c.len());
            out.push(format!("work units: {} profile points, {} distances", nc, nc * eps.len()));
        }
        Experiment::Average {
            stable,
            gamma,
            x0,
            n,
            eps_n,
            c_grid,
            paths,
        } => {
            let a = config::average_config(*stable, *gamma, *x0, *n, *eps_n);
            match average_schedule(&a) {
                Ok(s) => out.push(format!("schedule:\n{}", sched_line(&s))),
                Err(e) => out.push(format!("schedule: {e}")),
            }
            let nc = c_grid.as_ref().map_or(3, |c| c.len());
            out.push(format!("work units: {} profile points, {} sampled paths", nc, nc * paths * 2));
        }
        Experiment::ConditionChecks { model, q, .. } => {
            model_lines(model, q, None, &[], &mut out);
            out.push("work units: 5 condition checks".into());
        }
    }
    Ok(out.join("\n"))
}
