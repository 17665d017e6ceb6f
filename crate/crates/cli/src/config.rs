//! Experiment config documents.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use oulcut::cutoff_lab::{CutoffLevel, Method};
use oulcut::ensembles::{AverageConfig, SuperpositionConfig};
use oulcut::levy_models::{JumpLaw, JumpPart, LevyModel, ModelDoc, StableParams};
use oulcut::matrix_dynamics::{validate_mplus, DriftSpectrum};
use serde::{Deserialize, Serialize};

use crate::RunError;

/// Compound-Poisson jumps read from a two-column CSV (`point,weight`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpTable {
    pub path: PathBuf,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub doc: ModelDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_table: Option<JumpTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    DistanceCurve {
        model: ModelSpec,
        q: Vec<Vec<f64>>,
        x0: Vec<f64>,
        eps: Vec<f64>,
        t_grid: Vec<f64>,
        #[serde(default = "density")]
        method: Method,
    },
    Profile {
        model: ModelSpec,
        q: Vec<Vec<f64>>,
        x0: Vec<f64>,
        #[serde(default)]
        c_grid: Option<Vec<f64>>,
        #[serde(default = "density")]
        method: Method,
    },
    VerifyCutoff {
        model: ModelSpec,
        q: Vec<Vec<f64>>,
        x0: Vec<f64>,
        eps: Vec<f64>,
        level: CutoffLevel,
    },
    Superposition {
        config: SuperpositionConfig,
        eps: Vec<f64>,
        #[serde(default)]
        c_grid: Option<Vec<f64>>,
    },
    Average {
        stable: StableParams,
        gamma: f64,
        x0: f64,
        n: u64,
        /// Defaults to `1/n`.
        #[serde(default)]
        eps_n: Option<f64>,
        #[serde(default)]
        c_grid: Option<Vec<f64>>,
        /// Monte Carlo paths; zero skips the sampled distances.
        #[serde(default)]
        paths: usize,
    },
    ConditionChecks {
        model: ModelSpec,
        q: Vec<Vec<f64>>,
        #[serde(default)]
        r_grid: Option<Vec<f64>>,
    },
}

fn density() -> Method {
    Method::DensityShift
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice_n: Option<usize>,
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self.experiment {
            Experiment::DistanceCurve { .. } => "distance_curve",
            Experiment::Profile { .. } => "profile",
            Experiment::VerifyCutoff { .. } => "verify_cutoff",
            Experiment::Superposition { .. } => "superposition",
            Experiment::Average { .. } => "average",
            Experiment::ConditionChecks { .. } => "condition_checks",
        }
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::validation("io", format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| RunError::validation("parse", e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |m: &mut ModelSpec| {
            if let Some(t) = &mut m.jump_table {
                if t.path.is_relative() {
                    t.path = base.join(&t.path);
                }
            }
        };
        match &mut self.experiment {
            Experiment::DistanceCurve { model, .. }
            | Experiment::Profile { model, .. }
            | Experiment::VerifyCutoff { model, .. }
            | Experiment::ConditionChecks { model, .. } => fix(model),
            _ => {}
        }
    }

    /// Structural checks that need no numerics.
    pub fn validate(&self) -> Result<(), RunError> {
        let nonempty = |name: &str, v: &[f64]| {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                Err(RunError::validation("invalid_parameter", format!("{name} must be a nonempty list of finite numbers")))
            } else {
                Ok(())
            }
        };
        let eps_ok = |v: &[f64]| {
            nonempty("eps", v)?;
            match v.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                Some(e) => Err(RunError::validation("invalid_parameter", format!("epsilon out of (0,1): {e}"))),
                None => Ok(()),
            }
        };
        if self.workers == Some(0) {
            return Err(RunError::validation("invalid_parameter", "workers must be positive"));
        }
        match &self.experiment {
            Experiment::DistanceCurve { model, eps, t_grid, .. } => {
                model.check_files()?;
                eps_ok(eps)?;
                nonempty("t_grid", t_grid)
            }
            Experiment::Profile { model, c_grid, .. } => {
                model.check_files()?;
                c_grid.as_deref().map_or(Ok(()), |c| nonempty("c_grid", c))
            }
            Experiment::VerifyCutoff { model, eps, .. } => {
                model.check_files()?;
                eps_ok(eps)
            }
            Experiment::Superposition { eps, c_grid, .. } => {
                eps_ok(eps)?;
                c_grid.as_deref().map_or(Ok(()), |c| nonempty("c_grid", c))
            }
            Experiment::Average { eps_n, c_grid, .. } => {
                if let Some(e) = eps_n {
                    eps_ok(&[*e])?;
                }
                c_grid.as_deref().map_or(Ok(()), |c| nonempty("c_grid", c))
            }
            Experiment::ConditionChecks { model, r_grid, .. } => {
                model.check_files()?;
                r_grid.as_deref().map_or(Ok(()), |r| nonempty("r_grid", r))
            }
        }
    }
}

impl ModelSpec {
    fn check_files(&self) -> Result<(), RunError> {
        match &self.jump_table {
            Some(t) if !t.path.is_file() => Err(RunError::validation("io", format!("jump table not found: {}", t.path.display()))),
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<LevyModel, RunError> {
        let mut doc = self.doc.clone();
        if let Some(t) = &self.jump_table {
            let law = load_jump_table(&t.path)?;
            let cp = JumpPart::CompoundPoisson { rate: t.rate, law };
            doc.jumps = match doc.jumps {
                JumpPart::None => cp,
                other => JumpPart::Sum { parts: vec![other, cp] },
            };
        }
        Ok(LevyModel::try_from(&doc)?)
    }
}

/// Reads `point,weight` rows (header optional) into an atomic jump law.
pub fn load_jump_table(path: &Path) -> Result<JumpLaw, RunError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| RunError::validation("io", e.to_string()))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| RunError::validation("parse", e.to_string()))?;
        let parse = |k: usize| rec.get(k).and_then(|s| s.parse::<f64>().ok());
        match (parse(0), parse(1)) {
            (Some(p), Some(w)) => rows.push((p, w)),
            // a non-numeric first row is a header
            _ if i == 0 => continue,
            _ => return Err(RunError::validation("parse", format!("bad jump table row {}", i + 1))),
        }
    }
    Ok(JumpLaw::from_table(&rows)?)
}

pub fn build_q(q: &[Vec<f64>]) -> Result<DriftSpectrum, RunError> {
    let d = q.len();
    if d == 0 || q.iter().any(|r| r.len() != d) {
        return Err(RunError::validation("invalid_parameter", "q must be a nonempty square matrix"));
    }
    Ok(validate_mplus(&DMatrix::from_fn(d, d, |i, j| q[i][j]))?)
}

pub fn vector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub fn average_config(stable: StableParams, gamma: f64, x0: f64, n: u64, eps_n: Option<f64>) -> AverageConfig {
    AverageConfig {
        stable,
        gamma,
        x0,
        n,
        eps_n: eps_n.unwrap_or(1.0 / n.max(1) as f64),
    }
}
