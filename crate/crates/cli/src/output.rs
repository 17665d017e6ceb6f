//! CSV tables, the plot-data file and the versioned manifest.

use std::path::Path;

use oulcut::cutoff_lab::CutoffSchedule;
use oulcut::report::CheckLine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::suites::Suite;
use crate::{ExperimentConfig, Outcome, RunError};

pub const MANIFEST_SCHEMA: &str = "v1";

pub(crate) struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_bytes(&self) -> Result<Vec<u8>, RunError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        let io = |e: csv::Error| RunError::numeric("io", e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| RunError::numeric("io", e.to_string()))
    }
}

/// Shortest round-trip decimal form.
pub(crate) fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
    pub core_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub tool: ToolInfo,
    pub kind: String,
    pub seed: u64,
    pub config: Value,
    pub outputs: Vec<Artifact>,
    pub schedules: Vec<CutoffSchedule>,
    pub checks: Vec<CheckLine>,
    pub invariants: Vec<Suite>,
    /// All checks and invariant suites passed.
    pub passed: bool,
    pub details: Value,
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<String, RunError> {
    std::fs::write(dir.join(name), bytes).map_err(|e| RunError::numeric("io", format!("{name}: {e}")))?;
    Ok(Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub(crate) fn write_all(dir: &Path, cfg: &ExperimentConfig, res: Outcome) -> Result<Manifest, RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::numeric("io", format!("{}: {e}", dir.display())))?;
    let mut outputs = Vec::new();
    for t in res.tables.iter().chain(std::iter::once(&res.plot)) {
        let sha256 = write(dir, &t.name, &t.to_bytes()?)?;
        outputs.push(Artifact {
            file: t.name.clone(),
            rows: t.rows.len(),
            sha256,
        });
    }
    // run-environment fields stay out of the echo so outputs do not depend on them
    let echo = ExperimentConfig {
        workers: None,
        out_dir: None,
        ..cfg.clone()
    };
    let passed = res.checks.iter().all(|c| c.passed) && res.invariants.iter().all(|s| s.passed);
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        tool: ToolInfo {
            name: "oulcut".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: oulcut::VERSION.into(),
        },
        kind: cfg.kind().into(),
        seed: cfg.seed,
        config: serde_json::to_value(&echo).map_err(|e| RunError::numeric("serialize", e.to_string()))?,
        outputs,
        schedules: res.schedules,
        checks: res.checks,
        invariants: res.invariants,
        passed,
        details: res.extra,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::numeric("serialize", e.to_string()))?;
    text.push('\n');
    write(dir, "manifest.json", text.as_bytes())?;
    Ok(manifest)
}
