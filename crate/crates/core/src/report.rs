use serde::{Deserialize, Serialize};

/// Which analytic condition a report speaks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionName {
    LogMoment,
    OreyMasuda,
    Kallenberg,
    BodnarchukKulyk1d,
    BodnarchukKulykMultiD,
    NecessaryBound,
    HypothesisH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    PassNumeric,
    FailNumeric,
    Inconclusive,
}

/// One probe of a numeric check: where it was evaluated and what came out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub probe: Vec<f64>,
    pub value: f64,
}

impl Evidence {
    pub fn scalar(probe: f64, value: f64) -> Self {
        Self {
            probe: vec![probe],
            value,
        }
    }
}

/// Numeric evidence at probe scale for an asymptotic condition. Never a proof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: ConditionName,
    pub verdict: Verdict,
    pub evidence: Vec<Evidence>,
    pub note: String,
}

impl ConditionReport {
    pub fn new(condition: ConditionName, verdict: Verdict, evidence: Vec<Evidence>, note: impl Into<String>) -> Self {
        Self {
            condition,
            verdict,
            evidence,
            note: note.into(),
        }
    }

    pub fn inconclusive(condition: ConditionName, note: impl Into<String>) -> Self {
        Self::new(condition, Verdict::Inconclusive, Vec::new(), note)
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::PassNumeric
    }
}

/// Generic pass/fail line used by the property and verification reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

impl CheckLine {
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured <= tolerance,
            measured,
            tolerance,
        }
    }
}
