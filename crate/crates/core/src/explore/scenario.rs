//! Scenario descriptions: which object, its configuration, and one
//! operation script per process.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shmem::{ProcessId, Value};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Snap1,
    Lsnap,
}

impl ObjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Snap1 => "snap1",
            ObjectKind::Lsnap => "lsnap",
        }
    }
}

/// One scripted operation.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptOp {
    Update { component: usize, value: Value },
    Scan,
    PartialScan { components: Vec<usize> },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A finite workload: `scripts[p]` is the operation sequence process `p`
/// runs to completion. The process count is `scripts.len()`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub object: ObjectKind,
    pub m: usize,
    /// Scanner process ids; for `lsnap` the position in this list is the
    /// scanner's rank and its length is lambda. For `snap1` exactly one id.
    pub scanners: Vec<ProcessId>,
    pub scripts: Vec<Vec<ScriptOp>>,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.scripts.len()
    }

    pub fn lambda(&self) -> usize {
        self.scanners.len()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.m < 1 {
            return fail("m must be at least 1".into());
        }
        let n = self.n();
        if n < 1 {
            return fail("need at least one process script".into());
        }
        if self.scanners.is_empty() {
            return fail("need at least one scanner id".into());
        }
        if self.object == ObjectKind::Snap1 && self.scanners.len() != 1 {
            return fail(format!("snap1 has exactly one scanner, got {}", self.scanners.len()));
        }
        let mut sorted = self.scanners.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.scanners.len() {
            return fail("scanner ids must be distinct".into());
        }
        for &s in &self.scanners {
            if s >= n {
                return fail(format!("scanner id {s} out of range for {n} processes"));
            }
        }
        for (p, script) in self.scripts.iter().enumerate() {
            for op in script {
                match op {
                    ScriptOp::Update { component, .. } => {
                        if *component >= self.m {
                            return fail(format!("process {p}: component {component} out of range"));
                        }
                    }
                    ScriptOp::Scan => {
                        if !self.scanners.contains(&p) {
                            return fail(format!("process {p} is not a scanner but scripts a scan"));
                        }
                    }
                    ScriptOp::PartialScan { components } => {
                        if !self.scanners.contains(&p) {
                            return fail(format!("process {p} is not a scanner but scripts a partial_scan"));
                        }
                        for &j in components {
                            if j >= self.m {
                                return fail(format!("process {p}: component {j} out of range"));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// True when no two updates share a value; enables the direct freshness
    /// check during exploration.
    pub fn has_distinct_update_values(&self) -> bool {
        let mut values: Vec<Value> = self
            .scripts
            .iter()
            .flatten()
            .filter_map(|op| match op {
                ScriptOp::Update { value, .. } => Some(*value),
                _ => None,
            })
            .collect();
        let before = values.len();
        values.sort_unstable();
        values.dedup();
        values.len() == before
    }

    pub fn total_ops(&self) -> usize {
        self.scripts.iter().map(|s| s.len()).sum()
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load_path<P: AsRef<Path>>(path: P) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}
