//! Sequential specification of a (partial) snapshot object.
//!
//! This is the reference the linearizability checker replays candidate
//! orders against. States are value-semantic: applying an operation yields
//! a new state, which lets the checker memoize and backtrack cheaply.

use serde::{Deserialize, Serialize};

use crate::shmem::Value;

/// An operation against the sequential object.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqOp {
    Update { component: usize, value: Value },
    Scan,
    PartialScan { components: Vec<usize> },
}

/// What an operation returns. `⊥` entries serialize as `null`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpResult {
    Unit,
    View(Vec<Option<Value>>),
    Entries(Vec<(usize, Option<Value>)>),
}

/// The abstract object: a vector of `m` components, all `⊥` initially.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct OracleState {
    components: Vec<Option<Value>>,
}

impl OracleState {
    pub fn new(m: usize) -> Self {
        Self { components: vec![None; m] }
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Option<Value>] {
        &self.components
    }

    /// New state with component `j` set to `v`.
    pub fn seq_update(&self, j: usize, v: Value) -> Self {
        assert!(j < self.components.len(), "component {j} out of range");
        let mut next = self.clone();
        next.components[j] = Some(v);
        next
    }

    pub fn seq_scan(&self) -> Vec<Option<Value>> {
        self.components.clone()
    }

    /// Values of the components in `a`, in ascending index order.
    pub fn seq_partial_scan(&self, a: &[usize]) -> Vec<(usize, Option<Value>)> {
        let mut targets: Vec<usize> = a.to_vec();
        targets.sort_unstable();
        targets.dedup();
        targets
            .into_iter()
            .map(|j| {
                assert!(j < self.components.len(), "component {j} out of range");
                (j, self.components[j])
            })
            .collect()
    }

    /// Applies one op, returning the successor state and the result.
    pub fn apply(&self, op: &SeqOp) -> (Self, OpResult) {
        match op {
            SeqOp::Update { component, value } => (self.seq_update(*component, *value), OpResult::Unit),
            SeqOp::Scan => (self.clone(), OpResult::View(self.seq_scan())),
            SeqOp::PartialScan { components } => {
                (self.clone(), OpResult::Entries(self.seq_partial_scan(components)))
            }
        }
    }
}
