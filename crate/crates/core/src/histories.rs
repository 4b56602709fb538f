//! Concurrent-history recording, serialization and linearizability checking.
//!
//! A history is a stamped sequence of invoke/response events. Stamps come
//! from one counter bumped at the operation API boundary (immediately on
//! entry, immediately before return), which defines the real-time order
//! without wall clocks.
//!
//! The checker asks whether some total order of the operations (a) extends
//! the real-time precedence order (`op` precedes `op'` when `op`'s response
//! stamp is below `op'`'s invoke stamp) and (b) replays on the sequential
//! oracle to every recorded result. The search is exact: candidates are
//! tried depth-first with memoization on (linearized set, oracle state).
//! Pending updates may be linearized or dropped; pending scans are dropped,
//! the standard completion rule.
//!
//! File format: one event per line as a JSON record with fields
//! `{stamp, kind, op, process, args, result}`; `⊥` is spelled `null`;
//! stamps ascend.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{OpResult, OracleState, SeqOp};
use crate::shmem::{ProcessId, Value};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Invoke,
    Response,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpLabel {
    Update,
    Scan,
    PartialScan,
}

impl OpLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            OpLabel::Update => "update",
            OpLabel::Scan => "scan",
            OpLabel::PartialScan => "partial_scan",
        }
    }
}

/// Invoke arguments. Updates carry `(component, value)`; partial scans the
/// component set; scans nothing.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OpArgs {
    Update { component: usize, value: Value },
    Partial { components: Vec<usize> },
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub stamp: u64,
    pub kind: EventKind,
    pub op: OpLabel,
    pub process: ProcessId,
    pub args: Option<OpArgs>,
    pub result: Option<OpResult>,
}

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A validated event sequence. Append through [`History::record_invoke`]
/// and [`History::record_response`]; malformed appends are usage faults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    events: Vec<HistoryEvent>,
    pending: BTreeMap<ProcessId, usize>,
    next_stamp: u64,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[HistoryEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Operations with a pending (unresponded) invoke.
    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    fn take_stamp(&mut self) -> u64 {
        self.next_stamp += 1;
        self.next_stamp
    }

    pub fn record_invoke(&mut self, process: ProcessId, op: OpLabel, args: Option<OpArgs>) -> u64 {
        assert!(
            !self.pending.contains_key(&process),
            "process {process} already has an operation in flight"
        );
        match (op, &args) {
            (OpLabel::Update, Some(OpArgs::Update { .. })) => {}
            (OpLabel::Scan, None) => {}
            (OpLabel::PartialScan, Some(OpArgs::Partial { .. })) => {}
            (op, args) => panic!("invoke of {op:?} with mismatched args {args:?}"),
        }
        let stamp = self.take_stamp();
        self.pending.insert(process, self.events.len());
        self.events.push(HistoryEvent { stamp, kind: EventKind::Invoke, op, process, args, result: None });
        stamp
    }

    pub fn record_response(&mut self, process: ProcessId, result: OpResult) -> u64 {
        let invoke_idx = self
            .pending
            .remove(&process)
            .unwrap_or_else(|| panic!("response by process {process} without a pending invoke"));
        let op = self.events[invoke_idx].op;
        match (op, &result) {
            (OpLabel::Update, OpResult::Unit) => {}
            (OpLabel::Scan, OpResult::View(_)) => {}
            (OpLabel::PartialScan, OpResult::Entries(_)) => {}
            (op, result) => panic!("response of {op:?} with mismatched result {result:?}"),
        }
        let stamp = self.take_stamp();
        self.events.push(HistoryEvent {
            stamp,
            kind: EventKind::Response,
            op,
            process,
            args: None,
            result: Some(result),
        });
        stamp
    }

    /// Rebuilds a history from raw events, validating the event rules.
    /// `line_base` offsets the line numbers in errors (1 for files).
    fn from_events(events: Vec<HistoryEvent>, line_base: usize) -> Result<Self, HistoryError> {
        let mut pending: BTreeMap<ProcessId, usize> = BTreeMap::new();
        let mut last_stamp = 0u64;
        for (i, ev) in events.iter().enumerate() {
            let line = line_base + i;
            let fail = |reason: String| HistoryError::Malformed { line, reason };
            if ev.stamp <= last_stamp {
                return Err(fail(format!("stamp {} not ascending", ev.stamp)));
            }
            last_stamp = ev.stamp;
            match ev.kind {
                EventKind::Invoke => {
                    if pending.insert(ev.process, i).is_some() {
                        return Err(fail(format!("process {} already has a pending operation", ev.process)));
                    }
                    let ok = matches!(
                        (ev.op, &ev.args),
                        (OpLabel::Update, Some(OpArgs::Update { .. }))
                            | (OpLabel::Scan, None)
                            | (OpLabel::PartialScan, Some(OpArgs::Partial { .. }))
                    );
                    if !ok || ev.result.is_some() {
                        return Err(fail("invoke with mismatched args/result".into()));
                    }
                }
                EventKind::Response => {
                    let invoke_idx = pending
                        .remove(&ev.process)
                        .ok_or_else(|| fail(format!("response by process {} without invoke", ev.process)))?;
                    if events[invoke_idx].op != ev.op {
                        return Err(fail("response op differs from pending invoke".into()));
                    }
                    let ok = matches!(
                        (ev.op, &ev.result),
                        (OpLabel::Update, Some(OpResult::Unit))
                            | (OpLabel::Scan, Some(OpResult::View(_)))
                            | (OpLabel::PartialScan, Some(OpResult::Entries(_)))
                    );
                    if !ok || ev.args.is_some() {
                        return Err(fail("response with mismatched result/args".into()));
                    }
                }
            }
        }
        Ok(Self { pending, next_stamp: last_stamp, events })
    }

    /// Serializes as one JSON record per line.
    pub fn save<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut w, ev)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_path<P: AsRef<Path>>(&self, path: P) -> std::io::Result<()> {
        self.save(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Parses the line format; errors carry the 1-based line number.
    pub fn load<R: BufRead>(r: R) -> Result<Self, HistoryError> {
        let mut events = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ev: HistoryEvent =
                serde_json::from_str(&line).map_err(|source| HistoryError::Parse { line: line_no, source })?;
            events.push(ev);
        }
        Self::from_events(events, 1)
    }

    pub fn load_path<P: AsRef<Path>>(path: P) -> Result<Self, HistoryError> {
        Self::load(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl Serialize for History {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.events.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for History {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let events = Vec::<HistoryEvent>::deserialize(deserializer)?;
        History::from_events(events, 0).map_err(serde::de::Error::custom)
    }
}

/// Thread-safe event sink for the native backend.
#[derive(Debug, Default)]
pub struct SharedRecorder {
    inner: Mutex<History>,
}

impl SharedRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn invoke(&self, process: ProcessId, op: OpLabel, args: Option<OpArgs>) {
        self.inner.lock().unwrap().record_invoke(process, op, args);
    }

    pub fn response(&self, process: ProcessId, result: OpResult) {
        self.inner.lock().unwrap().record_response(process, result);
    }

    pub fn snapshot(&self) -> History {
        self.inner.lock().unwrap().clone()
    }
}

/// Outcome of a linearizability check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub linearizable: bool,
    /// Operation ids (invoke order) in a valid linearization, if one exists.
    pub witness: Option<Vec<usize>>,
    /// Minimal failing prefix of the history, if none exists.
    pub counterexample: Option<History>,
}

/// One operation extracted from a history.
#[derive(Clone, Debug)]
pub struct OpRecord {
    pub id: usize,
    pub process: ProcessId,
    pub op: SeqOp,
    /// Recorded result; `None` for a pending update (free to include or
    /// exclude).
    pub expected: Option<OpResult>,
    pub invoke: u64,
    pub response: Option<u64>,
}

/// Extracts checkable operations plus a component count large enough to
/// replay them: pending scans are dropped, pending updates stay optional.
pub fn completed_ops(history: &History) -> (Vec<OpRecord>, usize) {
    let mut m = 1usize;
    let mut open: BTreeMap<ProcessId, OpRecord> = BTreeMap::new();
    let mut ops: Vec<OpRecord> = Vec::new();
    for ev in history.events() {
        match ev.kind {
            EventKind::Invoke => {
                let op = match (&ev.op, &ev.args) {
                    (OpLabel::Update, Some(OpArgs::Update { component, value })) => {
                        m = m.max(component + 1);
                        SeqOp::Update { component: *component, value: *value }
                    }
                    (OpLabel::Scan, None) => SeqOp::Scan,
                    (OpLabel::PartialScan, Some(OpArgs::Partial { components })) => {
                        for &j in components {
                            m = m.max(j + 1);
                        }
                        SeqOp::PartialScan { components: components.clone() }
                    }
                    _ => unreachable!("validated on record"),
                };
                open.insert(
                    ev.process,
                    OpRecord { id: 0, process: ev.process, op, expected: None, invoke: ev.stamp, response: None },
                );
            }
            EventKind::Response => {
                let mut rec = open.remove(&ev.process).expect("validated on record");
                if let Some(OpResult::View(view)) = &ev.result {
                    m = m.max(view.len());
                }
                rec.expected = ev.result.clone();
                rec.response = Some(ev.stamp);
                ops.push(rec);
            }
        }
    }
    // Completion rule: pending updates may be linearized or not; pending
    // reads are dropped.
    for (_, rec) in open {
        if matches!(rec.op, SeqOp::Update { .. }) {
            ops.push(rec);
        }
    }
    ops.sort_by_key(|r| r.invoke);
    for (id, rec) in ops.iter_mut().enumerate() {
        rec.id = id;
    }
    (ops, m)
}

/// Exact Wing–Gong-style search with memoization on
/// (linearized set, oracle state).
fn search(ops: &[OpRecord], m: usize) -> Option<Vec<usize>> {
    assert!(ops.len() <= 128, "checker supports at most 128 operations");
    let required: u128 = ops
        .iter()
        .filter(|o| o.response.is_some())
        .fold(0u128, |acc, o| acc | (1u128 << o.id));
    let mut memo: HashSet<(u128, Vec<Option<Value>>)> = HashSet::new();
    let mut path = Vec::new();
    let init = OracleState::new(m);
    if dfs(ops, required, 0, &init, &mut memo, &mut path) {
        Some(path)
    } else {
        None
    }
}

fn dfs(
    ops: &[OpRecord],
    required: u128,
    done: u128,
    oracle: &OracleState,
    memo: &mut HashSet<(u128, Vec<Option<Value>>)>,
    path: &mut Vec<usize>,
) -> bool {
    if done & required == required {
        return true;
    }
    if !memo.insert((done, oracle.components().to_vec())) {
        return false;
    }
    // An op can linearize next iff no other remaining op responded before
    // it was invoked. Compute the two smallest remaining response stamps so
    // each candidate can be tested against the minimum over the others.
    let (mut min1, mut min1_id, mut min2) = (u64::MAX, usize::MAX, u64::MAX);
    for o in ops.iter().filter(|o| done & (1u128 << o.id) == 0) {
        if let Some(r) = o.response {
            if r < min1 {
                min2 = min1;
                min1 = r;
                min1_id = o.id;
            } else if r < min2 {
                min2 = r;
            }
        }
    }
    for o in ops.iter().filter(|o| done & (1u128 << o.id) == 0) {
        let limit = if o.id == min1_id { min2 } else { min1 };
        if o.invoke > limit {
            continue;
        }
        let (next_state, ret) = oracle.apply(&o.op);
        if let Some(expected) = &o.expected {
            if ret != *expected {
                continue;
            }
        }
        path.push(o.id);
        if dfs(ops, required, done | (1u128 << o.id), &next_state, memo, path) {
            return true;
        }
        path.pop();
    }
    false
}

/// Independent re-validation of a witness: real-time order respected,
/// every completed op present, oracle replay reproduces every result.
pub fn verify_witness(ops: &[OpRecord], witness: &[usize], m: usize) -> bool {
    let mut seen = vec![false; ops.len()];
    for &id in witness {
        if id >= ops.len() || seen[id] {
            return false;
        }
        seen[id] = true;
    }
    if ops.iter().any(|o| o.response.is_some() && !seen[o.id]) {
        return false;
    }
    for (i, &a) in witness.iter().enumerate() {
        for &b in &witness[i + 1..] {
            if let Some(resp_b) = ops[b].response {
                if resp_b < ops[a].invoke {
                    return false;
                }
            }
        }
    }
    let mut state = OracleState::new(m);
    for &id in witness {
        let (next, ret) = state.apply(&ops[id].op);
        if let Some(expected) = &ops[id].expected {
            if ret != *expected {
                return false;
            }
        }
        state = next;
    }
    true
}

/// Linearizability check. Exact; deterministic for a given history.
pub fn check(history: &History) -> Verdict {
    let (ops, m) = completed_ops(history);
    match search(&ops, m) {
        Some(witness) => {
            assert!(verify_witness(&ops, &witness, m), "witness failed independent replay");
            Verdict { linearizable: true, witness: Some(witness), counterexample: None }
        }
        None => {
            let counterexample = minimal_failing_prefix(history);
            Verdict { linearizable: false, witness: None, counterexample: Some(counterexample) }
        }
    }
}

/// Shortest event prefix that already fails the check.
fn minimal_failing_prefix(history: &History) -> History {
    for k in 1..=history.events().len() {
        let prefix = History::from_events(history.events()[..k].to_vec(), 0)
            .expect("prefix of a valid history is valid");
        let (ops, m) = completed_ops(&prefix);
        if search(&ops, m).is_none() {
            return prefix;
        }
    }
    unreachable!("full history was found non-linearizable")
}
