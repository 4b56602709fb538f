//! Access-counting wrapper around a register file.

use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};

use serde::{Deserialize, Serialize};

use super::{Payload, ProcessId, RegisterAlloc, RegisterId, RegisterKind, RegisterOps, SpaceUsage};

/// The primitive that touched shared memory.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Read,
    Write,
    Ll,
    Sc,
}

pub const PRIMITIVE_KINDS: [PrimitiveKind; 4] =
    [PrimitiveKind::Read, PrimitiveKind::Write, PrimitiveKind::Ll, PrimitiveKind::Sc];

/// Operation a process is currently executing, for attribution.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum OpKind {
    Update,
    Scan,
    PartialScan,
    ApplyUpdate,
    Other,
}

pub const OP_KINDS: [OpKind; 5] =
    [OpKind::Update, OpKind::Scan, OpKind::PartialScan, OpKind::ApplyUpdate, OpKind::Other];

impl OpKind {
    pub fn label(self) -> &'static str {
        match self {
            OpKind::Update => "update",
            OpKind::Scan => "scan",
            OpKind::PartialScan => "partial_scan",
            OpKind::ApplyUpdate => "apply_update",
            OpKind::Other => "other",
        }
    }
}

/// Immutable snapshot of the counters: per process, per operation kind,
/// per primitive.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct AccessCounter {
    counts: Vec<[[u64; 4]; 5]>,
}

impl AccessCounter {
    pub fn get(&self, process: ProcessId, op: OpKind, primitive: PrimitiveKind) -> u64 {
        self.counts[process][op as usize][primitive as usize]
    }

    /// Total accesses of one primitive kind by one process, across ops.
    pub fn primitive_total(&self, process: ProcessId, primitive: PrimitiveKind) -> u64 {
        OP_KINDS.iter().map(|op| self.get(process, *op, primitive)).sum()
    }

    /// Total accesses attributed to (process, op).
    pub fn op_total(&self, process: ProcessId, op: OpKind) -> u64 {
        PRIMITIVE_KINDS.iter().map(|p| self.get(process, op, *p)).sum()
    }

    /// Grand total across everything.
    pub fn total(&self) -> u64 {
        (0..self.counts.len())
            .flat_map(|p| PRIMITIVE_KINDS.iter().map(move |k| self.primitive_total(p, *k)))
            .sum()
    }
}

/// Wraps any backend and attributes every access to the acting process's
/// current operation. Set the operation with [`InstrumentedFile::set_op`]
/// at operation entry.
pub struct InstrumentedFile<F> {
    inner: F,
    current_op: Vec<AtomicU8>,
    counts: Vec<[[AtomicU64; 4]; 5]>,
}

impl<F> InstrumentedFile<F> {
    pub fn new(inner: F, processes: usize) -> Self {
        Self {
            inner,
            current_op: (0..processes).map(|_| AtomicU8::new(OpKind::Other as u8)).collect(),
            counts: (0..processes).map(|_| std::array::from_fn(|_| std::array::from_fn(|_| AtomicU64::new(0)))).collect(),
        }
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }

    pub fn set_op(&self, process: ProcessId, op: OpKind) {
        self.current_op[process].store(op as u8, Ordering::Relaxed);
    }

    fn bump(&self, process: ProcessId, primitive: PrimitiveKind) {
        let op = self.current_op[process].load(Ordering::Relaxed) as usize;
        self.counts[process][op][primitive as usize].fetch_add(1, Ordering::Relaxed);
    }

    /// Current counts; pure observation.
    pub fn snapshot_counters(&self) -> AccessCounter {
        AccessCounter {
            counts: self
                .counts
                .iter()
                .map(|per_op| {
                    std::array::from_fn(|o| std::array::from_fn(|p| per_op[o][p].load(Ordering::Relaxed)))
                })
                .collect(),
        }
    }
}

impl<F: RegisterAlloc> RegisterAlloc for InstrumentedFile<F> {
    fn alloc(&mut self, kind: RegisterKind, init: Payload) -> RegisterId {
        self.inner.alloc(kind, init)
    }

    fn space(&self) -> SpaceUsage {
        self.inner.space()
    }
}

impl<F: RegisterOps> RegisterOps for InstrumentedFile<F> {
    fn read(&self, process: ProcessId, register: RegisterId) -> Payload {
        self.bump(process, PrimitiveKind::Read);
        self.inner.read(process, register)
    }

    fn write(&self, process: ProcessId, register: RegisterId, value: Payload) {
        self.bump(process, PrimitiveKind::Write);
        self.inner.write(process, register, value)
    }

    fn ll(&self, process: ProcessId, register: RegisterId) -> Payload {
        self.bump(process, PrimitiveKind::Ll);
        self.inner.ll(process, register)
    }

    fn sc(&self, process: ProcessId, register: RegisterId, value: Payload) -> bool {
        self.bump(process, PrimitiveKind::Sc);
        self.inner.sc(process, register, value)
    }

    fn peek(&self, register: RegisterId) -> (Payload, u64) {
        self.inner.peek(register)
    }

    fn note_op(&self, process: ProcessId, op: OpKind) {
        self.set_op(process, op);
    }
}
