//! Abstract shared-register layer.
//!
//! Three register kinds (read/write, LL/SC, LL/SC-Write) behind a common
//! [`RegisterOps`] trait, with interchangeable backends:
//!
//! * [`SimulatedFile`]: single-threaded, externally driven; every primitive
//!   is one schedulable atomic step. Used by the schedule explorer.
//! * [`NativeFile`]: hardware atomics, safe for concurrent use from real
//!   threads. LL/SC is emulated with a pointer CAS over immutable
//!   `(payload, version)` nodes; retired nodes are reclaimed through
//!   `crossbeam_epoch`.
//! * [`InstrumentedFile`]: wraps either backend and counts accesses per
//!   process and per operation kind.
//!
//! A register stores a [`Payload`] together with a 64-bit version counter.
//! The version increases by exactly one on every successful `SC` and every
//! `Write`, never otherwise, which is what makes the LL/SC emulation exact:
//! an `SC` succeeds iff the version still equals the one observed by the
//! caller's latest `LL`.

mod instrument;
mod native;
mod sim;

pub use instrument::{AccessCounter, InstrumentedFile, OpKind, PrimitiveKind, OP_KINDS, PRIMITIVE_KINDS};
pub use native::NativeFile;
pub use sim::SimulatedFile;

use serde::{Deserialize, Serialize};

/// Identifies one process. Processes are statically numbered `0..n`.
pub type ProcessId = usize;

/// A user value stored in a snapshot component. `⊥` is represented as
/// `Option::None` at the cell level, so every `u64` is a legal value.
pub type Value = u64;

/// Index of a register inside a register file.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct RegisterId(pub u32);

impl RegisterId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// The three register kinds of the model.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RegisterKind {
    /// Plain read/write register.
    Rw,
    /// LL/SC register: `Read`, `LL`, `SC`.
    LlSc,
    /// LL/SC register that additionally supports unconditional `Write`.
    LlScWrite,
}

impl RegisterKind {
    fn supports_write(self) -> bool {
        matches!(self, RegisterKind::Rw | RegisterKind::LlScWrite)
    }

    fn supports_llsc(self) -> bool {
        matches!(self, RegisterKind::LlSc | RegisterKind::LlScWrite)
    }
}

/// Per-component cell: current value, the sequence number it was applied
/// with, and the currently announced (not yet applied) proposal.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
pub struct ComponentCell {
    pub value: Option<Value>,
    pub seq: Option<u64>,
    pub proposed: Option<Value>,
}

/// Saved previous `(value, seq)` pair used by scanners to read past an
/// update that was applied with a too-new sequence number.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
pub struct PreValueCell {
    pub value: Option<Value>,
    pub seq: Option<u64>,
}

/// A scanner's announcement slot: the sequence number its selection rule
/// will use, plus the flag helpers race on.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
pub struct ScanAnnounce {
    pub seq: Option<u64>,
    pub write_enable: bool,
}

/// Fixed-width tagged union of everything a register can hold.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum Payload {
    Int(u64),
    Component(ComponentCell),
    PreValue(PreValueCell),
    Announce(ScanAnnounce),
}

impl Payload {
    pub fn as_int(self) -> u64 {
        match self {
            Payload::Int(v) => v,
            other => panic!("register holds {other:?}, expected Int"),
        }
    }

    pub fn as_component(self) -> ComponentCell {
        match self {
            Payload::Component(c) => c,
            other => panic!("register holds {other:?}, expected Component"),
        }
    }

    pub fn as_pre_value(self) -> PreValueCell {
        match self {
            Payload::PreValue(c) => c,
            other => panic!("register holds {other:?}, expected PreValue"),
        }
    }

    pub fn as_announce(self) -> ScanAnnounce {
        match self {
            Payload::Announce(a) => a,
            other => panic!("register holds {other:?}, expected Announce"),
        }
    }
}

/// Strict `<` on sequence numbers where `⊥` is below every number and not
/// below itself.
#[inline]
pub fn seq_lt(a: Option<u64>, b: Option<u64>) -> bool {
    match (a, b) {
        (None, Some(_)) => true,
        (Some(x), Some(y)) => x < y,
        (_, None) => false,
    }
}

/// Register allocation, shared by all backends. Misallocation is a
/// programming error, so the snapshot constructors take `&mut` access and
/// allocation is not part of [`RegisterOps`].
pub trait RegisterAlloc {
    fn alloc(&mut self, kind: RegisterKind, init: Payload) -> RegisterId;
    /// Totals per kind, in allocation order: `(rw, llsc, llsc_write)`.
    fn space(&self) -> SpaceUsage;
}

/// Allocation totals, used by the space-complexity assertions.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct SpaceUsage {
    pub rw: usize,
    pub llsc: usize,
    pub llsc_write: usize,
}

impl SpaceUsage {
    pub fn total(&self) -> usize {
        self.rw + self.llsc + self.llsc_write
    }
}

/// The four register primitives.
///
/// All calls take the acting process id explicitly so the same algorithm
/// code runs on the externally driven simulated backend and on the native
/// one. Kind violations, unknown ids and `sc` without a live reservation
/// are usage faults and panic.
pub trait RegisterOps {
    /// Atomic read. Never creates or disturbs a reservation.
    fn read(&self, process: ProcessId, register: RegisterId) -> Payload;
    /// Unconditional write; bumps the version (invalidating reservations).
    fn write(&self, process: ProcessId, register: RegisterId, value: Payload);
    /// Load-linked: read and record a reservation for `process`.
    fn ll(&self, process: ProcessId, register: RegisterId) -> Payload;
    /// Store-conditional: succeeds iff the register is unchanged since this
    /// process's latest `ll`. Consumes the reservation either way.
    fn sc(&self, process: ProcessId, register: RegisterId, value: Payload) -> bool;
    /// Observe `(payload, version)` without any step semantics. Test and
    /// monitor plumbing, not part of the register model.
    fn peek(&self, register: RegisterId) -> (Payload, u64);
    /// Tells an instrumenting backend which operation the process is about
    /// to run, for access attribution. No-op on plain backends.
    fn note_op(&self, _process: ProcessId, _op: OpKind) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh() -> (SimulatedFile, RegisterId, RegisterId) {
        let mut f = SimulatedFile::new();
        let rw = f.alloc(RegisterKind::Rw, Payload::Int(0));
        let llsc = f.alloc(RegisterKind::LlSc, Payload::Component(ComponentCell::default()));
        (f, rw, llsc)
    }

    #[test]
    fn read_after_write() {
        let (f, rw, _) = fresh();
        assert_eq!(f.read(0, rw).as_int(), 0);
        f.write(0, rw, Payload::Int(5));
        assert_eq!(f.read(0, rw).as_int(), 5);
        f.write(0, rw, Payload::Int(7));
        f.write(0, rw, Payload::Int(9));
        assert_eq!(f.read(1, rw).as_int(), 9);
    }

    #[test]
    fn fresh_register_reads_initial_value() {
        let (f, _, llsc) = fresh();
        assert_eq!(f.read(0, llsc).as_component(), ComponentCell::default());
        assert_eq!(f.peek(llsc).1, 0);
    }

    #[test]
    fn ll_then_solo_sc_succeeds() {
        let (f, _, llsc) = fresh();
        let c = f.ll(0, llsc).as_component();
        assert_eq!(c, ComponentCell::default());
        let new = ComponentCell { value: Some(4), seq: Some(0), proposed: None };
        assert!(f.sc(0, llsc, Payload::Component(new)));
        assert_eq!(f.read(0, llsc).as_component(), new);
        assert_eq!(f.peek(llsc).1, 1);
    }

    #[test]
    fn intervening_sc_invalidates_reservation() {
        // p1: LL; p2: LL; p2: SC -> true; p1: SC -> false
        let (f, _, r) = fresh();
        f.ll(1, r);
        f.ll(2, r);
        let a = Payload::Component(ComponentCell { value: Some(1), ..Default::default() });
        let b = Payload::Component(ComponentCell { value: Some(2), ..Default::default() });
        assert!(f.sc(2, r, a));
        assert!(!f.sc(1, r, b));
        assert_eq!(f.read(0, r).as_component().value, Some(1));
    }

    #[test]
    fn write_invalidates_reservation_on_llsc_write_register() {
        // p1: LL(R); p2: write(R, 9); p1: SC(R, 7) -> false
        let mut f = SimulatedFile::new();
        let r = f.alloc(RegisterKind::LlScWrite, Payload::Int(0));
        f.ll(1, r);
        f.write(2, r, Payload::Int(9));
        assert!(!f.sc(1, r, Payload::Int(7)));
        assert_eq!(f.read(1, r).as_int(), 9);
    }

    #[test]
    fn ll_replaces_prior_reservation() {
        let (f, _, r) = fresh();
        f.ll(0, r);
        // Another process moves the register forward.
        f.ll(1, r);
        assert!(f.sc(1, r, Payload::Component(ComponentCell { value: Some(9), ..Default::default() })));
        // A second LL by p0 re-links at the new version, so its SC succeeds.
        f.ll(0, r);
        assert!(f.sc(0, r, Payload::Component(ComponentCell { value: Some(3), ..Default::default() })));
    }

    #[test]
    fn ll_matches_plain_read() {
        let (f, _, r) = fresh();
        assert_eq!(f.ll(0, r), f.read(0, r));
    }

    #[test]
    #[should_panic(expected = "no live reservation")]
    fn sc_without_ll_is_usage_fault() {
        let (f, _, r) = fresh();
        let v = Payload::Component(ComponentCell::default());
        f.ll(0, r);
        assert!(f.sc(0, r, v));
        f.sc(0, r, v); // reservation was consumed
    }

    #[test]
    #[should_panic(expected = "does not support Write")]
    fn write_to_plain_llsc_register_is_usage_fault() {
        let (f, _, r) = fresh();
        f.write(0, r, Payload::Component(ComponentCell::default()));
    }

    #[test]
    #[should_panic(expected = "does not support LL")]
    fn ll_on_rw_register_is_usage_fault() {
        let (f, rw, _) = fresh();
        f.ll(0, rw);
    }

    #[test]
    fn seq_lt_orders_bottom_below_everything() {
        assert!(seq_lt(None, Some(0)));
        assert!(seq_lt(Some(1), Some(2)));
        assert!(!seq_lt(Some(2), Some(2)));
        assert!(!seq_lt(Some(3), None));
        assert!(!seq_lt(None, None));
    }
}
