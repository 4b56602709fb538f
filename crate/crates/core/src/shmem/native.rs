//! Hardware-atomics register file.
//!
//! Every register is an `AtomicPtr` (via `crossbeam_epoch`) to an immutable
//! `(version, payload)` node, so version and payload change together in one
//! CAS. A node can only be reclaimed once no thread is pinned, which rules
//! out ABA: while a reservation's version is re-checked under a pin, a
//! pointer that compares equal is the very node that was observed.

use std::sync::atomic::{AtomicU64, Ordering};

use crossbeam_epoch::{self as epoch, Atomic, Owned};

use super::{Payload, ProcessId, RegisterAlloc, RegisterId, RegisterKind, RegisterOps, SpaceUsage};

const NO_RESERVATION: u64 = u64::MAX;

struct Node {
    version: u64,
    payload: Payload,
}

struct Cell {
    kind: RegisterKind,
    node: Atomic<Node>,
}

/// Register file safe for concurrent use from one thread per process id.
pub struct NativeFile {
    cells: Vec<Cell>,
    /// `reservations[p][r]` is written only by process `p`'s thread.
    reservations: Vec<Vec<AtomicU64>>,
    processes: usize,
    space: SpaceUsage,
}

impl NativeFile {
    /// A file for `processes` statically numbered processes. Registers are
    /// allocated before the file is shared.
    pub fn new(processes: usize) -> Self {
        Self {
            cells: Vec::new(),
            reservations: (0..processes).map(|_| Vec::new()).collect(),
            processes,
            space: SpaceUsage::default(),
        }
    }

    pub fn processes(&self) -> usize {
        self.processes
    }

    fn cell(&self, r: RegisterId) -> &Cell {
        self.cells.get(r.index()).unwrap_or_else(|| panic!("unknown register {r:?}"))
    }

    fn reservation(&self, p: ProcessId, r: RegisterId) -> &AtomicU64 {
        &self.reservations[p][r.index()]
    }
}

impl RegisterAlloc for NativeFile {
    fn alloc(&mut self, kind: RegisterKind, init: Payload) -> RegisterId {
        let id = RegisterId(self.cells.len() as u32);
        self.cells.push(Cell { kind, node: Atomic::new(Node { version: 0, payload: init }) });
        for row in &mut self.reservations {
            row.push(AtomicU64::new(NO_RESERVATION));
        }
        match kind {
            RegisterKind::Rw => self.space.rw += 1,
            RegisterKind::LlSc => self.space.llsc += 1,
            RegisterKind::LlScWrite => self.space.llsc_write += 1,
        }
        id
    }

    fn space(&self) -> SpaceUsage {
        self.space
    }
}

impl RegisterOps for NativeFile {
    fn read(&self, _process: ProcessId, register: RegisterId) -> Payload {
        let cell = self.cell(register);
        let guard = epoch::pin();
        let node = unsafe { cell.node.load(Ordering::SeqCst, &guard).deref() };
        node.payload
    }

    fn write(&self, _process: ProcessId, register: RegisterId, value: Payload) {
        let cell = self.cell(register);
        assert!(cell.kind.supports_write(), "register {register:?} ({:?}) does not support Write", cell.kind);
        let guard = epoch::pin();
        let mut new = Owned::new(Node { version: 0, payload: value });
        loop {
            let current = cell.node.load(Ordering::SeqCst, &guard);
            new.version = unsafe { current.deref() }.version + 1;
            match cell.node.compare_exchange(current, new, Ordering::SeqCst, Ordering::SeqCst, &guard) {
                Ok(_) => {
                    unsafe { guard.defer_destroy(current) };
                    return;
                }
                Err(err) => new = err.new,
            }
        }
    }

    fn ll(&self, process: ProcessId, register: RegisterId) -> Payload {
        let cell = self.cell(register);
        assert!(cell.kind.supports_llsc(), "register {register:?} ({:?}) does not support LL", cell.kind);
        let guard = epoch::pin();
        let node = unsafe { cell.node.load(Ordering::SeqCst, &guard).deref() };
        self.reservation(process, register).store(node.version, Ordering::Relaxed);
        node.payload
    }

    fn sc(&self, process: ProcessId, register: RegisterId, value: Payload) -> bool {
        let observed = self.reservation(process, register).swap(NO_RESERVATION, Ordering::Relaxed);
        assert!(
            observed != NO_RESERVATION,
            "sc by process {process} on {register:?} with no live reservation"
        );
        let cell = self.cell(register);
        assert!(cell.kind.supports_llsc(), "register {register:?} ({:?}) does not support SC", cell.kind);
        let guard = epoch::pin();
        let current = cell.node.load(Ordering::SeqCst, &guard);
        if unsafe { current.deref() }.version != observed {
            return false;
        }
        let new = Owned::new(Node { version: observed + 1, payload: value });
        match cell.node.compare_exchange(current, new, Ordering::SeqCst, Ordering::SeqCst, &guard) {
            Ok(_) => {
                unsafe { guard.defer_destroy(current) };
                true
            }
            // The pointer moved, so the version moved: a genuine failure,
            // never a spurious one.
            Err(_) => false,
        }
    }

    fn peek(&self, register: RegisterId) -> (Payload, u64) {
        let cell = self.cell(register);
        let guard = epoch::pin();
        let node = unsafe { cell.node.load(Ordering::SeqCst, &guard).deref() };
        (node.payload, node.version)
    }
}

impl Drop for NativeFile {
    fn drop(&mut self) {
        for cell in &self.cells {
            let ptr = cell.node.swap(epoch::Shared::null(), Ordering::SeqCst, unsafe { epoch::unprotected() });
            if !ptr.is_null() {
                drop(unsafe { ptr.into_owned() });
            }
        }
    }
}
