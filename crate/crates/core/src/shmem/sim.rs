//! Single-threaded simulated register file.
//!
//! The whole file is a plain value: cloning it snapshots every register and
//! every live reservation, which is what lets the explorer fork a world at
//! each scheduling choice.

use std::cell::RefCell;
use std::collections::BTreeMap;

use super::{Payload, ProcessId, RegisterAlloc, RegisterId, RegisterKind, RegisterOps, SpaceUsage};

#[derive(Clone, Debug)]
struct Cell {
    kind: RegisterKind,
    payload: Payload,
    version: u64,
}

#[derive(Clone, Debug, Default)]
struct Inner {
    cells: Vec<Cell>,
    /// Live reservations: (process, register) -> observed version.
    reservations: BTreeMap<(ProcessId, u32), u64>,
    space: SpaceUsage,
}

/// Deterministic register file driven one primitive at a time.
#[derive(Clone, Debug, Default)]
pub struct SimulatedFile {
    inner: RefCell<Inner>,
}

impl SimulatedFile {
    pub fn new() -> Self {
        Self::default()
    }

    fn with<R>(&self, f: impl FnOnce(&mut Inner) -> R) -> R {
        f(&mut self.inner.borrow_mut())
    }
}

impl Inner {
    fn cell(&self, r: RegisterId) -> &Cell {
        self.cells.get(r.index()).unwrap_or_else(|| panic!("unknown register {r:?}"))
    }

    fn cell_mut(&mut self, r: RegisterId) -> &mut Cell {
        self.cells.get_mut(r.index()).unwrap_or_else(|| panic!("unknown register {r:?}"))
    }
}

impl RegisterAlloc for SimulatedFile {
    fn alloc(&mut self, kind: RegisterKind, init: Payload) -> RegisterId {
        let inner = self.inner.get_mut();
        let id = RegisterId(inner.cells.len() as u32);
        inner.cells.push(Cell { kind, payload: init, version: 0 });
        match kind {
            RegisterKind::Rw => inner.space.rw += 1,
            RegisterKind::LlSc => inner.space.llsc += 1,
            RegisterKind::LlScWrite => inner.space.llsc_write += 1,
        }
        id
    }

    fn space(&self) -> SpaceUsage {
        self.inner.borrow().space
    }
}

impl RegisterOps for SimulatedFile {
    fn read(&self, _process: ProcessId, register: RegisterId) -> Payload {
        self.with(|inner| inner.cell(register).payload)
    }

    fn write(&self, _process: ProcessId, register: RegisterId, value: Payload) {
        self.with(|inner| {
            let cell = inner.cell_mut(register);
            assert!(cell.kind.supports_write(), "register {register:?} ({:?}) does not support Write", cell.kind);
            cell.payload = value;
            cell.version += 1;
        })
    }

    fn ll(&self, process: ProcessId, register: RegisterId) -> Payload {
        self.with(|inner| {
            let cell = inner.cell(register);
            assert!(cell.kind.supports_llsc(), "register {register:?} ({:?}) does not support LL", cell.kind);
            let (payload, version) = (cell.payload, cell.version);
            inner.reservations.insert((process, register.0), version);
            payload
        })
    }

    fn sc(&self, process: ProcessId, register: RegisterId, value: Payload) -> bool {
        self.with(|inner| {
            let observed = inner
                .reservations
                .remove(&(process, register.0))
                .unwrap_or_else(|| panic!("sc by process {process} on {register:?} with no live reservation"));
            let cell = inner.cell_mut(register);
            assert!(cell.kind.supports_llsc(), "register {register:?} ({:?}) does not support SC", cell.kind);
            if cell.version == observed {
                cell.payload = value;
                cell.version += 1;
                true
            } else {
                false
            }
        })
    }

    fn peek(&self, register: RegisterId) -> (Payload, u64) {
        self.with(|inner| {
            let cell = inner.cell(register);
            (cell.payload, cell.version)
        })
    }
}
