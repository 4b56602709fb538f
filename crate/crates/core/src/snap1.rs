//! Single-scanner snapshot object.
//!
//! `m` components; any process may `update`, one designated process may
//! `scan` (or `partial_scan`). The object keeps, per component, the current
//! value plus an announced-but-unapplied proposal, and a saved previous
//! `(value, seq)` pair that scans fall back to when the component was
//! overwritten with a too-new sequence number. Announcing and applying are
//! separated so that any process can finish a stalled update (helping).
//!
//! Registers: `2m` LL/SC (`values`, `pre_values`) plus one RW register for
//! the scan sequence counter; a plain RW register suffices because exactly
//! one process ever increments it.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::machine::{Effect, Machine, MachineStep, OpOutput, Reply, Subroutine, UpdateMachine};
use crate::machine::run_op;
use crate::shmem::{
    ComponentCell, OpKind, Payload, PreValueCell, ProcessId, RegisterAlloc, RegisterId,
    RegisterKind, RegisterOps, SpaceUsage, Value,
};
use crate::shmem::seq_lt;

/// Static configuration of a single-scanner snapshot.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SnapConfig {
    pub m: usize,
    pub n: usize,
    pub scanner: ProcessId,
}

impl SnapConfig {
    pub fn new(m: usize, n: usize, scanner: ProcessId) -> Self {
        assert!(m >= 1, "need at least one component");
        assert!(n >= 1, "need at least one process");
        assert!(scanner < n, "scanner id {scanner} out of range for {n} processes");
        Self { m, n, scanner }
    }
}

/// Register ids of one object instance.
#[derive(Clone, Debug)]
pub struct Snap1Layout {
    pub m: usize,
    pub seq: RegisterId,
    pub values: Vec<RegisterId>,
    pub pre_values: Vec<RegisterId>,
}

impl Snap1Layout {
    /// Allocates `2m` LL/SC registers and one RW register.
    pub fn allocate(alloc: &mut impl RegisterAlloc, m: usize) -> Self {
        assert!(m >= 1);
        let seq = alloc.alloc(RegisterKind::Rw, Payload::Int(0));
        let values = (0..m)
            .map(|_| alloc.alloc(RegisterKind::LlSc, Payload::Component(ComponentCell::default())))
            .collect();
        let pre_values = (0..m)
            .map(|_| alloc.alloc(RegisterKind::LlSc, Payload::PreValue(PreValueCell::default())))
            .collect();
        Self { m, seq, values, pre_values }
    }

    /// What `allocate` consumes, for space accounting.
    pub fn expected_space(m: usize) -> SpaceUsage {
        SpaceUsage { rw: 1, llsc: 2 * m, llsc_write: 0 }
    }

    fn check_component(&self, j: usize) {
        assert!(j < self.m, "component index {j} out of range for m={}", self.m);
    }
}

/// Copy-then-apply helper: saves the component's current `(value, seq)` to
/// `pre_values` (twice) when it is older than the global sequence number,
/// then applies a pending proposal if one was visible.
#[derive(Clone, Debug)]
pub struct ApplyUpdateMachine {
    seq: RegisterId,
    values_j: RegisterId,
    pre_j: RegisterId,
    cur: ComponentCell,
    cur_seq: u64,
    t: u8,
    pc: ApplyPc,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ApplyPc {
    Start,
    AwaitLl,
    AwaitSeq,
    AwaitPreLl,
    AwaitValuesRead,
    AwaitGuardSeq,
    AwaitPreSc,
    AwaitApplySc,
    Finished,
}

impl ApplyUpdateMachine {
    pub fn new(layout: &Snap1Layout, j: usize) -> Self {
        layout.check_component(j);
        Self {
            seq: layout.seq,
            values_j: layout.values[j],
            pre_j: layout.pre_values[j],
            cur: ComponentCell::default(),
            cur_seq: 0,
            t: 0,
            pc: ApplyPc::Start,
        }
    }

    fn after_copy_iteration(&mut self) -> MachineStep {
        self.t += 1;
        if self.t < 2 {
            self.pc = ApplyPc::AwaitPreLl;
            MachineStep::Access(Effect::Ll(self.pre_j))
        } else if self.cur.proposed.is_some() {
            let applied = ComponentCell {
                value: self.cur.proposed,
                seq: Some(self.cur_seq),
                proposed: None,
            };
            self.pc = ApplyPc::AwaitApplySc;
            MachineStep::Access(Effect::Sc(self.values_j, Payload::Component(applied)))
        } else {
            self.pc = ApplyPc::Finished;
            MachineStep::Done(OpOutput::Unit)
        }
    }
}

impl Machine for ApplyUpdateMachine {
    fn next(&mut self, reply: Option<Reply>) -> MachineStep {
        let reply = move || reply.expect("reply for pending access");
        match self.pc {
            ApplyPc::Start => {
                self.pc = ApplyPc::AwaitLl;
                MachineStep::Access(Effect::Ll(self.values_j))
            }
            ApplyPc::AwaitLl => {
                self.cur = match reply() {
                    Reply::Payload(p) => p.as_component(),
                    other => panic!("unexpected reply {other:?}"),
                };
                self.pc = ApplyPc::AwaitSeq;
                MachineStep::Access(Effect::Read(self.seq))
            }
            ApplyPc::AwaitSeq => {
                self.cur_seq = match reply() {
                    Reply::Payload(p) => p.as_int(),
                    other => panic!("unexpected reply {other:?}"),
                };
                self.t = 0;
                self.pc = ApplyPc::AwaitPreLl;
                MachineStep::Access(Effect::Ll(self.pre_j))
            }
            ApplyPc::AwaitPreLl => {
                // The LL'd pre-value itself is unused; only the reservation
                // matters for the SC below.
                let _ = reply();
                self.pc = ApplyPc::AwaitValuesRead;
                MachineStep::Access(Effect::Read(self.values_j))
            }
            ApplyPc::AwaitValuesRead => {
                self.cur = match reply() {
                    Reply::Payload(p) => p.as_component(),
                    other => panic!("unexpected reply {other:?}"),
                };
                self.pc = ApplyPc::AwaitGuardSeq;
                MachineStep::Access(Effect::Read(self.seq))
            }
            ApplyPc::AwaitGuardSeq => {
                let fresh = match reply() {
                    Reply::Payload(p) => p.as_int(),
                    other => panic!("unexpected reply {other:?}"),
                };
                if seq_lt(self.cur.seq, Some(fresh)) {
                    let copy = PreValueCell { value: self.cur.value, seq: self.cur.seq };
                    self.pc = ApplyPc::AwaitPreSc;
                    MachineStep::Access(Effect::Sc(self.pre_j, Payload::PreValue(copy)))
                } else {
                    self.after_copy_iteration()
                }
            }
            ApplyPc::AwaitPreSc => {
                let _ = reply(); // outcome irrelevant: somebody saved a copy
                self.after_copy_iteration()
            }
            ApplyPc::AwaitApplySc => {
                let _ = reply(); // failure means someone else applied it
                self.pc = ApplyPc::Finished;
                MachineStep::Done(OpOutput::Unit)
            }
            ApplyPc::Finished => panic!("machine already finished"),
        }
    }
}

impl Subroutine for ApplyUpdateMachine {
    fn restart(&mut self) {
        self.pc = ApplyPc::Start;
        self.t = 0;
    }
}

/// Update operation: the shared announce loop over this object's helper.
pub type UpdateOp = UpdateMachine<ApplyUpdateMachine>;

pub fn update_machine(layout: &Snap1Layout, j: usize, value: Value) -> UpdateOp {
    layout.check_component(j);
    UpdateMachine::new(layout.values[j], value, ApplyUpdateMachine::new(layout, j))
}

/// Full scan: bump the sequence counter, then per component help, read the
/// component and its saved copy, and keep whichever is old enough.
#[derive(Clone, Debug)]
pub struct ScanMachine {
    layout: Arc<Snap1Layout>,
    targets: Vec<usize>,
    partial: bool,
    idx: usize,
    my_seq: u64,
    view: Vec<(usize, Option<Value>)>,
    v1: ComponentCell,
    apply: Option<ApplyUpdateMachine>,
    pc: ScanPc,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ScanPc {
    Start,
    AwaitSeqRead,
    AwaitSeqWrite,
    InApply,
    AwaitV1,
    AwaitV2,
    Finished,
}

impl ScanMachine {
    pub fn full(layout: Arc<Snap1Layout>) -> Self {
        let targets = (0..layout.m).collect();
        Self::new(layout, targets, false)
    }

    /// `components` is treated as a set; out-of-range indices are a usage
    /// fault.
    pub fn partial(layout: Arc<Snap1Layout>, components: &[usize]) -> Self {
        let mut targets: Vec<usize> = components.to_vec();
        targets.sort_unstable();
        targets.dedup();
        for &j in &targets {
            layout.check_component(j);
        }
        Self::new(layout, targets, true)
    }

    fn new(layout: Arc<Snap1Layout>, targets: Vec<usize>, partial: bool) -> Self {
        Self {
            layout,
            targets,
            partial,
            idx: 0,
            my_seq: 0,
            view: Vec::new(),
            v1: ComponentCell::default(),
            apply: None,
            pc: ScanPc::Start,
        }
    }

    fn current(&self) -> usize {
        self.targets[self.idx]
    }

    fn begin_component(&mut self) -> MachineStep {
        if self.idx == self.targets.len() {
            self.pc = ScanPc::Finished;
            return MachineStep::Done(self.output());
        }
        let j = self.current();
        let mut apply = ApplyUpdateMachine::new(&self.layout, j);
        let first = match apply.next(None) {
            MachineStep::Access(e) => e,
            MachineStep::Done(_) => unreachable!("apply_update always touches shared memory"),
        };
        self.apply = Some(apply);
        self.pc = ScanPc::InApply;
        MachineStep::Access(first)
    }

    fn output(&self) -> OpOutput {
        if self.partial {
            OpOutput::Entries(self.view.clone())
        } else {
            let mut full = vec![None; self.layout.m];
            for &(j, v) in &self.view {
                full[j] = v;
            }
            OpOutput::View(full)
        }
    }
}

impl Machine for ScanMachine {
    fn next(&mut self, reply: Option<Reply>) -> MachineStep {
        match self.pc {
            ScanPc::Start => {
                self.pc = ScanPc::AwaitSeqRead;
                MachineStep::Access(Effect::Read(self.layout.seq))
            }
            ScanPc::AwaitSeqRead => {
                let s = match reply.expect("reply") {
                    Reply::Payload(p) => p.as_int(),
                    other => panic!("unexpected reply {other:?}"),
                };
                self.my_seq = s + 1;
                self.pc = ScanPc::AwaitSeqWrite;
                MachineStep::Access(Effect::Write(self.layout.seq, Payload::Int(self.my_seq)))
            }
            ScanPc::AwaitSeqWrite => self.begin_component(),
            ScanPc::InApply => {
                let apply = self.apply.as_mut().expect("running apply");
                match apply.next(reply) {
                    MachineStep::Access(e) => MachineStep::Access(e),
                    MachineStep::Done(_) => {
                        let j = self.current();
                        self.pc = ScanPc::AwaitV1;
                        MachineStep::Access(Effect::Read(self.layout.values[j]))
                    }
                }
            }
            ScanPc::AwaitV1 => {
                self.v1 = match reply.expect("reply") {
                    Reply::Payload(p) => p.as_component(),
                    other => panic!("unexpected reply {other:?}"),
                };
                let j = self.current();
                self.pc = ScanPc::AwaitV2;
                MachineStep::Access(Effect::Read(self.layout.pre_values[j]))
            }
            ScanPc::AwaitV2 => {
                let pre = match reply.expect("reply") {
                    Reply::Payload(p) => p.as_pre_value(),
                    other => panic!("unexpected reply {other:?}"),
                };
                let j = self.current();
                let chosen = if seq_lt(self.v1.seq, Some(self.my_seq)) { self.v1.value } else { pre.value };
                self.view.push((j, chosen));
                self.idx += 1;
                self.begin_component()
            }
            ScanPc::Finished => panic!("machine already finished"),
        }
    }
}

/// A single-scanner snapshot over any register backend. One handle per
/// execution context; the scanner handle can be claimed exactly once, which
/// is what enforces the single-scanner regime.
pub struct Snap1<F> {
    file: Arc<F>,
    layout: Arc<Snap1Layout>,
    config: SnapConfig,
    scanner_taken: Arc<AtomicBool>,
}

impl<F> Clone for Snap1<F> {
    fn clone(&self) -> Self {
        Self {
            file: Arc::clone(&self.file),
            layout: Arc::clone(&self.layout),
            config: self.config,
            scanner_taken: Arc::clone(&self.scanner_taken),
        }
    }
}

impl<F: RegisterOps> Snap1<F> {
    /// Wraps an already-allocated layout. Use [`Snap1::allocate`] +
    /// this, or a backend-specific convenience constructor.
    pub fn from_parts(file: Arc<F>, layout: Snap1Layout, config: SnapConfig) -> Self {
        assert_eq!(layout.m, config.m);
        Self { file, layout: Arc::new(layout), config, scanner_taken: Arc::new(AtomicBool::new(false)) }
    }

    pub fn config(&self) -> SnapConfig {
        self.config
    }

    pub fn layout(&self) -> &Arc<Snap1Layout> {
        &self.layout
    }

    pub fn file(&self) -> &Arc<F> {
        &self.file
    }

    /// Handle for an updating process.
    pub fn updater(&self, process: ProcessId) -> Snap1Updater<F> {
        assert!(process < self.config.n, "process id {process} out of range");
        Snap1Updater { obj: self.clone(), process }
    }

    /// Claims the unique scanner handle. Panics on a second claim.
    pub fn scanner(&self) -> Snap1Scanner<F> {
        let already = self.scanner_taken.swap(true, Ordering::SeqCst);
        assert!(!already, "scanner handle already claimed");
        Snap1Scanner { obj: self.clone(), process: self.config.scanner }
    }
}

impl Snap1<crate::shmem::NativeFile> {
    /// A snapshot over hardware atomics, ready for real threads.
    pub fn native(config: SnapConfig) -> Self {
        let mut file = crate::shmem::NativeFile::new(config.n);
        let layout = Snap1Layout::allocate(&mut file, config.m);
        Self::from_parts(Arc::new(file), layout, config)
    }
}

/// Update-capable handle bound to one process id.
pub struct Snap1Updater<F> {
    obj: Snap1<F>,
    process: ProcessId,
}

impl<F: RegisterOps> Snap1Updater<F> {
    pub fn process(&self) -> ProcessId {
        self.process
    }

    /// Writes `v` to component `j`. Returns the number of shared accesses.
    pub fn update(&mut self, j: usize, v: Value) -> u64 {
        self.obj.file.note_op(self.process, OpKind::Update);
        let mut machine = update_machine(&self.obj.layout, j, v);
        run_op(self.obj.file.as_ref(), self.process, &mut machine).1
    }

    /// Helping step, exposed for tests and measurements.
    pub fn apply_update(&mut self, j: usize) -> u64 {
        self.obj.file.note_op(self.process, OpKind::ApplyUpdate);
        let mut machine = ApplyUpdateMachine::new(&self.obj.layout, j);
        run_op(self.obj.file.as_ref(), self.process, &mut machine).1
    }
}

/// The designated scanner's handle; also able to update.
pub struct Snap1Scanner<F> {
    obj: Snap1<F>,
    process: ProcessId,
}

impl<F: RegisterOps> Snap1Scanner<F> {
    pub fn process(&self) -> ProcessId {
        self.process
    }

    pub fn scan(&mut self) -> (Vec<Option<Value>>, u64) {
        self.obj.file.note_op(self.process, OpKind::Scan);
        let mut machine = ScanMachine::full(Arc::clone(&self.obj.layout));
        let (out, steps) = run_op(self.obj.file.as_ref(), self.process, &mut machine);
        match out {
            OpOutput::View(view) => (view, steps),
            other => unreachable!("scan produced {other:?}"),
        }
    }

    pub fn partial_scan(&mut self, components: &[usize]) -> (Vec<(usize, Option<Value>)>, u64) {
        self.obj.file.note_op(self.process, OpKind::PartialScan);
        let mut machine = ScanMachine::partial(Arc::clone(&self.obj.layout), components);
        let (out, steps) = run_op(self.obj.file.as_ref(), self.process, &mut machine);
        match out {
            OpOutput::Entries(entries) => (entries, steps),
            other => unreachable!("partial_scan produced {other:?}"),
        }
    }

    pub fn update(&mut self, j: usize, v: Value) -> u64 {
        self.obj.file.note_op(self.process, OpKind::Update);
        let mut machine = update_machine(&self.obj.layout, j, v);
        run_op(self.obj.file.as_ref(), self.process, &mut machine).1
    }

    pub fn apply_update(&mut self, j: usize) -> u64 {
        self.obj.file.note_op(self.process, OpKind::ApplyUpdate);
        let mut machine = ApplyUpdateMachine::new(&self.obj.layout, j);
        run_op(self.obj.file.as_ref(), self.process, &mut machine).1
    }
}
