//! Lambda-scanner snapshot object.
//!
//! Like the single-scanner object, but a fixed set of `lambda` processes may
//! scan concurrently. Each scanner owns a row of `pre_values` registers and
//! an announcement slot in `s_table`. A scan announces itself, then runs
//! three rounds of a consensus-like protocol that advances the global
//! sequence register with LL/SC while resolving announcement slots (its own
//! and other scanners'); concurrent scans may end up sharing a sequence
//! number, in which case they linearize at the same increment.
//!
//! Registers: `1 + m + lambda*m + lambda` (sequence, components, pre-value
//! matrix, announcement table).

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::machine::{run_op, Effect, Machine, MachineStep, OpOutput, Reply, Subroutine, UpdateMachine};
use crate::shmem::{
    seq_lt, ComponentCell, OpKind, Payload, PreValueCell, ProcessId, RegisterAlloc, RegisterId,
    RegisterKind, RegisterOps, ScanAnnounce, SpaceUsage, Value,
};

/// Static configuration: `scanners[rank]` is the process allowed to scan
/// with that rank; `lambda == scanners.len()`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LambdaConfig {
    pub m: usize,
    pub n: usize,
    pub scanners: Vec<ProcessId>,
}

impl LambdaConfig {
    pub fn new(m: usize, n: usize, scanners: Vec<ProcessId>) -> Self {
        assert!(m >= 1, "need at least one component");
        assert!(n >= 1, "need at least one process");
        assert!(!scanners.is_empty(), "need at least one scanner");
        assert!(scanners.len() <= n, "more scanners than processes");
        let mut seen = scanners.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), scanners.len(), "scanner ids must be distinct");
        for &p in &scanners {
            assert!(p < n, "scanner id {p} out of range for {n} processes");
        }
        Self { m, n, scanners }
    }

    pub fn lambda(&self) -> usize {
        self.scanners.len()
    }

    pub fn rank_of(&self, process: ProcessId) -> Option<usize> {
        self.scanners.iter().position(|&p| p == process)
    }
}

/// Register ids of one object instance.
#[derive(Clone, Debug)]
pub struct LambdaLayout {
    pub m: usize,
    pub lambda: usize,
    pub seq: RegisterId,
    pub values: Vec<RegisterId>,
    /// `pre_values[rank][component]`.
    pub pre_values: Vec<Vec<RegisterId>>,
    pub s_table: Vec<RegisterId>,
}

impl LambdaLayout {
    pub fn allocate(alloc: &mut impl RegisterAlloc, m: usize, lambda: usize) -> Self {
        assert!(m >= 1 && lambda >= 1);
        let seq = alloc.alloc(RegisterKind::LlSc, Payload::Int(0));
        let values = (0..m)
            .map(|_| alloc.alloc(RegisterKind::LlSc, Payload::Component(ComponentCell::default())))
            .collect();
        let pre_values = (0..lambda)
            .map(|_| {
                (0..m)
                    .map(|_| alloc.alloc(RegisterKind::LlSc, Payload::PreValue(PreValueCell::default())))
                    .collect()
            })
            .collect();
        let s_table = (0..lambda)
            .map(|_| alloc.alloc(RegisterKind::LlScWrite, Payload::Announce(ScanAnnounce::default())))
            .collect();
        Self { m, lambda, seq, values, pre_values, s_table }
    }

    pub fn expected_space(m: usize, lambda: usize) -> SpaceUsage {
        SpaceUsage { rw: 0, llsc: 1 + m + lambda * m, llsc_write: lambda }
    }

    fn check_component(&self, j: usize) {
        assert!(j < self.m, "component index {j} out of range for m={}", self.m);
    }
}

/// Helper: copy the component's `(value, seq)` into every scanner's
/// pre-value row (twice per row, guarded by that scanner's announced
/// sequence number), then apply a pending proposal if one was visible.
#[derive(Clone, Debug)]
pub struct ApplyUpdateMachine {
    layout: Arc<LambdaLayout>,
    j: usize,
    cur: ComponentCell,
    cur_seq: u64,
    rank: usize,
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
    AwaitGuard,
    AwaitPreSc,
    AwaitApplySc,
    Finished,
}

impl ApplyUpdateMachine {
    pub fn new(layout: Arc<LambdaLayout>, j: usize) -> Self {
        layout.check_component(j);
        Self {
            layout,
            j,
            cur: ComponentCell::default(),
            cur_seq: 0,
            rank: 0,
            t: 0,
            pc: ApplyPc::Start,
        }
    }

    fn pre_reg(&self) -> RegisterId {
        self.layout.pre_values[self.rank][self.j]
    }

    fn after_copy_iteration(&mut self) -> MachineStep {
        self.t += 1;
        if self.t == 2 {
            self.t = 0;
            self.rank += 1;
        }
        if self.rank < self.layout.lambda {
            self.pc = ApplyPc::AwaitPreLl;
            MachineStep::Access(Effect::Ll(self.pre_reg()))
        } else if self.cur.proposed.is_some() {
            let applied = ComponentCell {
                value: self.cur.proposed,
                seq: Some(self.cur_seq),
                proposed: None,
            };
            self.pc = ApplyPc::AwaitApplySc;
            MachineStep::Access(Effect::Sc(self.layout.values[self.j], Payload::Component(applied)))
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
                MachineStep::Access(Effect::Ll(self.layout.values[self.j]))
            }
            ApplyPc::AwaitLl => {
                self.cur = match reply() {
                    Reply::Payload(p) => p.as_component(),
                    other => panic!("unexpected reply {other:?}"),
                };
                self.pc = ApplyPc::AwaitSeq;
                MachineStep::Access(Effect::Read(self.layout.seq))
            }
            ApplyPc::AwaitSeq => {
                self.cur_seq = match reply() {
                    Reply::Payload(p) => p.as_int(),
                    other => panic!("unexpected reply {other:?}"),
                };
                self.rank = 0;
                self.t = 0;
                self.pc = ApplyPc::AwaitPreLl;
                MachineStep::Access(Effect::Ll(self.pre_reg()))
            }
            ApplyPc::AwaitPreLl => {
                let _ = reply(); // only the reservation matters
                self.pc = ApplyPc::AwaitValuesRead;
                MachineStep::Access(Effect::Read(self.layout.values[self.j]))
            }
            ApplyPc::AwaitValuesRead => {
                self.cur = match reply() {
                    Reply::Payload(p) => p.as_component(),
                    other => panic!("unexpected reply {other:?}"),
                };
                self.pc = ApplyPc::AwaitGuard;
                MachineStep::Access(Effect::Read(self.layout.s_table[self.rank]))
            }
            ApplyPc::AwaitGuard => {
                let announce = match reply() {
                    Reply::Payload(p) => p.as_announce(),
                    other => panic!("unexpected reply {other:?}"),
                };
                // Keep values that predate scanner `rank`'s announced
                // sequence number; an idle scanner slot (⊥) needs no copy.
                if seq_lt(self.cur.seq, announce.seq) {
                    let copy = PreValueCell { value: self.cur.value, seq: self.cur.seq };
                    self.pc = ApplyPc::AwaitPreSc;
                    MachineStep::Access(Effect::Sc(self.pre_reg(), Payload::PreValue(copy)))
                } else {
                    self.after_copy_iteration()
                }
            }
            ApplyPc::AwaitPreSc => {
                let _ = reply();
                self.after_copy_iteration()
            }
            ApplyPc::AwaitApplySc => {
                let _ = reply();
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
        self.rank = 0;
        self.t = 0;
    }
}

/// Update operation: shared announce loop over this object's helper.
pub type UpdateOp = UpdateMachine<ApplyUpdateMachine>;

pub fn update_machine(layout: &Arc<LambdaLayout>, j: usize, value: Value) -> UpdateOp {
    layout.check_component(j);
    UpdateMachine::new(layout.values[j], value, ApplyUpdateMachine::new(Arc::clone(layout), j))
}

/// Scan (or partial scan) by the scanner with the given rank.
#[derive(Clone, Debug)]
pub struct ScanMachine {
    layout: Arc<LambdaLayout>,
    rank: usize,
    targets: Vec<usize>,
    partial: bool,
    idx: usize,
    round: u8,
    k: usize,
    round_seq: u64,
    helping: ScanAnnounce,
    v1: ComponentCell,
    v2: PreValueCell,
    view: Vec<(usize, Option<Value>)>,
    apply: Option<ApplyUpdateMachine>,
    pc: ScanPc,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ScanPc {
    Start,
    AwaitSeq0,
    AwaitAnnounce,
    AwaitRoundLl,
    AwaitHelpLl,
    AwaitHelpGuard,
    AwaitHelpSc,
    AwaitRoundSc,
    InApply,
    AwaitV1,
    AwaitV2,
    AwaitSelect,
    Finished,
}

impl ScanMachine {
    pub fn full(layout: Arc<LambdaLayout>, rank: usize) -> Self {
        let targets = (0..layout.m).collect();
        Self::new(layout, rank, targets, false)
    }

    pub fn partial(layout: Arc<LambdaLayout>, rank: usize, components: &[usize]) -> Self {
        let mut targets: Vec<usize> = components.to_vec();
        targets.sort_unstable();
        targets.dedup();
        for &j in &targets {
            layout.check_component(j);
        }
        Self::new(layout, rank, targets, true)
    }

    fn new(layout: Arc<LambdaLayout>, rank: usize, targets: Vec<usize>, partial: bool) -> Self {
        assert!(rank < layout.lambda, "scanner rank {rank} out of range");
        Self {
            layout,
            rank,
            targets,
            partial,
            idx: 0,
            round: 0,
            k: 0,
            round_seq: 0,
            helping: ScanAnnounce::default(),
            v1: ComponentCell::default(),
            v2: PreValueCell::default(),
            view: Vec::new(),
            apply: None,
            pc: ScanPc::Start,
        }
    }

    fn current(&self) -> usize {
        self.targets[self.idx]
    }

    fn next_help_slot(&mut self) -> MachineStep {
        self.k += 1;
        if self.k < self.layout.lambda {
            self.pc = ScanPc::AwaitHelpLl;
            MachineStep::Access(Effect::Ll(self.layout.s_table[self.k]))
        } else {
            self.pc = ScanPc::AwaitRoundSc;
            MachineStep::Access(Effect::Sc(self.layout.seq, Payload::Int(self.round_seq + 1)))
        }
    }

    fn begin_component(&mut self) -> MachineStep {
        if self.idx == self.targets.len() {
            self.pc = ScanPc::Finished;
            return MachineStep::Done(self.output());
        }
        let j = self.current();
        let mut apply = ApplyUpdateMachine::new(Arc::clone(&self.layout), j);
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
                self.pc = ScanPc::AwaitSeq0;
                MachineStep::Access(Effect::Read(self.layout.seq))
            }
            ScanPc::AwaitSeq0 => {
                let s = match reply.expect("reply") {
                    Reply::Payload(p) => p.as_int(),
                    other => panic!("unexpected reply {other:?}"),
                };
                let announce = ScanAnnounce { seq: Some(s), write_enable: true };
                self.pc = ScanPc::AwaitAnnounce;
                MachineStep::Access(Effect::Write(self.layout.s_table[self.rank], Payload::Announce(announce)))
            }
            ScanPc::AwaitAnnounce => {
                self.round = 0;
                self.pc = ScanPc::AwaitRoundLl;
                MachineStep::Access(Effect::Ll(self.layout.seq))
            }
            ScanPc::AwaitRoundLl => {
                self.round_seq = match reply.expect("reply") {
                    Reply::Payload(p) => p.as_int(),
                    other => panic!("unexpected reply {other:?}"),
                };
                self.k = 0;
                self.pc = ScanPc::AwaitHelpLl;
                MachineStep::Access(Effect::Ll(self.layout.s_table[0]))
            }
            ScanPc::AwaitHelpLl => {
                self.helping = match reply.expect("reply") {
                    Reply::Payload(p) => p.as_announce(),
                    other => panic!("unexpected reply {other:?}"),
                };
                self.pc = ScanPc::AwaitHelpGuard;
                MachineStep::Access(Effect::Read(self.layout.seq))
            }
            ScanPc::AwaitHelpGuard => {
                let fresh = match reply.expect("reply") {
                    Reply::Payload(p) => p.as_int(),
                    other => panic!("unexpected reply {other:?}"),
                };
                if seq_lt(self.helping.seq, Some(fresh + 2)) && self.helping.write_enable {
                    let resolved = ScanAnnounce { seq: Some(fresh + 2), write_enable: false };
                    self.pc = ScanPc::AwaitHelpSc;
                    MachineStep::Access(Effect::Sc(self.layout.s_table[self.k], Payload::Announce(resolved)))
                } else {
                    self.next_help_slot()
                }
            }
            ScanPc::AwaitHelpSc => {
                let _ = reply.expect("reply"); // a failure means someone else resolved it
                self.next_help_slot()
            }
            ScanPc::AwaitRoundSc => {
                let _ = reply.expect("reply");
                self.round += 1;
                if self.round < 3 {
                    self.pc = ScanPc::AwaitRoundLl;
                    MachineStep::Access(Effect::Ll(self.layout.seq))
                } else {
                    self.begin_component()
                }
            }
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
                MachineStep::Access(Effect::Read(self.layout.pre_values[self.rank][j]))
            }
            ScanPc::AwaitV2 => {
                self.v2 = match reply.expect("reply") {
                    Reply::Payload(p) => p.as_pre_value(),
                    other => panic!("unexpected reply {other:?}"),
                };
                self.pc = ScanPc::AwaitSelect;
                MachineStep::Access(Effect::Read(self.layout.s_table[self.rank]))
            }
            ScanPc::AwaitSelect => {
                let own = match reply.expect("reply") {
                    Reply::Payload(p) => p.as_announce(),
                    other => panic!("unexpected reply {other:?}"),
                };
                let j = self.current();
                let chosen = if seq_lt(self.v1.seq, own.seq) { self.v1.value } else { self.v2.value };
                self.view.push((j, chosen));
                self.idx += 1;
                self.begin_component()
            }
            ScanPc::Finished => panic!("machine already finished"),
        }
    }
}

/// A lambda-scanner snapshot over any register backend. Scanner handles are
/// claimed per rank, once each; that claim is the admission control for the
/// fixed scanner set.
pub struct LambdaSnap<F> {
    file: Arc<F>,
    layout: Arc<LambdaLayout>,
    config: LambdaConfig,
    rank_taken: Arc<Vec<AtomicBool>>,
}

impl<F> Clone for LambdaSnap<F> {
    fn clone(&self) -> Self {
        Self {
            file: Arc::clone(&self.file),
            layout: Arc::clone(&self.layout),
            config: self.config.clone(),
            rank_taken: Arc::clone(&self.rank_taken),
        }
    }
}

impl<F: RegisterOps> LambdaSnap<F> {
    pub fn from_parts(file: Arc<F>, layout: LambdaLayout, config: LambdaConfig) -> Self {
        assert_eq!(layout.m, config.m);
        assert_eq!(layout.lambda, config.lambda());
        let rank_taken = Arc::new((0..config.lambda()).map(|_| AtomicBool::new(false)).collect());
        Self { file, layout: Arc::new(layout), config, rank_taken }
    }

    pub fn config(&self) -> &LambdaConfig {
        &self.config
    }

    pub fn layout(&self) -> &Arc<LambdaLayout> {
        &self.layout
    }

    pub fn file(&self) -> &Arc<F> {
        &self.file
    }

    pub fn updater(&self, process: ProcessId) -> LambdaUpdater<F> {
        assert!(process < self.config.n, "process id {process} out of range");
        LambdaUpdater { obj: self.clone(), process }
    }

    /// Claims the scanner handle for `rank`. Panics on a second claim.
    pub fn scanner(&self, rank: usize) -> LambdaScanner<F> {
        assert!(rank < self.config.lambda(), "scanner rank {rank} out of range");
        let already = self.rank_taken[rank].swap(true, Ordering::SeqCst);
        assert!(!already, "scanner rank {rank} already claimed");
        LambdaScanner { obj: self.clone(), rank, process: self.config.scanners[rank] }
    }
}

impl LambdaSnap<crate::shmem::NativeFile> {
    pub fn native(config: LambdaConfig) -> Self {
        let mut file = crate::shmem::NativeFile::new(config.n);
        let layout = LambdaLayout::allocate(&mut file, config.m, config.lambda());
        Self::from_parts(Arc::new(file), layout, config)
    }
}

pub struct LambdaUpdater<F> {
    obj: LambdaSnap<F>,
    process: ProcessId,
}

impl<F: RegisterOps> LambdaUpdater<F> {
    pub fn process(&self) -> ProcessId {
        self.process
    }

    pub fn update(&mut self, j: usize, v: Value) -> u64 {
        self.obj.file.note_op(self.process, OpKind::Update);
        let mut machine = update_machine(&self.obj.layout, j, v);
        run_op(self.obj.file.as_ref(), self.process, &mut machine).1
    }

    pub fn apply_update(&mut self, j: usize) -> u64 {
        self.obj.file.note_op(self.process, OpKind::ApplyUpdate);
        let mut machine = ApplyUpdateMachine::new(Arc::clone(&self.obj.layout), j);
        run_op(self.obj.file.as_ref(), self.process, &mut machine).1
    }
}

pub struct LambdaScanner<F> {
    obj: LambdaSnap<F>,
    rank: usize,
    process: ProcessId,
}

impl<F: RegisterOps> LambdaScanner<F> {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn process(&self) -> ProcessId {
        self.process
    }

    pub fn scan(&mut self) -> (Vec<Option<Value>>, u64) {
        self.obj.file.note_op(self.process, OpKind::Scan);
        let mut machine = ScanMachine::full(Arc::clone(&self.obj.layout), self.rank);
        let (out, steps) = run_op(self.obj.file.as_ref(), self.process, &mut machine);
        match out {
            OpOutput::View(view) => (view, steps),
            other => unreachable!("scan produced {other:?}"),
        }
    }

    pub fn partial_scan(&mut self, components: &[usize]) -> (Vec<(usize, Option<Value>)>, u64) {
        self.obj.file.note_op(self.process, OpKind::PartialScan);
        let mut machine = ScanMachine::partial(Arc::clone(&self.obj.layout), self.rank, components);
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
}
