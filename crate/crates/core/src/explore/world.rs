//! One deterministically replayable execution: the simulated register file,
//! a step machine per process, the history being recorded, and runtime
//! invariant monitors.
//!
//! A step advances exactly one process by exactly one register access.
//! Cloning a world forks the execution at the current configuration, which
//! is how the enumerator branches.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use crate::histories::{History, OpArgs, OpLabel};
use crate::lsnap::{self, LambdaConfig, LambdaLayout};
use crate::machine::{execute, Effect, Machine, MachineStep, OpOutput, Reply};
use crate::oracle::OpResult;
use crate::shmem::{seq_lt, Payload, ProcessId, RegisterAlloc, RegisterOps, SimulatedFile, Value};
use crate::snap1::{self, Snap1Layout, SnapConfig};

use super::scenario::{ObjectKind, Scenario, ScriptOp};

/// Any snapshot operation, as a clonable step machine.
#[derive(Clone, Debug)]
enum AnyMachine {
    S1Update(snap1::UpdateOp),
    S1Scan(snap1::ScanMachine),
    LUpdate(lsnap::UpdateOp),
    LScan(lsnap::ScanMachine),
}

impl Machine for AnyMachine {
    fn next(&mut self, reply: Option<Reply>) -> MachineStep {
        match self {
            AnyMachine::S1Update(m) => m.next(reply),
            AnyMachine::S1Scan(m) => m.next(reply),
            AnyMachine::LUpdate(m) => m.next(reply),
            AnyMachine::LScan(m) => m.next(reply),
        }
    }
}

/// What a register means to the monitors.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Role {
    GlobalSeq,
    Values(usize),
    PreValues,
    STable(usize),
}

#[derive(Clone, Debug)]
enum WorldObject {
    Snap1 { layout: Arc<Snap1Layout>, config: SnapConfig },
    Lambda { layout: Arc<LambdaLayout>, config: LambdaConfig },
}

#[derive(Clone, Debug)]
struct ActiveOp {
    machine: AnyMachine,
    pending: Effect,
    label: OpLabel,
    steps: u64,
    /// `(component, value)` when this op is an update.
    update_args: Option<(usize, Value)>,
    /// Per-component count of pending proposals this op applied (helped).
    helps: BTreeMap<usize, u32>,
    /// Global seq value captured at the scan's announce write (lsnap only).
    announce_seq: Option<u64>,
    /// Per-component freshness floor captured at invoke (scans only).
    baseline: Option<Vec<Option<usize>>>,
}

#[derive(Clone, Debug)]
struct Proc {
    script: Arc<Vec<ScriptOp>>,
    pos: usize,
    active: Option<ActiveOp>,
}

/// Runtime invariant bookkeeping. All checks are per-step and cheap; the
/// expensive linearizability check runs on the finished history.
#[derive(Clone, Debug)]
struct Monitor {
    /// Freshness checks need values to identify updates; disabled when the
    /// scenario reuses a value.
    distinct_values: bool,
    /// Per component: applied values, in application order.
    applied: Vec<Vec<Value>>,
    applied_index: Vec<BTreeMap<Value, usize>>,
    /// Every (value, seq) pair the component register ever held.
    component_history: Vec<HashSet<(Option<Value>, Option<u64>)>>,
    /// Per component: highest applied index among responded updates.
    responded_floor: Vec<Option<usize>>,
}

impl Monitor {
    fn new(m: usize, distinct_values: bool) -> Self {
        Self {
            distinct_values,
            applied: vec![Vec::new(); m],
            applied_index: vec![BTreeMap::new(); m],
            component_history: (0..m).map(|_| HashSet::from([(None, None)])).collect(),
            responded_floor: vec![None; m],
        }
    }
}

/// A monitor violation aborts the run and is reported with its schedule.
pub type StepError = String;

#[derive(Clone, Debug)]
pub struct World<F> {
    file: F,
    object: WorldObject,
    roles: Arc<Vec<Role>>,
    procs: Vec<Proc>,
    history: History,
    monitor: Monitor,
    steps: u64,
    max_steps_per_op: BTreeMap<&'static str, u64>,
}

impl World<SimulatedFile> {
    pub fn new(scenario: &Scenario) -> Result<Self, super::ScenarioError> {
        Self::with_file(scenario, SimulatedFile::new())
    }
}

impl<F: RegisterOps + RegisterAlloc> World<F> {
    /// Builds the object in `file` and prepares one machine slot per
    /// process.
    pub fn with_file(scenario: &Scenario, mut file: F) -> Result<Self, super::ScenarioError> {
        scenario.validate()?;
        let n = scenario.n();
        let mut roles = Vec::new();
        let object = match scenario.object {
            ObjectKind::Snap1 => {
                let config = SnapConfig::new(scenario.m, n, scenario.scanners[0]);
                let layout = Snap1Layout::allocate(&mut file, scenario.m);
                roles.push(Role::GlobalSeq);
                roles.extend((0..scenario.m).map(Role::Values));
                roles.extend((0..scenario.m).map(|_| Role::PreValues));
                WorldObject::Snap1 { layout: Arc::new(layout), config }
            }
            ObjectKind::Lsnap => {
                let config = LambdaConfig::new(scenario.m, n, scenario.scanners.clone());
                let layout = LambdaLayout::allocate(&mut file, scenario.m, config.lambda());
                roles.push(Role::GlobalSeq);
                roles.extend((0..scenario.m).map(Role::Values));
                roles.extend((0..config.lambda() * scenario.m).map(|_| Role::PreValues));
                roles.extend((0..config.lambda()).map(Role::STable));
                WorldObject::Lambda { layout: Arc::new(layout), config }
            }
        };
        let procs = scenario
            .scripts
            .iter()
            .map(|script| Proc { script: Arc::new(script.clone()), pos: 0, active: None })
            .collect();
        Ok(Self {
            file,
            object,
            roles: Arc::new(roles),
            procs,
            history: History::new(),
            monitor: Monitor::new(scenario.m, scenario.has_distinct_update_values()),
            steps: 0,
            max_steps_per_op: BTreeMap::new(),
        })
    }
}

impl<F: RegisterOps> World<F> {
    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn file(&self) -> &F {
        &self.file
    }

    /// Processes that still have work: an active operation or script left.
    pub fn ready(&self) -> Vec<ProcessId> {
        (0..self.procs.len())
            .filter(|&p| {
                let proc = &self.procs[p];
                proc.active.is_some() || proc.pos < proc.script.len()
            })
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.ready().is_empty()
    }

    /// True when some operation is still in flight.
    pub fn has_pending_ops(&self) -> bool {
        self.procs.iter().any(|p| p.active.is_some())
    }

    /// Max shared accesses per operation label, including in-flight ops.
    pub fn max_steps_per_op(&self) -> BTreeMap<&'static str, u64> {
        let mut out = self.max_steps_per_op.clone();
        for proc in &self.procs {
            if let Some(active) = &proc.active {
                let entry = out.entry(active.label.as_str()).or_insert(0);
                *entry = (*entry).max(active.steps);
            }
        }
        out
    }

    /// Bit-exact register dump, for backend-equivalence comparisons.
    pub fn registers(&self) -> Vec<(Payload, u64)> {
        (0..self.roles.len())
            .map(|i| self.file.peek(crate::shmem::RegisterId(i as u32)))
            .collect()
    }

    fn seq_register(&self) -> crate::shmem::RegisterId {
        match &self.object {
            WorldObject::Snap1 { layout, .. } => layout.seq,
            WorldObject::Lambda { layout, .. } => layout.seq,
        }
    }

    fn make_machine(&self, process: ProcessId, op: &ScriptOp) -> (AnyMachine, OpLabel, Option<OpArgs>) {
        match (&self.object, op) {
            (WorldObject::Snap1 { layout, .. }, ScriptOp::Update { component, value }) => (
                AnyMachine::S1Update(snap1::update_machine(layout, *component, *value)),
                OpLabel::Update,
                Some(OpArgs::Update { component: *component, value: *value }),
            ),
            (WorldObject::Snap1 { layout, config }, ScriptOp::Scan) => {
                assert_eq!(process, config.scanner);
                (AnyMachine::S1Scan(snap1::ScanMachine::full(Arc::clone(layout))), OpLabel::Scan, None)
            }
            (WorldObject::Snap1 { layout, config }, ScriptOp::PartialScan { components }) => {
                assert_eq!(process, config.scanner);
                (
                    AnyMachine::S1Scan(snap1::ScanMachine::partial(Arc::clone(layout), components)),
                    OpLabel::PartialScan,
                    Some(OpArgs::Partial { components: components.clone() }),
                )
            }
            (WorldObject::Lambda { layout, .. }, ScriptOp::Update { component, value }) => (
                AnyMachine::LUpdate(lsnap::update_machine(layout, *component, *value)),
                OpLabel::Update,
                Some(OpArgs::Update { component: *component, value: *value }),
            ),
            (WorldObject::Lambda { layout, config }, ScriptOp::Scan) => {
                let rank = config.rank_of(process).expect("validated: scanner");
                (AnyMachine::LScan(lsnap::ScanMachine::full(Arc::clone(layout), rank)), OpLabel::Scan, None)
            }
            (WorldObject::Lambda { layout, config }, ScriptOp::PartialScan { components }) => {
                let rank = config.rank_of(process).expect("validated: scanner");
                (
                    AnyMachine::LScan(lsnap::ScanMachine::partial(Arc::clone(layout), rank, components)),
                    OpLabel::PartialScan,
                    Some(OpArgs::Partial { components: components.clone() }),
                )
            }
        }
    }

    /// Advances `process` by one register access. Fails on a monitor
    /// violation; panics if the process has nothing to do (scheduling bug).
    pub fn step(&mut self, process: ProcessId) -> Result<(), StepError> {
        // Lazily invoke the next scripted op: the invoke stamp is taken
        // right before the op's first shared access.
        if self.procs[process].active.is_none() {
            let pos = self.procs[process].pos;
            let script = Arc::clone(&self.procs[process].script);
            let op = script.get(pos).unwrap_or_else(|| panic!("process {process} has no pending work"));
            self.procs[process].pos += 1;
            let (mut machine, label, args) = self.make_machine(process, op);
            self.history.record_invoke(process, label, args);
            let pending = match machine.next(None) {
                MachineStep::Access(e) => e,
                MachineStep::Done(_) => unreachable!("every operation performs at least one access"),
            };
            let baseline = if matches!(label, OpLabel::Scan | OpLabel::PartialScan) {
                Some(self.monitor.responded_floor.clone())
            } else {
                None
            };
            let update_args = match op {
                ScriptOp::Update { component, value } => Some((*component, *value)),
                _ => None,
            };
            self.procs[process].active = Some(ActiveOp {
                machine,
                pending,
                label,
                steps: 0,
                update_args,
                helps: BTreeMap::new(),
                announce_seq: None,
                baseline,
            });
        }

        let mut active = self.procs[process].active.take().expect("just ensured");
        let effect = active.pending;
        let register = effect.register();
        let role = self.roles[register.index()];

        // The seq value "between a scan's announce write and its return"
        // is pinned at the announce itself.
        if matches!(&self.object, WorldObject::Lambda { .. })
            && matches!(effect, Effect::Write(_, _))
            && matches!(role, Role::STable(_))
            && active.announce_seq.is_none()
        {
            active.announce_seq = Some(self.file.peek(self.seq_register()).0.as_int());
        }

        let before = self.file.peek(register);
        let reply = execute(&self.file, process, effect);
        let after = self.file.peek(register);
        active.steps += 1;
        self.steps += 1;

        let mut violation: Option<StepError> = None;
        if after.1 != before.1 {
            if let Err(v) = self.on_register_change(process, &mut active, &effect, role, before.0, after.0) {
                violation = Some(v);
            }
        }
        if violation.is_none() {
            match active.machine.next(Some(reply)) {
                MachineStep::Access(e) => {
                    active.pending = e;
                    self.procs[process].active = Some(active);
                }
                MachineStep::Done(output) => {
                    if let Err(v) = self.finish_op(process, &active, &output) {
                        violation = Some(v);
                    }
                }
            }
        }
        violation.map_or(Ok(()), Err)
    }

    fn on_register_change(
        &mut self,
        process: ProcessId,
        active: &mut ActiveOp,
        effect: &Effect,
        role: Role,
        before: Payload,
        after: Payload,
    ) -> Result<(), StepError> {
        match role {
            Role::GlobalSeq => {
                let (old, new) = (before.as_int(), after.as_int());
                if new != old + 1 {
                    return Err(format!("global seq moved {old} -> {new}, not by one"));
                }
            }
            Role::Values(j) => {
                let (old, new) = (before.as_component(), after.as_component());
                if seq_lt(new.seq, old.seq) {
                    return Err(format!("component {j} seq went backwards: {old:?} -> {new:?}"));
                }
                match (old.proposed, new.proposed) {
                    (None, Some(_)) => {
                        // Announce: value and seq must carry over.
                        if new.value != old.value || new.seq != old.seq {
                            return Err(format!("announce on {j} altered value/seq: {old:?} -> {new:?}"));
                        }
                    }
                    (Some(proposal), None) => {
                        // Apply: installs exactly the pending proposal.
                        if new.value != Some(proposal) || new.seq.is_none() {
                            return Err(format!("apply on {j} mismatched: {old:?} -> {new:?}"));
                        }
                        let idx = self.monitor.applied[j].len();
                        self.monitor.applied[j].push(proposal);
                        if self.monitor.distinct_values {
                            self.monitor.applied_index[j].insert(proposal, idx);
                        }
                        let helped = active.helps.entry(j).or_insert(0);
                        *helped += 1;
                        if *helped > 2 {
                            return Err(format!(
                                "process {process} {} applied {helped} proposals on component {j}",
                                active.label.as_str()
                            ));
                        }
                    }
                    (None, None) | (Some(_), Some(_)) => {
                        return Err(format!("unexpected component transition on {j}: {old:?} -> {new:?}"));
                    }
                }
                self.monitor.component_history[j].insert((new.value, new.seq));
            }
            Role::PreValues => {
                // Copies must reproduce a pair the component actually held.
                let new = after.as_pre_value();
                let j = self.pre_register_component(effect.register());
                if !self.monitor.component_history[j].contains(&(new.value, new.seq)) {
                    return Err(format!(
                        "pre_values copy for component {j} holds a never-present pair {new:?}"
                    ));
                }
            }
            Role::STable(rank) => {
                let new = after.as_announce();
                match effect {
                    Effect::Write(_, _) => {
                        let owner = match &self.object {
                            WorldObject::Lambda { config, .. } => config.scanners[rank],
                            WorldObject::Snap1 { .. } => unreachable!("snap1 has no s_table"),
                        };
                        if process != owner {
                            return Err(format!("process {process} wrote scanner slot {rank} owned by {owner}"));
                        }
                        if !new.write_enable || new.seq.is_none() {
                            return Err(format!("announce write installed {new:?}"));
                        }
                    }
                    Effect::Sc(_, _) => {
                        let old = before.as_announce();
                        if !(old.write_enable && !new.write_enable && new.seq.is_some()) {
                            return Err(format!("helper resolution {old:?} -> {new:?} is malformed"));
                        }
                    }
                    _ => unreachable!("reads do not change versions"),
                }
            }
        }
        Ok(())
    }

    fn pre_register_component(&self, register: crate::shmem::RegisterId) -> usize {
        match &self.object {
            WorldObject::Snap1 { layout, .. } => {
                layout.pre_values.iter().position(|&r| r == register).expect("pre register")
            }
            WorldObject::Lambda { layout, .. } => layout
                .pre_values
                .iter()
                .find_map(|row| row.iter().position(|&r| r == register))
                .expect("pre register"),
        }
    }

    fn finish_op(&mut self, process: ProcessId, active: &ActiveOp, output: &OpOutput) -> Result<(), StepError> {
        let result = match output {
            OpOutput::Unit => OpResult::Unit,
            OpOutput::View(view) => OpResult::View(view.clone()),
            OpOutput::Entries(entries) => OpResult::Entries(entries.clone()),
        };

        // Scans must advance the global sequence number between announce
        // and return (lsnap; trivially true for snap1's own increment).
        if let Some(at_announce) = active.announce_seq {
            let now = self.file.peek(self.seq_register()).0.as_int();
            if now < at_announce + 1 {
                return Err(format!("scan returned with seq {now}, announced at {at_announce}"));
            }
        }

        // lsnap scans must leave their own slot resolved with the sequence
        // number their selection rule used.
        if let WorldObject::Lambda { layout, config } = &self.object {
            if matches!(active.label, OpLabel::Scan | OpLabel::PartialScan) {
                let rank = config.rank_of(process).expect("scanner");
                let slot = self.file.peek(layout.s_table[rank]).0.as_announce();
                if slot.write_enable || slot.seq.is_none() {
                    return Err(format!("scan returned with unresolved announce slot {slot:?}"));
                }
            }
        }

        // Freshness: an entry may never predate the latest applied value of
        // a responded update (cheap direct check; linearizability is the
        // authoritative one).
        if self.monitor.distinct_values {
            let entries: Vec<(usize, Option<Value>)> = match &result {
                OpResult::View(view) => view.iter().copied().enumerate().collect(),
                OpResult::Entries(entries) => entries.clone(),
                OpResult::Unit => Vec::new(),
            };
            let baseline = active.baseline.as_deref().unwrap_or(&[]);
            for (j, entry) in entries {
                let floor = baseline.get(j).copied().flatten();
                match entry {
                    None => {
                        if floor.is_some() {
                            return Err(format!(
                                "scan entry {j} is bottom although an update on {j} completed first"
                            ));
                        }
                    }
                    Some(v) => {
                        let Some(&idx) = self.monitor.applied_index[j].get(&v) else {
                            return Err(format!("scan entry {j} holds {v}, which was never applied"));
                        };
                        if let Some(floor) = floor {
                            if idx < floor {
                                return Err(format!(
                                    "scan entry {j} holds {v} (apply #{idx}) older than completed update (apply #{floor})"
                                ));
                            }
                        }
                    }
                }
            }
        }

        // Update responses raise the freshness floor of their component.
        if self.monitor.distinct_values {
            if let Some((component, value)) = active.update_args {
                if let Some(&idx) = self.monitor.applied_index[component].get(&value) {
                    let floor = &mut self.monitor.responded_floor[component];
                    *floor = Some(floor.map_or(idx, |f| f.max(idx)));
                }
            }
        }

        self.history.record_response(process, result);
        let entry = self.max_steps_per_op.entry(active.label.as_str()).or_insert(0);
        *entry = (*entry).max(active.steps);
        self.procs[process].active = None;
        Ok(())
    }
}
