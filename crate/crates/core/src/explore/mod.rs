//! Schedule exploration over the simulated backend.
//!
//! Every register access is one atomic step; a schedule is the sequence of
//! process ids that were allowed to take those steps. The enumerator forks
//! the world at every choice point up to a branching depth, completes each
//! branch deterministically (lowest ready id first, which doubles as an
//! adversarial solo-resume probe), and checks every resulting history for
//! linearizability. The stress runner draws schedules from a seeded RNG
//! instead; both report the same way, and any failure carries a replayable
//! schedule.

mod scenario;
mod world;

pub use scenario::{ObjectKind, Scenario, ScenarioError, ScriptOp};
pub use world::World;

use std::collections::BTreeMap;

use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::histories::{check, History, Verdict};
use crate::shmem::{Payload, ProcessId, SimulatedFile};

/// Exploration limits. `None` means unlimited; termination is then
/// guaranteed by wait-freedom (finite scripts finish in finite steps).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Bounds {
    /// Hard cap on total steps per schedule; beyond it the run is cut off
    /// and its pending operations closed by the checker's completion rule.
    pub max_steps: Option<u64>,
    /// Scheduling choices are enumerated exhaustively up to this depth;
    /// after it each branch continues deterministically.
    pub branch_steps: Option<u64>,
    /// Stop after this many schedules (reported as non-exhaustive).
    pub max_schedules: Option<u64>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub enum ViolationKind {
    Linearizability(Verdict),
    Invariant(String),
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Violation {
    pub schedule: Vec<ProcessId>,
    pub kind: ViolationKind,
}

/// Outcome of an exploration or stress run.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ExploreReport {
    pub object: ObjectKind,
    pub schedules_explored: u64,
    /// True only when every schedule within the bounds was executed.
    pub exhaustive: bool,
    /// Schedules that hit `max_steps` with operations still pending.
    pub truncated_runs: u64,
    pub max_steps_per_op: BTreeMap<String, u64>,
    pub violations: Vec<Violation>,
    /// True when more violations occurred than were recorded.
    pub violations_capped: bool,
}

impl ExploreReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A scenario/schedule pair, enough to reproduce a run bit-exactly.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct SavedSchedule {
    pub scenario: Scenario,
    pub schedule: Vec<ProcessId>,
}

const VIOLATION_CAP: usize = 16;

struct Acc {
    object: ObjectKind,
    schedules: u64,
    truncated: u64,
    max_steps_per_op: BTreeMap<String, u64>,
    violations: Vec<Violation>,
    violations_capped: bool,
    budget: Option<u64>,
    hit_budget: bool,
}

impl Acc {
    fn new(object: ObjectKind, budget: Option<u64>) -> Self {
        Self {
            object,
            schedules: 0,
            truncated: 0,
            max_steps_per_op: BTreeMap::new(),
            violations: Vec::new(),
            violations_capped: false,
            budget,
            hit_budget: false,
        }
    }

    fn merge_maxima(&mut self, world: &World<SimulatedFile>) {
        for (label, steps) in world.max_steps_per_op() {
            let entry = self.max_steps_per_op.entry(label.to_string()).or_insert(0);
            *entry = (*entry).max(steps);
        }
    }

    fn push_violation(&mut self, schedule: &[ProcessId], kind: ViolationKind) {
        if self.violations.len() < VIOLATION_CAP {
            self.violations.push(Violation { schedule: schedule.to_vec(), kind });
        } else {
            self.violations_capped = true;
        }
    }

    fn count_schedule(&mut self) {
        self.schedules += 1;
        if self.budget.is_some_and(|cap| self.schedules >= cap) {
            self.hit_budget = true;
        }
    }

    fn leaf(&mut self, world: &World<SimulatedFile>, schedule: &[ProcessId], truncated: bool) {
        self.count_schedule();
        if truncated {
            self.truncated += 1;
        }
        self.merge_maxima(world);
        let verdict = check(world.history());
        if !verdict.linearizable {
            self.push_violation(schedule, ViolationKind::Linearizability(verdict));
        }
    }

    fn violation_leaf(&mut self, world: &World<SimulatedFile>, schedule: &[ProcessId], reason: String) {
        self.count_schedule();
        self.merge_maxima(world);
        self.push_violation(schedule, ViolationKind::Invariant(reason));
    }

    fn finish(self) -> ExploreReport {
        ExploreReport {
            object: self.object,
            schedules_explored: self.schedules,
            exhaustive: !self.hit_budget,
            truncated_runs: self.truncated,
            max_steps_per_op: self.max_steps_per_op,
            violations: self.violations,
            violations_capped: self.violations_capped,
        }
    }
}

/// Depth-first enumeration of all schedules within `bounds`, ties broken in
/// ascending process-id order. Each leaf history is checked; invariant
/// monitors run on every step.
pub fn enumerate(scenario: &Scenario, bounds: &Bounds) -> Result<ExploreReport, ScenarioError> {
    scenario.validate()?;
    let world = World::new(scenario)?;
    let mut acc = Acc::new(scenario.object, bounds.max_schedules);
    let mut schedule = Vec::new();
    dfs(world, &mut schedule, bounds, &mut acc);
    Ok(acc.finish())
}

fn dfs(mut world: World<SimulatedFile>, schedule: &mut Vec<ProcessId>, bounds: &Bounds, acc: &mut Acc) {
    let base = schedule.len();
    loop {
        if acc.hit_budget {
            break;
        }
        let ready = world.ready();
        if ready.is_empty() {
            acc.leaf(&world, schedule, false);
            break;
        }
        let depth = schedule.len() as u64;
        if bounds.max_steps.is_some_and(|cap| depth >= cap) {
            acc.leaf(&world, schedule, true);
            break;
        }
        let branching = ready.len() > 1 && bounds.branch_steps.map_or(true, |b| depth < b);
        if branching {
            for p in ready {
                if acc.hit_budget {
                    break;
                }
                let mut fork = world.clone();
                schedule.push(p);
                match fork.step(p) {
                    Ok(()) => dfs(fork, schedule, bounds, acc),
                    Err(reason) => acc.violation_leaf(&fork, schedule, reason),
                }
                schedule.pop();
            }
            break;
        }
        // Deterministic tail: lowest ready id runs next, so paused
        // processes resume solo once their predecessors finish.
        let p = ready[0];
        schedule.push(p);
        if let Err(reason) = world.step(p) {
            acc.violation_leaf(&world, schedule, reason);
            break;
        }
    }
    schedule.truncate(base);
}

/// Seeded random schedules; reproducible from `(scenario, seed)`.
pub fn stress(scenario: &Scenario, seed: u64, iterations: u64) -> Result<ExploreReport, ScenarioError> {
    scenario.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Acc::new(scenario.object, None);
    let mut schedule = Vec::new();
    for _ in 0..iterations {
        let mut world = World::new(scenario)?;
        schedule.clear();
        let mut failed = false;
        loop {
            let ready = world.ready();
            if ready.is_empty() {
                break;
            }
            let p = ready[(rng.next_u32() as usize) % ready.len()];
            schedule.push(p);
            if let Err(reason) = world.step(p) {
                acc.violation_leaf(&world, &schedule, reason);
                failed = true;
                break;
            }
        }
        if !failed {
            acc.leaf(&world, &schedule, false);
        }
    }
    let mut report = acc.finish();
    report.exhaustive = false; // sampling never proves exhaustiveness
    Ok(report)
}

/// A fully replayed schedule.
#[derive(Clone, Debug)]
pub struct ReplayOutcome {
    pub history: History,
    pub verdict: Verdict,
    /// Bit-exact `(payload, version)` of every register, in allocation
    /// order.
    pub registers: Vec<(Payload, u64)>,
    pub invariant_violation: Option<String>,
    /// False when the schedule left operations unfinished.
    pub complete: bool,
}

/// Replays `schedule` step by step on a fresh simulated world.
pub fn replay(scenario: &Scenario, schedule: &[ProcessId]) -> Result<ReplayOutcome, ScenarioError> {
    let world = World::new(scenario)?;
    replay_in(world, schedule)
}

/// Replays on a caller-provided world, e.g. one backed by the native file
/// for backend-equivalence comparisons.
pub fn replay_in<F: crate::shmem::RegisterOps>(
    mut world: World<F>,
    schedule: &[ProcessId],
) -> Result<ReplayOutcome, ScenarioError> {
    let mut invariant_violation = None;
    for (i, &p) in schedule.iter().enumerate() {
        if !world.ready().contains(&p) {
            return Err(ScenarioError::Invalid(format!(
                "schedule step {i}: process {p} has no pending work"
            )));
        }
        if let Err(reason) = world.step(p) {
            invariant_violation = Some(reason);
            break;
        }
    }
    let history = world.history().clone();
    let verdict = check(&history);
    Ok(ReplayOutcome {
        verdict,
        registers: world.registers(),
        complete: world.is_complete(),
        history,
        invariant_violation,
    })
}
