//! Property tests: checker agreement with the brute-force oracle, history
//! serialization round trips, backend equivalence, and LL/SC semantics
//! under random schedules.

mod common;

use proptest::prelude::*;

use lambda_snap::explore::{replay, replay_in, ObjectKind, Scenario, ScriptOp, World};
use lambda_snap::histories::{check, History, OpArgs, OpLabel};
use lambda_snap::oracle::OpResult;
use lambda_snap::shmem::{NativeFile, Payload, RegisterAlloc, RegisterKind, RegisterOps, SimulatedFile};

// ---------------------------------------------------------------------------
// Random (valid) histories, including impossible results and pending ops.

#[derive(Clone, Debug)]
struct Action {
    process: usize,
    respond: bool,
    kind: u8,
    a: u8,
    b: u8,
}

fn action_strategy() -> impl Strategy<Value = Action> {
    (0..3usize, any::<bool>(), 0..3u8, 0..3u8, 0..3u8)
        .prop_map(|(process, respond, kind, a, b)| Action { process, respond, kind, a, b })
}

fn decode(x: u8) -> Option<u64> {
    match x % 3 {
        0 => None,
        v => Some(v as u64),
    }
}

/// Folds raw actions into a well-formed history over m = 2, values {1, 2}.
fn build_history(actions: &[Action]) -> History {
    let mut history = History::new();
    let mut pending: [Option<OpLabel>; 3] = [None; 3];
    for act in actions {
        let p = act.process;
        match (pending[p], act.respond) {
            (None, false) => {
                let label = match act.kind % 3 {
                    0 => {
                        let component = (act.a % 2) as usize;
                        let value = 1 + (act.b % 2) as u64;
                        history.record_invoke(p, OpLabel::Update, Some(OpArgs::Update { component, value }));
                        OpLabel::Update
                    }
                    1 => {
                        history.record_invoke(p, OpLabel::Scan, None);
                        OpLabel::Scan
                    }
                    _ => {
                        let components = vec![(act.a % 2) as usize];
                        history.record_invoke(p, OpLabel::PartialScan, Some(OpArgs::Partial { components }));
                        OpLabel::PartialScan
                    }
                };
                pending[p] = Some(label);
            }
            (Some(label), true) => {
                let result = match label {
                    OpLabel::Update => OpResult::Unit,
                    OpLabel::Scan => OpResult::View(vec![decode(act.a), decode(act.b)]),
                    OpLabel::PartialScan => {
                        // Respond for the component the invoke asked about.
                        let invoked = history
                            .events()
                            .iter()
                            .rev()
                            .find(|e| e.process == p && matches!(e.kind, lambda_snap::histories::EventKind::Invoke))
                            .and_then(|e| match &e.args {
                                Some(OpArgs::Partial { components }) => Some(components.clone()),
                                _ => None,
                            })
                            .expect("pending partial has components");
                        OpResult::Entries(invoked.into_iter().map(|j| (j, decode(act.a))).collect())
                    }
                };
                history.record_response(p, result);
                pending[p] = None;
            }
            _ => {} // skip: nothing to respond to, or already pending
        }
    }
    history
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    /// The exact checker and the permutation oracle always agree.
    #[test]
    fn checker_agrees_with_brute_force(actions in prop::collection::vec(action_strategy(), 0..14)) {
        let history = build_history(&actions);
        let (ops, _) = lambda_snap::histories::completed_ops(&history);
        prop_assume!(ops.len() <= 8);
        let fast = check(&history).linearizable;
        let slow = common::brute_force_linearizable(&history);
        prop_assert_eq!(fast, slow, "history: {:?}", history.events());
    }

    /// Save then load is the identity on events.
    #[test]
    fn history_save_load_round_trips(actions in prop::collection::vec(action_strategy(), 0..20)) {
        let history = build_history(&actions);
        let mut buf = Vec::new();
        history.save(&mut buf).unwrap();
        let loaded = History::load(buf.as_slice()).unwrap();
        prop_assert_eq!(loaded.events(), history.events());
    }
}

// ---------------------------------------------------------------------------
// Backend equivalence and schedule determinism.

fn equivalence_scenario(object: ObjectKind) -> Scenario {
    let update = |component, value| ScriptOp::Update { component, value };
    match object {
        ObjectKind::Snap1 => Scenario {
            object,
            m: 2,
            scanners: vec![2],
            scripts: vec![
                vec![update(0, 10), update(1, 11)],
                vec![update(0, 20)],
                vec![ScriptOp::Scan, ScriptOp::PartialScan { components: vec![1] }],
            ],
        },
        ObjectKind::Lsnap => Scenario {
            object,
            m: 2,
            scanners: vec![2, 3],
            scripts: vec![
                vec![update(0, 10), update(1, 11)],
                vec![update(0, 20)],
                vec![ScriptOp::Scan],
                vec![ScriptOp::PartialScan { components: vec![0] }, ScriptOp::Scan],
            ],
        },
    }
}

/// Builds a random complete schedule by walking a fresh simulated world.
fn random_schedule(scenario: &Scenario, seed: u64) -> Vec<usize> {
    use rand_core::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut world = World::new(scenario).unwrap();
    let mut schedule = Vec::new();
    loop {
        let ready = world.ready();
        if ready.is_empty() {
            return schedule;
        }
        let p = ready[(rng.next_u32() as usize) % ready.len()];
        schedule.push(p);
        world.step(p).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// For any fixed schedule, the simulated backend and a single-threaded
    /// replay over the native backend produce identical register states.
    #[test]
    fn simulated_and_native_backends_are_bit_equal(seed in any::<u64>(), lsnap in any::<bool>()) {
        let scenario = equivalence_scenario(if lsnap { ObjectKind::Lsnap } else { ObjectKind::Snap1 });
        let schedule = random_schedule(&scenario, seed);

        let sim = replay(&scenario, &schedule).unwrap();
        let native_world = World::with_file(&scenario, NativeFile::new(scenario.n())).unwrap();
        let native = replay_in(native_world, &schedule).unwrap();

        prop_assert!(sim.invariant_violation.is_none());
        prop_assert!(native.invariant_violation.is_none());
        prop_assert_eq!(&sim.registers, &native.registers);
        prop_assert_eq!(sim.history.events(), native.history.events());
        prop_assert!(sim.verdict.linearizable);
    }

    /// (scenario, schedule) fully determines the run.
    #[test]
    fn replay_is_deterministic(seed in any::<u64>()) {
        let scenario = equivalence_scenario(ObjectKind::Lsnap);
        let schedule = random_schedule(&scenario, seed);
        let a = replay(&scenario, &schedule).unwrap();
        let b = replay(&scenario, &schedule).unwrap();
        prop_assert_eq!(a.history.events(), b.history.events());
        prop_assert_eq!(a.registers, b.registers);
    }
}

// ---------------------------------------------------------------------------
// LL/SC semantics against a naive change-counting model, random version.

#[derive(Clone, Copy, Debug)]
enum Prim {
    Read,
    Write(u64),
    Ll,
    Sc(u64),
}

/// Scripts are made well-formed: an SC is only emitted after an LL with no
/// SC in between.
fn well_formed_script(raw: &[(u8, u64)]) -> Vec<Prim> {
    let mut script = Vec::new();
    let mut linked = false;
    for &(kind, v) in raw {
        match kind % 4 {
            0 => script.push(Prim::Read),
            1 => script.push(Prim::Write(v)),
            2 => {
                script.push(Prim::Ll);
                linked = true;
            }
            _ => {
                if linked {
                    script.push(Prim::Sc(v));
                    linked = false;
                }
            }
        }
    }
    script
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// `sc` succeeds exactly when no successful SC/Write intervened since
    /// the caller's `ll`, and reads always see the latest installed value.
    #[test]
    fn sc_semantics_match_naive_model(
        raw0 in prop::collection::vec((0..4u8, 1..100u64), 0..6),
        raw1 in prop::collection::vec((0..4u8, 1..100u64), 0..6),
        order in prop::collection::vec(0..2usize, 0..16),
    ) {
        let scripts = [well_formed_script(&raw0), well_formed_script(&raw1)];
        let mut file = SimulatedFile::new();
        let reg = file.alloc(RegisterKind::LlScWrite, Payload::Int(0));

        let mut pos = [0usize; 2];
        // Naive model: count changes, remember reservations and content.
        let mut changes = 0u64;
        let mut content = 0u64;
        let mut reserved: [Option<u64>; 2] = [None, None];

        for &p in &order {
            if pos[p] >= scripts[p].len() {
                continue;
            }
            let prim = scripts[p][pos[p]];
            pos[p] += 1;
            match prim {
                Prim::Read => {
                    prop_assert_eq!(file.read(p, reg).as_int(), content);
                }
                Prim::Write(v) => {
                    file.write(p, reg, Payload::Int(v));
                    changes += 1;
                    content = v;
                }
                Prim::Ll => {
                    prop_assert_eq!(file.ll(p, reg).as_int(), content);
                    reserved[p] = Some(changes);
                }
                Prim::Sc(v) => {
                    let expected = reserved[p].take() == Some(changes);
                    let actual = file.sc(p, reg, Payload::Int(v));
                    prop_assert_eq!(actual, expected);
                    if actual {
                        changes += 1;
                        content = v;
                    }
                }
            }
        }
    }
}
