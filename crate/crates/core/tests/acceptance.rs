//! Acceptance suite: one test per acceptance criterion, each printing a
//! pass/fail line (run with `--nocapture` to see them).
//!
//! The wait-freedom bounds below are frozen constants. They were derived
//! once from a worst-case walk of the operation code (every access counted,
//! every branch taken the expensive way) and cross-checked against the
//! maxima the exhaustive suites measure; every explored and stressed
//! schedule must stay within them.

mod common;

use std::collections::BTreeMap;
use std::time::Duration;

use lambda_snap::bench::{self, BenchConfig};
use lambda_snap::complexity::{run_sweep, SweepConfig};
use lambda_snap::explore::{enumerate, replay, stress, Bounds, ExploreReport, ObjectKind, Scenario, ScriptOp};
use lambda_snap::histories::{check, History};
use lambda_snap::lsnap::LambdaLayout;
use lambda_snap::shmem::{Payload, RegisterAlloc, RegisterKind, RegisterOps, SimulatedFile, SpaceUsage};
use lambda_snap::snap1::Snap1Layout;

// Frozen wait-freedom bounds (shared-memory accesses per operation).
fn snap1_update_bound() -> u64 {
    26
}

fn snap1_scan_bound(m: u64) -> u64 {
    13 * m + 2
}

fn snap1_partial_bound(r: u64) -> u64 {
    13 * r + 2
}

fn lsnap_update_bound(lambda: u64) -> u64 {
    16 * lambda + 10
}

fn lsnap_scan_bound(lambda: u64, m: u64) -> u64 {
    8 + 9 * lambda + m * (6 + 8 * lambda)
}

fn lsnap_partial_bound(lambda: u64, r: u64) -> u64 {
    8 + 9 * lambda + r * (6 + 8 * lambda)
}

fn pass(criterion: &str, detail: String) {
    println!("acceptance {criterion}: PASS ({detail})");
}

fn update(component: usize, value: u64) -> ScriptOp {
    ScriptOp::Update { component, value }
}

fn assert_clean(report: &ExploreReport, what: &str) {
    assert!(report.exhaustive, "{what}: exploration not exhaustive");
    assert!(
        report.violations.is_empty(),
        "{what}: {} violations, first: {:?}",
        report.violations.len(),
        report.violations.first()
    );
}

fn assert_bounds(report: &ExploreReport, what: &str, bounds_by_op: &BTreeMap<&str, u64>) {
    for (op, &max) in &report.max_steps_per_op {
        let bound = bounds_by_op
            .get(op.as_str())
            .unwrap_or_else(|| panic!("{what}: unexpected op {op}"));
        assert!(max <= *bound, "{what}: {op} took {max} accesses, bound {bound}");
    }
}

// ---------------------------------------------------------------------------

/// Criterion 1: exhaustive linearizability for the single-scanner object.
#[test]
fn criterion_1_snap1_exhaustive_linearizability() {
    let mut schedules = 0u64;
    for m in [1usize, 2] {
        let one_updater_two_ops = Scenario {
            object: ObjectKind::Snap1,
            m,
            scanners: vec![1],
            scripts: vec![vec![update(0, 5), update(m - 1, 9)], vec![ScriptOp::Scan]],
        };
        let two_updaters = Scenario {
            object: ObjectKind::Snap1,
            m,
            scanners: vec![2],
            scripts: vec![vec![update(0, 5)], vec![update(0, 9)], vec![ScriptOp::Scan]],
        };
        let update_vs_partial = Scenario {
            object: ObjectKind::Snap1,
            m,
            scanners: vec![1],
            scripts: vec![vec![update(m - 1, 5)], vec![ScriptOp::PartialScan { components: vec![m - 1] }]],
        };
        for (scenario, branch) in [(&one_updater_two_ops, 13), (&two_updaters, 9), (&update_vs_partial, 13)] {
            let bounds = Bounds { branch_steps: Some(branch), ..Bounds::default() };
            let report = enumerate(scenario, &bounds).unwrap();
            assert_clean(&report, &format!("snap1 m={m}"));
            assert_eq!(report.truncated_runs, 0);
            let limits = BTreeMap::from([
                ("update", snap1_update_bound()),
                ("scan", snap1_scan_bound(m as u64)),
                ("partial_scan", snap1_partial_bound(1)),
            ]);
            assert_bounds(&report, &format!("snap1 m={m}"), &limits);
            schedules += report.schedules_explored;
        }
    }
    pass("criterion 1 (snap1 exhaustive linearizability)", format!("{schedules} schedules, 0 violations"));
}

/// Criterion 2: exhaustive linearizability for the lambda-scanner object.
#[test]
fn criterion_2_lsnap_exhaustive_linearizability() {
    let mut schedules = 0u64;
    for lambda in [1usize, 2] {
        for m in [1usize, 2] {
            // 1 updater vs lambda concurrent scans.
            let scanners: Vec<usize> = (1..=lambda).collect();
            let mut scripts = vec![vec![update(0, 5)]];
            for _ in 0..lambda {
                scripts.push(vec![ScriptOp::Scan]);
            }
            let updater_vs_scans =
                Scenario { object: ObjectKind::Lsnap, m, scanners: scanners.clone(), scripts };

            // 2 updaters vs 1 scan (lambda handles allocated regardless).
            let two_updaters = Scenario {
                object: ObjectKind::Lsnap,
                m,
                scanners: (2..2 + lambda).collect(),
                scripts: {
                    let mut s = vec![vec![update(0, 5)], vec![update(0, 9)], vec![ScriptOp::Scan]];
                    s.extend(std::iter::repeat_with(Vec::new).take(lambda - 1));
                    s
                },
            };

            let branch = if lambda * m >= 4 { 7 } else { 8 };
            for scenario in [&updater_vs_scans, &two_updaters] {
                let bounds = Bounds { branch_steps: Some(branch), ..Bounds::default() };
                let report = enumerate(scenario, &bounds).unwrap();
                assert_clean(&report, &format!("lsnap lambda={lambda} m={m}"));
                assert_eq!(report.truncated_runs, 0);
                let limits = BTreeMap::from([
                    ("update", lsnap_update_bound(lambda as u64)),
                    ("scan", lsnap_scan_bound(lambda as u64, m as u64)),
                    ("partial_scan", lsnap_partial_bound(lambda as u64, m as u64)),
                ]);
                assert_bounds(&report, &format!("lsnap lambda={lambda} m={m}"), &limits);
                schedules += report.schedules_explored;
            }
        }
    }
    pass("criterion 2 (lsnap exhaustive linearizability)", format!("{schedules} schedules, 0 violations"));
}

/// Criterion 3: randomized stress with zero violations.
#[test]
fn criterion_3_randomized_stress() {
    let dir = bundled_scenarios();
    let mut total = 0u64;
    for (name, seed, iterations) in
        [("snap1_stress.json", 0xA11CE, 12_000u64), ("lsnap_stress.json", 0xB0B, 12_000)]
    {
        let scenario = Scenario::load_path(dir.join(name)).unwrap();
        let report = stress(&scenario, seed, iterations).unwrap();
        assert_eq!(report.schedules_explored, iterations);
        assert!(
            report.violations.is_empty(),
            "{name}: violations with replayable schedules: {:?}",
            report.violations.first()
        );
        // Spot-check replayability of stress runs: re-running is identical.
        let again = stress(&scenario, seed, iterations).unwrap();
        assert_eq!(report, again);
        total += iterations;
    }
    pass("criterion 3 (randomized stress)", format!("{total} schedules across both objects, 0 violations"));
}

/// Criterion 4: frozen wait-freedom bounds hold on explored, stressed and
/// adversarial solo-resume schedules.
#[test]
fn criterion_4_wait_freedom_bounds() {
    let dir = bundled_scenarios();

    // Stress maxima against the stress configs (m = 4).
    let snap1 = Scenario::load_path(dir.join("snap1_stress.json")).unwrap();
    let report = stress(&snap1, 99, 4_000).unwrap();
    assert!(report.violations.is_empty());
    let limits = BTreeMap::from([
        ("update", snap1_update_bound()),
        ("scan", snap1_scan_bound(4)),
        ("partial_scan", snap1_partial_bound(2)),
    ]);
    assert_bounds(&report, "snap1 stress", &limits);

    let lsnap = Scenario::load_path(dir.join("lsnap_stress.json")).unwrap();
    let report = stress(&lsnap, 99, 4_000).unwrap();
    assert!(report.violations.is_empty());
    let limits = BTreeMap::from([
        ("update", lsnap_update_bound(2)),
        ("scan", lsnap_scan_bound(2, 4)),
        ("partial_scan", lsnap_partial_bound(2, 2)),
    ]);
    assert_bounds(&report, "lsnap stress", &limits);

    // Adversarial solo-resume: exhaustively pause processes at every point
    // of the first steps, then let the lowest id run solo to completion.
    // The enumerator's deterministic tail is exactly that adversary.
    let adversarial = Scenario {
        object: ObjectKind::Lsnap,
        m: 2,
        scanners: vec![2, 3],
        scripts: vec![
            vec![update(0, 1), update(1, 2)],
            vec![update(0, 3)],
            vec![ScriptOp::Scan],
            vec![ScriptOp::PartialScan { components: vec![0, 1] }],
        ],
    };
    let bounds = Bounds { branch_steps: Some(6), ..Bounds::default() };
    let report = enumerate(&adversarial, &bounds).unwrap();
    assert_clean(&report, "adversarial lsnap");
    let limits = BTreeMap::from([
        ("update", lsnap_update_bound(2)),
        ("scan", lsnap_scan_bound(2, 2)),
        ("partial_scan", lsnap_partial_bound(2, 2)),
    ]);
    assert_bounds(&report, "adversarial lsnap", &limits);

    pass("criterion 4 (wait-freedom bounds)", "zero exceedances of the frozen per-op access bounds".into());
}

/// Criterion 5: step-complexity shapes as exact integer fits.
#[test]
fn criterion_5_step_complexity_shapes() {
    let mut checked = 0;
    for object in [ObjectKind::Snap1, ObjectKind::Lsnap] {
        let mut sweep = SweepConfig::defaults(object);
        sweep.m_values = vec![1, 2, 8, 64];
        sweep.lambda_values = vec![1, 2, 4];
        sweep.r_values = vec![0, 1, 2, 4];
        let report = run_sweep(&sweep);
        for finding in &report.findings {
            assert!(finding.pass, "{}: {}", finding.name, finding.detail);
            checked += 1;
        }
        assert!(report.ok);
    }
    pass("criterion 5 (step-complexity shapes)", format!("{checked} exact-fit checks"));
}

/// Criterion 6: space complexity, exact register totals.
#[test]
fn criterion_6_space_complexity() {
    let mut points = 0;
    for m in [1usize, 2, 4, 8, 64] {
        let mut file = SimulatedFile::new();
        Snap1Layout::allocate(&mut file, m);
        assert_eq!(
            file.space(),
            SpaceUsage { rw: 1, llsc: 2 * m, llsc_write: 0 },
            "snap1 m={m}"
        );
        assert_eq!(file.space().total(), 2 * m + 1);
        points += 1;
        for lambda in [1usize, 2, 4] {
            let mut file = SimulatedFile::new();
            LambdaLayout::allocate(&mut file, m, lambda);
            assert_eq!(
                file.space(),
                SpaceUsage { rw: 0, llsc: 1 + m + lambda * m, llsc_write: lambda },
                "lsnap m={m} lambda={lambda}"
            );
            assert_eq!(file.space().total(), 1 + m + lambda * m + lambda);
            points += 1;
        }
    }
    pass("criterion 6 (space complexity)", format!("{points} exact allocation totals"));
}

/// Criterion 7: the exact checker agrees with the all-permutations oracle on
/// the whole ≤8-op fixture corpus.
#[test]
fn criterion_7_checker_agrees_with_brute_force() {
    let mut agreed = 0;
    // Every bundled fixture history.
    let fixture_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    for entry in std::fs::read_dir(&fixture_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "jsonl") {
            continue;
        }
        let history = History::load_path(&path).unwrap();
        let (ops, _) = lambda_snap::histories::completed_ops(&history);
        if ops.len() > 8 {
            continue;
        }
        let fast = check(&history).linearizable;
        let slow = common::brute_force_linearizable(&history);
        assert_eq!(fast, slow, "fixture {} disagreed", path.display());
        agreed += 1;
    }
    assert!(agreed >= 8, "fixture corpus unexpectedly small: {agreed}");

    // Plus histories harvested from real runs, complete and truncated.
    let scenario = Scenario {
        object: ObjectKind::Lsnap,
        m: 2,
        scanners: vec![2, 3],
        scripts: vec![
            vec![update(0, 1), update(0, 2)],
            vec![update(1, 3)],
            vec![ScriptOp::Scan],
            vec![ScriptOp::PartialScan { components: vec![0] }, ScriptOp::Scan],
        ],
    };
    use rand_core::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for round in 0..120 {
        let mut world = lambda_snap::explore::World::new(&scenario).unwrap();
        // Truncate at a random point so pending-op handling is exercised.
        let cutoff = 20 + (rng.next_u32() % 260) as usize;
        let mut steps = 0;
        loop {
            let ready = world.ready();
            if ready.is_empty() || steps == cutoff {
                break;
            }
            let p = ready[(rng.next_u32() as usize) % ready.len()];
            world.step(p).unwrap();
            steps += 1;
        }
        let history = world.history().clone();
        let (ops, _) = lambda_snap::histories::completed_ops(&history);
        if ops.len() > 8 {
            continue;
        }
        let fast = check(&history).linearizable;
        let slow = common::brute_force_linearizable(&history);
        assert_eq!(fast, slow, "round {round} disagreed: {:?}", history.events());
        agreed += 1;
    }
    pass("criterion 7 (checker self-validation)", format!("{agreed} histories, 100% agreement"));
}

/// Criterion 8: LL/SC emulation semantics, exhaustively, over one register.
///
/// All scripts of up to three primitives per process (SCs well-formed), for
/// two and three processes, interleaved every possible way up to six steps,
/// verified against a naive change-counting model of the register.
#[test]
fn criterion_8_llsc_emulation_exhaustive() {
    #[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
    enum Prim {
        Read,
        Write,
        Ll,
        Sc,
    }
    use Prim::*;

    // All well-formed scripts of length <= len over one register.
    fn scripts(len: usize) -> Vec<Vec<Prim>> {
        let mut out = vec![vec![]];
        for _ in 0..len {
            let mut next = Vec::new();
            for script in &out {
                for prim in [Read, Write, Ll, Sc] {
                    if prim == Sc {
                        // Needs a live link: an Ll with no Sc after it.
                        let linked = script.iter().rev().find_map(|p| match p {
                            Ll => Some(true),
                            Sc => Some(false),
                            _ => None,
                        });
                        if linked != Some(true) {
                            continue;
                        }
                    }
                    let mut s = script.clone();
                    s.push(prim);
                    next.push(s);
                }
            }
            out.extend(next.clone());
            out = {
                let mut seen = std::collections::HashSet::new();
                out.into_iter().filter(|s| seen.insert(s.clone())).collect()
            };
        }
        out
    }

    // One interleaved execution, checked against the naive model.
    fn run(scripts: &[&Vec<Prim>], order: &[usize]) -> u64 {
        let mut file = SimulatedFile::new();
        let reg = file.alloc(RegisterKind::LlScWrite, Payload::Int(0));
        let mut pos = vec![0usize; scripts.len()];
        let mut changes = 0u64;
        let mut content = 0u64;
        let mut reserved = vec![None; scripts.len()];
        let mut checks = 0;
        for &p in order {
            let prim = scripts[p][pos[p]];
            pos[p] += 1;
            // Unique value per (process, position).
            let value = 1 + (p as u64) * 10 + pos[p] as u64;
            match prim {
                Read => assert_eq!(file.read(p, reg).as_int(), content),
                Write => {
                    file.write(p, reg, Payload::Int(value));
                    changes += 1;
                    content = value;
                }
                Ll => {
                    assert_eq!(file.ll(p, reg).as_int(), content);
                    reserved[p] = Some(changes);
                }
                Sc => {
                    let expected = reserved[p].take() == Some(changes);
                    let actual = file.sc(p, reg, Payload::Int(value));
                    assert_eq!(
                        actual, expected,
                        "sc semantics deviate for scripts {scripts:?} order {order:?}"
                    );
                    checks += 1;
                    if actual {
                        changes += 1;
                        content = value;
                    }
                }
            }
        }
        checks
    }

    // All interleavings of the given scripts, up to `cap` steps total.
    fn interleavings(lens: &[usize], cap: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..cap {
            let mut next = Vec::new();
            for order in &out {
                for (p, &len) in lens.iter().enumerate() {
                    let taken = order.iter().filter(|&&q| q == p).count();
                    if taken < len {
                        let mut o = order.clone();
                        o.push(p);
                        next.push(o);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            out.extend(next);
        }
        out
    }

    let mut sc_checks = 0u64;
    let mut executions = 0u64;

    // Two processes, scripts up to three primitives (six steps total).
    let all3 = scripts(3);
    for a in &all3 {
        for b in &all3 {
            for order in interleavings(&[a.len(), b.len()], 6) {
                if order.is_empty() {
                    continue;
                }
                sc_checks += run(&[a, b], &order);
                executions += 1;
            }
        }
    }

    // Three processes, scripts up to two primitives (six steps total).
    let all2 = scripts(2);
    for a in &all2 {
        for b in &all2 {
            for c in &all2 {
                for order in interleavings(&[a.len(), b.len(), c.len()], 6) {
                    if order.is_empty() {
                        continue;
                    }
                    sc_checks += run(&[a, b, c], &order);
                    executions += 1;
                }
            }
        }
    }

    assert!(sc_checks > 100_000, "exhaustive sweep unexpectedly small: {sc_checks}");
    pass(
        "criterion 8 (LL/SC emulation)",
        format!("{executions} executions, {sc_checks} SC outcomes, zero deviations"),
    );
}

/// Criterion 9: bench liveness and a linearizable sampled history.
#[test]
fn criterion_9_bench_liveness() {
    let config = BenchConfig {
        object: ObjectKind::Lsnap,
        m: 4,
        lambda: 2,
        updaters: 4,
        duration: Duration::from_secs(1),
        seed: 12345,
        sample_ops: 8,
        include_partial: true,
    };
    let outcome = bench::run(&config);
    for kind in ["update", "scan", "partial_scan"] {
        let completed = outcome.completed.get(kind).copied().unwrap_or(0);
        assert!(completed > 0, "no {kind} operations completed");
        assert!(outcome.throughput[kind] > 0.0);
    }
    assert!(outcome.totals_consistent, "instrumented totals disagree with per-op counts");
    assert!(outcome.sample_linearizable, "sampled history failed the checker");
    assert!(outcome.sample_ops > 0);
    pass(
        "criterion 9 (bench liveness)",
        format!(
            "update {:.0}/s, scan {:.0}/s, partial {:.0}/s; sample of {} ops linearizable",
            outcome.throughput["update"],
            outcome.throughput["scan"],
            outcome.throughput["partial_scan"],
            outcome.sample_ops
        ),
    );
}

// ---------------------------------------------------------------------------

fn bundled_scenarios() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// The golden fixture loads, checks linearizable, and replays losslessly.
#[test]
fn golden_fixture_round_trip() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/golden_updates_vs_scan.jsonl");
    let history = History::load_path(&path).unwrap();
    assert_eq!(history.len(), 6);
    assert!(check(&history).linearizable);
    let mut buf = Vec::new();
    history.save(&mut buf).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().trim(), text.trim());
}

/// Bundled scenarios replay deterministically end to end.
#[test]
fn bundled_scenarios_validate_and_replay() {
    let dir = bundled_scenarios();
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let scenario = Scenario::load_path(&path).unwrap();
        let report = stress(&scenario, 1, 50).unwrap();
        assert!(report.violations.is_empty(), "{}: {:?}", path.display(), report.violations.first());
        count += 1;
    }
    assert!(count >= 7, "expected the bundled scenario set, found {count}");

    // Any single schedule replays to the same histories and registers.
    let scenario = Scenario::load_path(dir.join("lsnap_basic.json")).unwrap();
    let world_schedule = {
        use rand_core::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut world = lambda_snap::explore::World::new(&scenario).unwrap();
        let mut schedule = Vec::new();
        loop {
            let ready = world.ready();
            if ready.is_empty() {
                break;
            }
            let p = ready[(rng.next_u32() as usize) % ready.len()];
            schedule.push(p);
            world.step(p).unwrap();
        }
        schedule
    };
    let a = replay(&scenario, &world_schedule).unwrap();
    let b = replay(&scenario, &world_schedule).unwrap();
    assert_eq!(a.registers, b.registers);
    assert_eq!(a.history.events(), b.history.events());
}

/// For lambda = 1 the lambda object is checked against the same sequential
/// oracle as the single-scanner object (same semantics, different code).
#[test]
fn degenerate_lambda_matches_snap1_semantics() {
    for object in [ObjectKind::Snap1, ObjectKind::Lsnap] {
        let scenario = Scenario {
            object,
            m: 2,
            scanners: vec![2],
            scripts: vec![
                vec![update(0, 5), update(1, 7)],
                vec![update(0, 9)],
                vec![ScriptOp::Scan, ScriptOp::PartialScan { components: vec![0] }],
            ],
        };
        let report = stress(&scenario, 7, 1_500).unwrap();
        assert!(report.violations.is_empty(), "{object:?}: {:?}", report.violations.first());
    }
    pass("degenerate lambda equivalence", "lambda=1 histories pass the shared oracle".into());
}

/// Two fully overlapping scans with no updates both return all-bottom
/// views, across every explored interleaving.
#[test]
fn lsnap_overlapping_scans_on_fresh_object_see_bottom() {
    let scenario = Scenario {
        object: ObjectKind::Lsnap,
        m: 2,
        scanners: vec![0, 1],
        scripts: vec![vec![ScriptOp::Scan], vec![ScriptOp::Scan]],
    };
    let bounds = Bounds { branch_steps: Some(10), ..Bounds::default() };
    let report = enumerate(&scenario, &bounds).unwrap();
    assert_clean(&report, "two scans, no updates");
    // With no updates in the history, the checker only accepts all-bottom
    // views, so a clean report is exactly the property claimed. Double-check
    // one replayed interleaving directly.
    let outcome = replay(&scenario, &{
        let mut world = lambda_snap::explore::World::new(&scenario).unwrap();
        let mut schedule = Vec::new();
        loop {
            let ready = world.ready();
            if ready.is_empty() {
                break;
            }
            let p = *ready.last().unwrap();
            schedule.push(p);
            world.step(p).unwrap();
        }
        schedule
    })
    .unwrap();
    for event in outcome.history.events() {
        if let Some(lambda_snap::oracle::OpResult::View(view)) = &event.result {
            assert_eq!(view, &vec![None, None]);
        }
    }
}

/// Seq-advance and announce-resolution invariants are monitored on every
/// explored schedule; a run with scans proves the monitors are active.
#[test]
fn lsnap_scan_monitors_are_exercised() {
    let scenario = Scenario {
        object: ObjectKind::Lsnap,
        m: 1,
        scanners: vec![1, 2],
        scripts: vec![vec![update(0, 5)], vec![ScriptOp::Scan], vec![ScriptOp::Scan]],
    };
    let bounds = Bounds { branch_steps: Some(8), ..Bounds::default() };
    let report = enumerate(&scenario, &bounds).unwrap();
    assert_clean(&report, "lsnap monitors");
    assert!(report.max_steps_per_op["scan"] >= 1);
}
