//! Native-backend load generation.
//!
//! Two phases: a timed throughput phase over real threads (updaters spread
//! uniformly over components, scanners loop), then a short recorded phase
//! on a fresh object whose complete history is checked for linearizability.
//! Recording the full 1-second run would make the check intractable and
//! recording a mid-run window would orphan values written by unrecorded
//! operations, so the correctness sample is its own bounded run.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::explore::ObjectKind;
use crate::histories::{check, OpArgs, OpLabel, SharedRecorder};
use crate::lsnap::{LambdaConfig, LambdaLayout, LambdaScanner, LambdaSnap, LambdaUpdater};
use crate::oracle::OpResult;
use crate::shmem::{AccessCounter, InstrumentedFile, NativeFile, OpKind, Value, PRIMITIVE_KINDS};
use crate::snap1::{Snap1, Snap1Layout, Snap1Scanner, Snap1Updater, SnapConfig};

type File = InstrumentedFile<NativeFile>;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub object: ObjectKind,
    pub m: usize,
    /// Scanner count; must be 1 for the single-scanner object.
    pub lambda: usize,
    pub updaters: usize,
    pub duration: Duration,
    pub seed: u64,
    /// Ops per thread in the recorded correctness sample.
    pub sample_ops: usize,
    /// Scanners alternate full and partial scans.
    pub include_partial: bool,
}

impl BenchConfig {
    pub fn processes(&self) -> usize {
        self.updaters + self.lambda
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    pub max: u64,
}

fn percentiles(counts: &mut Vec<u64>) -> Percentiles {
    if counts.is_empty() {
        return Percentiles::default();
    }
    counts.sort_unstable();
    let at = |q: usize| counts[(counts.len() - 1) * q / 100];
    Percentiles { p50: at(50), p90: at(90), p99: at(99), max: *counts.last().unwrap() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub completed: BTreeMap<String, u64>,
    pub throughput: BTreeMap<String, f64>,
    pub access_counts: BTreeMap<String, Percentiles>,
    /// Per-op access sums agree with the instrumented backend totals.
    pub totals_consistent: bool,
    pub elapsed_secs: f64,
    pub sample_ops: usize,
    pub sample_linearizable: bool,
}

enum Updater {
    S1(Snap1Updater<File>),
    L(LambdaUpdater<File>),
}

impl Updater {
    fn update(&mut self, j: usize, v: Value) -> u64 {
        match self {
            Updater::S1(h) => h.update(j, v),
            Updater::L(h) => h.update(j, v),
        }
    }
}

enum Scanner {
    S1(Snap1Scanner<File>),
    L(LambdaScanner<File>),
}

impl Scanner {
    fn scan(&mut self) -> (Vec<Option<Value>>, u64) {
        match self {
            Scanner::S1(h) => h.scan(),
            Scanner::L(h) => h.scan(),
        }
    }

    fn partial_scan(&mut self, components: &[usize]) -> (Vec<(usize, Option<Value>)>, u64) {
        match self {
            Scanner::S1(h) => h.partial_scan(components),
            Scanner::L(h) => h.partial_scan(components),
        }
    }
}

struct Objects {
    file: Arc<File>,
    updaters: Vec<Updater>,
    scanners: Vec<Scanner>,
}

fn build(config: &BenchConfig) -> Objects {
    let n = config.processes();
    match config.object {
        ObjectKind::Snap1 => {
            assert_eq!(config.lambda, 1, "snap1 runs with exactly one scanner");
            let snap_config = SnapConfig::new(config.m, n, config.updaters);
            let mut file = InstrumentedFile::new(NativeFile::new(n), n);
            let layout = Snap1Layout::allocate(&mut file, config.m);
            let obj = Snap1::from_parts(Arc::new(file), layout, snap_config);
            Objects {
                file: Arc::clone(obj.file()),
                updaters: (0..config.updaters).map(|p| Updater::S1(obj.updater(p))).collect(),
                scanners: vec![Scanner::S1(obj.scanner())],
            }
        }
        ObjectKind::Lsnap => {
            let scanner_ids: Vec<usize> = (config.updaters..n).collect();
            let lambda_config = LambdaConfig::new(config.m, n, scanner_ids);
            let mut file = InstrumentedFile::new(NativeFile::new(n), n);
            let layout = LambdaLayout::allocate(&mut file, config.m, config.lambda);
            let obj = LambdaSnap::from_parts(Arc::new(file), layout, lambda_config);
            Objects {
                file: Arc::clone(obj.file()),
                updaters: (0..config.updaters).map(|p| Updater::L(obj.updater(p))).collect(),
                scanners: (0..config.lambda).map(|r| Scanner::L(obj.scanner(r))).collect(),
            }
        }
    }
}

/// Splitmix-style value stream, cheap and deterministic per thread.
struct ValueStream(u64);

impl ValueStream {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0
    }
}

fn total_by_kind(counters: &AccessCounter, processes: usize, op: OpKind) -> u64 {
    (0..processes)
        .flat_map(|p| PRIMITIVE_KINDS.iter().map(move |prim| counters.get(p, op, *prim)))
        .sum()
}

/// Runs the two bench phases. Panics on misconfiguration (scanner counts,
/// zero threads); measurement noise aside, results are reproducible from
/// the seed and config.
pub fn run(config: &BenchConfig) -> BenchOutcome {
    assert!(config.updaters >= 1, "need at least one updater");
    assert!(config.lambda >= 1, "need at least one scanner");
    assert!(config.sample_ops * config.processes() <= 128, "sample exceeds checker capacity");

    // Phase 1: timed throughput.
    let objects = build(config);
    let stop = Arc::new(AtomicBool::new(false));
    let start = Instant::now();
    let mut per_kind: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    per_kind.insert("update".into(), Vec::new());
    per_kind.insert("scan".into(), Vec::new());
    if config.include_partial {
        per_kind.insert("partial_scan".into(), Vec::new());
    }
    enum ThreadCounts {
        Updates(Vec<u64>),
        Scans { full: Vec<u64>, partial: Vec<u64> },
    }
    std::thread::scope(|scope| {
        let mut tasks = Vec::new();
        for (i, mut updater) in objects.updaters.into_iter().enumerate() {
            let stop = Arc::clone(&stop);
            let m = config.m;
            let mut values = ValueStream(config.seed ^ ((i as u64) << 32));
            tasks.push(scope.spawn(move || {
                let mut counts = Vec::new();
                let mut k = 0usize;
                while !stop.load(Ordering::Relaxed) {
                    let v = values.next();
                    counts.push(updater.update(k % m, v));
                    k += 1;
                }
                ThreadCounts::Updates(counts)
            }));
        }
        for (i, mut scanner) in objects.scanners.into_iter().enumerate() {
            let stop = Arc::clone(&stop);
            let m = config.m;
            let include_partial = config.include_partial;
            tasks.push(scope.spawn(move || {
                let mut full = Vec::new();
                let mut partial = Vec::new();
                let mut k = i;
                while !stop.load(Ordering::Relaxed) {
                    if include_partial && k % 2 == 1 {
                        partial.push(scanner.partial_scan(&[k % m]).1);
                    } else {
                        full.push(scanner.scan().1);
                    }
                    k += 1;
                }
                ThreadCounts::Scans { full, partial }
            }));
        }
        std::thread::sleep(config.duration);
        stop.store(true, Ordering::Relaxed);
        for task in tasks {
            match task.join().expect("bench thread panicked") {
                ThreadCounts::Updates(counts) => {
                    per_kind.get_mut("update").unwrap().extend(counts)
                }
                ThreadCounts::Scans { full, partial } => {
                    per_kind.get_mut("scan").unwrap().extend(full);
                    if config.include_partial {
                        per_kind.get_mut("partial_scan").unwrap().extend(partial);
                    }
                }
            }
        }
    });
    let elapsed = start.elapsed().as_secs_f64();

    let counters = objects.file.snapshot_counters();
    let processes = config.processes();
    let mut completed = BTreeMap::new();
    let mut throughput = BTreeMap::new();
    let mut access_counts = BTreeMap::new();
    let mut totals_consistent = true;
    for (label, counts) in per_kind.iter_mut() {
        completed.insert(label.clone(), counts.len() as u64);
        throughput.insert(label.clone(), counts.len() as f64 / elapsed);
        let summed: u64 = counts.iter().sum();
        let op_kind = match label.as_str() {
            "update" => OpKind::Update,
            "scan" => OpKind::Scan,
            _ => OpKind::PartialScan,
        };
        if summed != total_by_kind(&counters, processes, op_kind) {
            totals_consistent = false;
        }
        access_counts.insert(label.clone(), percentiles(counts));
    }

    // Phase 2: recorded correctness sample on a fresh object.
    let (sample_ops, sample_linearizable) = run_sample(config);

    BenchOutcome {
        completed,
        throughput,
        access_counts,
        totals_consistent,
        elapsed_secs: elapsed,
        sample_ops,
        sample_linearizable,
    }
}

fn run_sample(config: &BenchConfig) -> (usize, bool) {
    let objects = build(config);
    let recorder = Arc::new(SharedRecorder::new());
    std::thread::scope(|scope| {
        for (i, mut updater) in objects.updaters.into_iter().enumerate() {
            let recorder = Arc::clone(&recorder);
            let m = config.m;
            let ops = config.sample_ops;
            scope.spawn(move || {
                let process = i;
                for k in 0..ops {
                    let j = k % m;
                    let v = ((process as u64) << 40) | k as u64;
                    recorder.invoke(process, OpLabel::Update, Some(OpArgs::Update { component: j, value: v }));
                    updater.update(j, v);
                    recorder.response(process, OpResult::Unit);
                }
            });
        }
        for (r, mut scanner) in objects.scanners.into_iter().enumerate() {
            let recorder = Arc::clone(&recorder);
            let m = config.m;
            let ops = config.sample_ops;
            let include_partial = config.include_partial;
            let process = config.updaters + r;
            scope.spawn(move || {
                for k in 0..ops {
                    if include_partial && k % 2 == 1 {
                        let components = vec![k % m];
                        recorder.invoke(
                            process,
                            OpLabel::PartialScan,
                            Some(OpArgs::Partial { components: components.clone() }),
                        );
                        let (entries, _) = scanner.partial_scan(&components);
                        recorder.response(process, OpResult::Entries(entries));
                    } else {
                        recorder.invoke(process, OpLabel::Scan, None);
                        let (view, _) = scanner.scan();
                        recorder.response(process, OpResult::View(view));
                    }
                }
            });
        }
    });
    let history = recorder.snapshot();
    let ops = history.len() / 2;
    (ops, check(&history).linearizable)
}

/// Space accounting for the allocated object kinds, used by reports.
pub fn allocated_space(object: ObjectKind, m: usize, lambda: usize) -> crate::shmem::SpaceUsage {
    match object {
        ObjectKind::Snap1 => Snap1Layout::expected_space(m),
        ObjectKind::Lsnap => LambdaLayout::expected_space(m, lambda),
    }
}
