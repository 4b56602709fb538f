//! Python bindings: the two snapshot objects over the native backend, the
//! linearizability checker, and the schedule explorer.
//!
//! Operations release the GIL while they touch shared memory, so Python
//! threads produce genuine interleavings on the native atomics.

use std::collections::BTreeMap;
use std::sync::Mutex;

use pyo3::exceptions::{PyValueError, PyIOError};
use pyo3::prelude::*;

use lambda_snap::explore::{self, Bounds, Scenario};
use lambda_snap::histories::{check, History};
use lambda_snap::lsnap::{LambdaConfig, LambdaScanner, LambdaSnap as LambdaSnapObj, LambdaUpdater};
use lambda_snap::shmem::NativeFile;
use lambda_snap::snap1::{Snap1 as Snap1Obj, Snap1Scanner, Snap1Updater, SnapConfig};

fn value_err(msg: String) -> PyErr {
    PyValueError::new_err(msg)
}

/// Single-scanner snapshot over hardware atomics.
#[pyclass(name = "Snap1")]
struct Snap1Py {
    m: usize,
    n: usize,
    scanner_id: usize,
    updaters: Vec<Mutex<Snap1Updater<NativeFile>>>,
    scanner: Mutex<Snap1Scanner<NativeFile>>,
}

#[pymethods]
impl Snap1Py {
    /// Snap1(m, processes, scanner): m components, process ids 0..processes,
    /// one designated scanner id.
    #[new]
    fn new(m: usize, processes: usize, scanner: usize) -> PyResult<Self> {
        if m < 1 || processes < 1 || scanner >= processes {
            return Err(value_err(format!(
                "bad config: m={m}, processes={processes}, scanner={scanner}"
            )));
        }
        let obj = Snap1Obj::native(SnapConfig::new(m, processes, scanner));
        Ok(Self {
            m,
            n: processes,
            scanner_id: scanner,
            updaters: (0..processes).map(|p| Mutex::new(obj.updater(p))).collect(),
            scanner: Mutex::new(obj.scanner()),
        })
    }

    #[getter]
    fn m(&self) -> usize {
        self.m
    }

    #[getter]
    fn processes(&self) -> usize {
        self.n
    }

    #[getter]
    fn scanner_id(&self) -> usize {
        self.scanner_id
    }

    /// Write `value` to `component` as `process`. Returns the number of
    /// shared-memory accesses it took.
    fn update(&self, py: Python<'_>, process: usize, component: usize, value: u64) -> PyResult<u64> {
        let handle = self
            .updaters
            .get(process)
            .ok_or_else(|| value_err(format!("process {process} out of range")))?;
        if component >= self.m {
            return Err(value_err(format!("component {component} out of range")));
        }
        Ok(py.detach(|| handle.lock().unwrap().update(component, value)))
    }

    /// Consistent view of all components (None encodes an empty slot).
    fn scan(&self, py: Python<'_>) -> Vec<Option<u64>> {
        py.detach(|| self.scanner.lock().unwrap().scan().0)
    }

    /// Consistent view restricted to `components`, as a dict.
    fn partial_scan(&self, py: Python<'_>, components: Vec<usize>) -> PyResult<BTreeMap<usize, Option<u64>>> {
        if let Some(&j) = components.iter().find(|&&j| j >= self.m) {
            return Err(value_err(format!("component {j} out of range")));
        }
        let entries = py.detach(|| self.scanner.lock().unwrap().partial_scan(&components).0);
        Ok(entries.into_iter().collect())
    }

    /// Helping step (internal machinery, exposed for experiments).
    fn apply_update(&self, py: Python<'_>, process: usize, component: usize) -> PyResult<u64> {
        let handle = self
            .updaters
            .get(process)
            .ok_or_else(|| value_err(format!("process {process} out of range")))?;
        if component >= self.m {
            return Err(value_err(format!("component {component} out of range")));
        }
        Ok(py.detach(|| handle.lock().unwrap().apply_update(component)))
    }
}

/// Lambda-scanner snapshot over hardware atomics.
#[pyclass(name = "LambdaSnap")]
struct LambdaSnapPy {
    m: usize,
    n: usize,
    scanner_ids: Vec<usize>,
    updaters: Vec<Mutex<LambdaUpdater<NativeFile>>>,
    scanners: Vec<Mutex<LambdaScanner<NativeFile>>>,
}

#[pymethods]
impl LambdaSnapPy {
    /// LambdaSnap(m, processes, scanners): scanners lists the process ids
    /// allowed to scan; its length is lambda and positions are ranks.
    #[new]
    fn new(m: usize, processes: usize, scanners: Vec<usize>) -> PyResult<Self> {
        if m < 1 || processes < 1 || scanners.is_empty() {
            return Err(value_err(format!(
                "bad config: m={m}, processes={processes}, scanners={scanners:?}"
            )));
        }
        let mut distinct = scanners.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != scanners.len() || scanners.iter().any(|&s| s >= processes) {
            return Err(value_err(format!("bad scanner set {scanners:?} for {processes} processes")));
        }
        let obj = LambdaSnapObj::native(LambdaConfig::new(m, processes, scanners.clone()));
        Ok(Self {
            m,
            n: processes,
            scanner_ids: scanners.clone(),
            updaters: (0..processes).map(|p| Mutex::new(obj.updater(p))).collect(),
            scanners: (0..scanners.len()).map(|r| Mutex::new(obj.scanner(r))).collect(),
        })
    }

    #[getter]
    fn m(&self) -> usize {
        self.m
    }

    #[getter]
    fn processes(&self) -> usize {
        self.n
    }

    #[getter]
    fn scanner_count(&self) -> usize {
        self.scanner_ids.len()
    }

    #[getter]
    fn scanner_ids(&self) -> Vec<usize> {
        self.scanner_ids.clone()
    }

    fn update(&self, py: Python<'_>, process: usize, component: usize, value: u64) -> PyResult<u64> {
        let handle = self
            .updaters
            .get(process)
            .ok_or_else(|| value_err(format!("process {process} out of range")))?;
        if component >= self.m {
            return Err(value_err(format!("component {component} out of range")));
        }
        Ok(py.detach(|| handle.lock().unwrap().update(component, value)))
    }

    /// Scan through the scanner with this rank.
    fn scan(&self, py: Python<'_>, rank: usize) -> PyResult<Vec<Option<u64>>> {
        let handle = self
            .scanners
            .get(rank)
            .ok_or_else(|| value_err(format!("scanner rank {rank} out of range")))?;
        Ok(py.detach(|| handle.lock().unwrap().scan().0))
    }

    fn partial_scan(
        &self,
        py: Python<'_>,
        rank: usize,
        components: Vec<usize>,
    ) -> PyResult<BTreeMap<usize, Option<u64>>> {
        let handle = self
            .scanners
            .get(rank)
            .ok_or_else(|| value_err(format!("scanner rank {rank} out of range")))?;
        if let Some(&j) = components.iter().find(|&&j| j >= self.m) {
            return Err(value_err(format!("component {j} out of range")));
        }
        let entries = py.detach(|| handle.lock().unwrap().partial_scan(&components).0);
        Ok(entries.into_iter().collect())
    }
}

fn parse_scenario(json: &str) -> PyResult<Scenario> {
    Scenario::from_json(json).map_err(|e| value_err(e.to_string()))
}

fn report_to_json(report: &explore::ExploreReport) -> String {
    serde_json::to_string(report).expect("report serializes")
}

/// Exhaustively enumerate schedules of a scenario (JSON text) and check
/// every history. Returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (scenario_json, max_steps=None, branch_steps=None, max_schedules=None))]
fn enumerate_scenario(
    py: Python<'_>,
    scenario_json: &str,
    max_steps: Option<u64>,
    branch_steps: Option<u64>,
    max_schedules: Option<u64>,
) -> PyResult<String> {
    let scenario = parse_scenario(scenario_json)?;
    let bounds = Bounds { max_steps, branch_steps, max_schedules };
    let report = py
        .detach(|| explore::enumerate(&scenario, &bounds))
        .map_err(|e| value_err(e.to_string()))?;
    Ok(report_to_json(&report))
}

/// Seeded random schedules; reproducible from (scenario, seed).
#[pyfunction]
fn stress_scenario(py: Python<'_>, scenario_json: &str, seed: u64, iterations: u64) -> PyResult<String> {
    let scenario = parse_scenario(scenario_json)?;
    let report = py
        .detach(|| explore::stress(&scenario, seed, iterations))
        .map_err(|e| value_err(e.to_string()))?;
    Ok(report_to_json(&report))
}

/// Replay one schedule (list of process ids). Returns
/// (linearizable, complete, history_jsonl).
#[pyfunction]
fn replay_schedule(py: Python<'_>, scenario_json: &str, schedule: Vec<usize>) -> PyResult<(bool, bool, String)> {
    let scenario = parse_scenario(scenario_json)?;
    let outcome = py
        .detach(|| explore::replay(&scenario, &schedule))
        .map_err(|e| value_err(e.to_string()))?;
    let mut buf = Vec::new();
    outcome.history.save(&mut buf).map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok((
        outcome.verdict.linearizable && outcome.invariant_violation.is_none(),
        outcome.complete,
        String::from_utf8(buf).expect("history text is UTF-8"),
    ))
}

/// Check a history in the line format. Returns (linearizable, witness).
#[pyfunction]
fn check_history_text(py: Python<'_>, text: &str) -> PyResult<(bool, Option<Vec<usize>>)> {
    let history = History::load(text.as_bytes()).map_err(|e| value_err(e.to_string()))?;
    let verdict = py.detach(|| check(&history));
    Ok((verdict.linearizable, verdict.witness))
}

/// Check a history file. Returns (linearizable, witness).
#[pyfunction]
fn check_history_file(py: Python<'_>, path: &str) -> PyResult<(bool, Option<Vec<usize>>)> {
    let history = History::load_path(path).map_err(|e| value_err(e.to_string()))?;
    let verdict = py.detach(|| check(&history));
    Ok((verdict.linearizable, verdict.witness))
}

#[pymodule]
fn lsnap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Snap1Py>()?;
    m.add_class::<LambdaSnapPy>()?;
    m.add_function(wrap_pyfunction!(enumerate_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(stress_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(replay_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(check_history_text, m)?)?;
    m.add_function(wrap_pyfunction!(check_history_file, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
