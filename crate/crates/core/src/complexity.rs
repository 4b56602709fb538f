//! Instrumented solo-run access counting and exact shape checks.
//!
//! Solo runs on the simulated backend are deterministic, so the measured
//! counts must fit their expected shapes exactly: constants stay equal
//! across the sweep and affine/bilinear fits have zero residual.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::explore::ObjectKind;
use crate::lsnap::{LambdaConfig, LambdaLayout, LambdaSnap};
use crate::shmem::{InstrumentedFile, SimulatedFile};
use crate::snap1::{Snap1, Snap1Layout, SnapConfig};

/// One solo measurement point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Measurement {
    pub object: ObjectKind,
    pub op: String,
    pub m: usize,
    pub lambda: usize,
    pub r: usize,
    pub n: usize,
    pub accesses: u64,
}

/// One checked shape property.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Finding {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub measurements: Vec<Measurement>,
    pub findings: Vec<Finding>,
    pub ok: bool,
}

/// Sweep grid. Defaults cover the shapes the objects promise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub object: ObjectKind,
    pub m_values: Vec<usize>,
    pub lambda_values: Vec<usize>,
    pub r_values: Vec<usize>,
    pub n_values: Vec<usize>,
}

impl SweepConfig {
    pub fn defaults(object: ObjectKind) -> Self {
        Self {
            object,
            m_values: vec![1, 2, 8, 64],
            lambda_values: vec![1, 2, 4],
            r_values: vec![0, 1, 2, 4],
            n_values: vec![2, 4, 8],
        }
    }
}

enum SoloOp<'a> {
    Update,
    Scan,
    Partial(&'a [usize]),
}

/// Access count of one operation on a fresh, otherwise idle object, with
/// the returned count cross-checked against the instrumented totals.
fn measure_solo(object: ObjectKind, m: usize, lambda: usize, n: usize, op: &SoloOp) -> u64 {
    match object {
        ObjectKind::Snap1 => {
            let scanner = n - 1;
            let config = SnapConfig::new(m, n, scanner);
            let mut file = InstrumentedFile::new(SimulatedFile::new(), n);
            let layout = Snap1Layout::allocate(&mut file, m);
            let obj = Snap1::from_parts(Arc::new(file), layout, config);
            let steps = match op {
                SoloOp::Update => obj.updater(0).update(0, 5),
                SoloOp::Scan => obj.scanner().scan().1,
                SoloOp::Partial(components) => obj.scanner().partial_scan(components).1,
            };
            assert_eq!(steps, obj.file().snapshot_counters().total(), "driver/instrumentation disagree");
            steps
        }
        ObjectKind::Lsnap => {
            let scanners: Vec<usize> = (n - lambda..n).collect();
            let config = LambdaConfig::new(m, n, scanners);
            let mut file = InstrumentedFile::new(SimulatedFile::new(), n);
            let layout = LambdaLayout::allocate(&mut file, m, lambda);
            let obj = LambdaSnap::from_parts(Arc::new(file), layout, config);
            let steps = match op {
                SoloOp::Update => obj.updater(0).update(0, 5),
                SoloOp::Scan => obj.scanner(0).scan().1,
                SoloOp::Partial(components) => obj.scanner(0).partial_scan(components).1,
            };
            assert_eq!(steps, obj.file().snapshot_counters().total(), "driver/instrumentation disagree");
            steps
        }
    }
}

/// Exact affine fit `y = a + b*x`; `None` when the points do not fit.
pub fn affine_fit_exact(points: &[(i64, i64)]) -> Option<(i64, i64)> {
    assert!(points.len() >= 2, "need two points for a line");
    let (x0, y0) = points[0];
    let (x1, y1) = points.iter().copied().find(|&(x, _)| x != x0)?;
    let num = y1 - y0;
    let den = x1 - x0;
    if num % den != 0 {
        return None;
    }
    let b = num / den;
    let a = y0 - b * x0;
    points.iter().all(|&(x, y)| y == a + b * x).then_some((a, b))
}

/// Exact bilinear fit `y = a + b*x1 + c*x2 + d*x1*x2` over a full grid.
pub fn bilinear_fit_exact(points: &[(i64, i64, i64)]) -> Option<(i64, i64, i64, i64)> {
    let mut x1s: Vec<i64> = points.iter().map(|p| p.0).collect();
    let mut x2s: Vec<i64> = points.iter().map(|p| p.1).collect();
    x1s.sort_unstable();
    x1s.dedup();
    x2s.sort_unstable();
    x2s.dedup();
    if x1s.len() < 2 || x2s.len() < 2 {
        return None;
    }
    let lookup = |x1: i64, x2: i64| points.iter().find(|p| p.0 == x1 && p.1 == x2).map(|p| p.2);
    let (u0, u1, v0, v1) = (x1s[0], x1s[1], x2s[0], x2s[1]);
    let y00 = lookup(u0, v0)?;
    let y01 = lookup(u0, v1)?;
    let y10 = lookup(u1, v0)?;
    let y11 = lookup(u1, v1)?;
    let dd = (y11 - y10 - y01 + y00, (u1 - u0) * (v1 - v0));
    if dd.0 % dd.1 != 0 {
        return None;
    }
    let d = dd.0 / dd.1;
    let cc = (y01 - y00, v1 - v0);
    if cc.0 % cc.1 != 0 {
        return None;
    }
    let c = cc.0 / cc.1 - d * u0;
    let bb = (y10 - y00, u1 - u0);
    if bb.0 % bb.1 != 0 {
        return None;
    }
    let b = bb.0 / bb.1 - d * v0;
    let a = y00 - b * u0 - c * v0 - d * u0 * v0;
    points
        .iter()
        .all(|&(x1, x2, y)| y == a + b * x1 + c * x2 + d * x1 * x2)
        .then_some((a, b, c, d))
}

struct Sweep {
    measurements: Vec<Measurement>,
    findings: Vec<Finding>,
}

impl Sweep {
    fn record(&mut self, object: ObjectKind, op: &str, m: usize, lambda: usize, r: usize, n: usize, accesses: u64) {
        self.measurements.push(Measurement {
            object,
            op: op.to_string(),
            m,
            lambda,
            r,
            n,
            accesses,
        });
    }

    fn finding(&mut self, name: &str, pass: bool, detail: String) {
        self.findings.push(Finding { name: name.to_string(), pass, detail });
    }

    fn check_constant(&mut self, name: &str, points: &BTreeMap<usize, u64>) {
        let mut values: Vec<u64> = points.values().copied().collect();
        values.dedup();
        let pass = values.len() == 1;
        self.finding(name, pass, format!("{points:?}"));
    }

    fn check_affine(&mut self, name: &str, points: &[(i64, i64)]) {
        match affine_fit_exact(points) {
            Some((a, b)) => self.finding(name, true, format!("y = {a} + {b}*x over {points:?}")),
            None => self.finding(name, false, format!("no exact affine fit over {points:?}")),
        }
    }

    fn check_bilinear(&mut self, name: &str, points: &[(i64, i64, i64)]) {
        match bilinear_fit_exact(points) {
            Some((a, b, c, d)) => {
                self.finding(name, true, format!("y = {a} + {b}*x1 + {c}*x2 + {d}*x1*x2 over {points:?}"))
            }
            None => self.finding(name, false, format!("no exact bilinear fit over {points:?}")),
        }
    }
}

/// Runs the sweep and checks every promised step-complexity shape.
pub fn run_sweep(config: &SweepConfig) -> ComplexityReport {
    let mut sweep = Sweep { measurements: Vec::new(), findings: Vec::new() };
    match config.object {
        ObjectKind::Snap1 => snap1_sweep(config, &mut sweep),
        ObjectKind::Lsnap => lsnap_sweep(config, &mut sweep),
    }
    let ok = sweep.findings.iter().all(|f| f.pass);
    ComplexityReport { measurements: sweep.measurements, findings: sweep.findings, ok }
}

fn snap1_sweep(config: &SweepConfig, sweep: &mut Sweep) {
    let object = ObjectKind::Snap1;
    let n = 2;

    let mut update_by_m = BTreeMap::new();
    let mut scan_by_m = Vec::new();
    for &m in &config.m_values {
        let u = measure_solo(object, m, 1, n, &SoloOp::Update);
        sweep.record(object, "update", m, 1, 0, n, u);
        update_by_m.insert(m, u);
        let s = measure_solo(object, m, 1, n, &SoloOp::Scan);
        sweep.record(object, "scan", m, 1, m, n, s);
        scan_by_m.push((m as i64, s as i64));
    }
    sweep.check_constant("snap1 update constant in m", &update_by_m);
    sweep.check_affine("snap1 scan affine in m", &scan_by_m);

    // Partial scans: affine in r at fixed m, and independent of m at fixed r.
    let m_fixed = config.m_values.iter().copied().max().unwrap_or(1).max(
        config.r_values.iter().copied().max().unwrap_or(1),
    );
    let mut partial_by_r = Vec::new();
    for &r in &config.r_values {
        let components: Vec<usize> = (0..r).collect();
        let p = measure_solo(object, m_fixed, 1, n, &SoloOp::Partial(&components));
        sweep.record(object, "partial_scan", m_fixed, 1, r, n, p);
        partial_by_r.push((r as i64, p as i64));
    }
    sweep.check_affine("snap1 partial_scan affine in r", &partial_by_r);

    let r_fixed = 1;
    let mut partial_by_m = BTreeMap::new();
    for &m in config.m_values.iter().filter(|&&m| m >= r_fixed) {
        let p = measure_solo(object, m, 1, n, &SoloOp::Partial(&[0]));
        sweep.record(object, "partial_scan", m, 1, r_fixed, n, p);
        partial_by_m.insert(m, p);
    }
    sweep.check_constant("snap1 partial_scan independent of m at fixed r", &partial_by_m);

    let mut scan_by_n = BTreeMap::new();
    for &n in &config.n_values {
        let s = measure_solo(object, 2, 1, n, &SoloOp::Scan);
        sweep.record(object, "scan", 2, 1, 2, n, s);
        scan_by_n.insert(n, s);
    }
    sweep.check_constant("snap1 scan independent of n", &scan_by_n);
}

fn lsnap_sweep(config: &SweepConfig, sweep: &mut Sweep) {
    let object = ObjectKind::Lsnap;

    let mut update_by_lambda = Vec::new();
    let mut update_by_m = BTreeMap::new();
    for &lambda in &config.lambda_values {
        let n = lambda + 1;
        let u = measure_solo(object, 2, lambda, n, &SoloOp::Update);
        sweep.record(object, "update", 2, lambda, 0, n, u);
        update_by_lambda.push((lambda as i64, u as i64));
    }
    for &m in &config.m_values {
        let u = measure_solo(object, m, 2, 3, &SoloOp::Update);
        sweep.record(object, "update", m, 2, 0, 3, u);
        update_by_m.insert(m, u);
    }
    sweep.check_affine("lsnap update affine in lambda", &update_by_lambda);
    sweep.check_constant("lsnap update constant in m", &update_by_m);

    let mut scan_grid = Vec::new();
    for &lambda in &config.lambda_values {
        for &m in &config.m_values {
            let n = lambda + 1;
            let s = measure_solo(object, m, lambda, n, &SoloOp::Scan);
            sweep.record(object, "scan", m, lambda, m, n, s);
            scan_grid.push((lambda as i64, m as i64, s as i64));
        }
    }
    sweep.check_bilinear("lsnap scan bilinear in (lambda, m)", &scan_grid);

    // Partial scans: bilinear in (lambda, r) and independent of m.
    let m_fixed = config.m_values.iter().copied().max().unwrap_or(1).max(
        config.r_values.iter().copied().max().unwrap_or(1),
    );
    let mut partial_grid = Vec::new();
    for &lambda in &config.lambda_values {
        for &r in &config.r_values {
            let components: Vec<usize> = (0..r).collect();
            let n = lambda + 1;
            let p = measure_solo(object, m_fixed, lambda, n, &SoloOp::Partial(&components));
            sweep.record(object, "partial_scan", m_fixed, lambda, r, n, p);
            partial_grid.push((lambda as i64, r as i64, p as i64));
        }
    }
    sweep.check_bilinear("lsnap partial_scan bilinear in (lambda, r)", &partial_grid);

    let mut partial_by_m = BTreeMap::new();
    for &m in config.m_values.iter().filter(|&&m| m >= 1) {
        let p = measure_solo(object, m, 2, 3, &SoloOp::Partial(&[0]));
        sweep.record(object, "partial_scan", m, 2, 1, 3, p);
        partial_by_m.insert(m, p);
    }
    sweep.check_constant("lsnap partial_scan independent of m at fixed (lambda, r)", &partial_by_m);

    let mut scan_by_n = BTreeMap::new();
    for &n in config.n_values.iter().filter(|&&n| n >= 3) {
        let s = measure_solo(object, 2, 2, n, &SoloOp::Scan);
        sweep.record(object, "scan", 2, 2, 2, n, s);
        scan_by_n.insert(n, s);
    }
    sweep.check_constant("lsnap scan independent of n", &scan_by_n);
}
