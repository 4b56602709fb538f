//! Command-line front door: exhaustive suites, stress runs, complexity
//! measurements and native-thread benchmarks, each emitting one JSON report
//! per run.
//!
//! Exit codes are a stable contract: 0 success, 1 property violation,
//! 2 usage or I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lambda_snap::bench::{self, BenchConfig};
use lambda_snap::complexity::{run_sweep, SweepConfig};
use lambda_snap::explore::{enumerate, stress, Bounds, ExploreReport, ObjectKind, SavedSchedule, Scenario};

#[derive(Parser)]
#[command(name = "lsnap", version, about = "snapshot-object exploration and benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum ObjectArg {
    Snap1,
    Lsnap,
}

impl From<ObjectArg> for ObjectKind {
    fn from(value: ObjectArg) -> Self {
        match value {
            ObjectArg::Snap1 => ObjectKind::Snap1,
            ObjectArg::Lsnap => ObjectKind::Lsnap,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exhaustively enumerate schedules of a scenario and check every one.
    Check {
        /// Scenario file (JSON).
        scenario: PathBuf,
        /// Hard cap on steps per schedule; pending ops are closed by the
        /// checker's completion rule.
        #[arg(long)]
        max_steps: Option<u64>,
        /// Exhaustive branching depth; branches continue deterministically
        /// beyond it.
        #[arg(long)]
        branch_steps: Option<u64>,
        /// Stop after this many schedules (reported as non-exhaustive).
        #[arg(long)]
        max_schedules: Option<u64>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded random schedules of a scenario.
    Stress {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        iterations: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure instrumented solo access counts over a sweep and verify the
    /// promised complexity shapes (exact integer fits).
    Complexity {
        #[arg(long, value_enum)]
        object: ObjectArg,
        /// Component counts to sweep (comma separated).
        #[arg(long, value_delimiter = ',')]
        m: Option<Vec<usize>>,
        /// Scanner counts to sweep (lsnap only).
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<usize>>,
        /// Partial-scan sizes to sweep.
        #[arg(long, value_delimiter = ',')]
        r: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Real-thread benchmark over the native backend, with a recorded and
    /// checked correctness sample.
    Bench {
        #[arg(long, value_enum, default_value = "lsnap")]
        object: ObjectArg,
        #[arg(long, default_value_t = 4)]
        m: usize,
        /// Scanner count (1 for snap1).
        #[arg(long, default_value_t = 2)]
        lambda: usize,
        #[arg(long, default_value_t = 4)]
        updaters: usize,
        /// Alias for --lambda; must agree with it when both are given.
        #[arg(long)]
        scanners: Option<usize>,
        /// Run length in seconds.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct RunHeader<'a> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct CheckReport<'a> {
    #[serde(flatten)]
    header: RunHeader<'a>,
    scenario_path: String,
    scenario: &'a Scenario,
    bounds: &'a Bounds,
    iterations: Option<u64>,
    warnings: &'a [String],
    report: &'a ExploreReport,
}

fn emit(report: &impl Serialize, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    println!("{text}");
    if let Some(path) = out {
        std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Counterexamples land next to the report (or in the working directory):
/// one scenario+schedule pair per violation, replayable with `check`-level
/// determinism.
fn save_counterexamples(
    scenario: &Scenario,
    report: &ExploreReport,
    out: Option<&Path>,
) -> anyhow::Result<Option<PathBuf>> {
    if report.violations.is_empty() {
        return Ok(None);
    }
    let path = match out {
        Some(p) => p.with_extension("counterexamples.json"),
        None => PathBuf::from("lsnap-counterexamples.json"),
    };
    let saved: Vec<SavedSchedule> = report
        .violations
        .iter()
        .map(|v| SavedSchedule { scenario: scenario.clone(), schedule: v.schedule.clone() })
        .collect();
    std::fs::write(&path, serde_json::to_string_pretty(&saved)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(Some(path))
}

fn explore_outcome(
    command: &'static str,
    scenario_path: &Path,
    scenario: &Scenario,
    bounds: &Bounds,
    seed: Option<u64>,
    iterations: Option<u64>,
    report: &ExploreReport,
    warnings: Vec<String>,
    out: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let doc = CheckReport {
        header: RunHeader { command, version: env!("CARGO_PKG_VERSION"), seed },
        scenario_path: scenario_path.display().to_string(),
        scenario,
        bounds,
        iterations,
        warnings: &warnings,
        report,
    };
    emit(&doc, out)?;
    if let Some(path) = save_counterexamples(scenario, report, out)? {
        eprintln!("counterexamples saved to {}", path.display());
    }
    Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Check { scenario: path, max_steps, branch_steps, max_schedules, out } => {
            let scenario = Scenario::load_path(&path).with_context(|| format!("loading {}", path.display()))?;
            let bounds = Bounds { max_steps, branch_steps, max_schedules };
            let mut warnings = Vec::new();
            if max_steps == Some(0) {
                warnings.push("--max-steps 0: exploration is empty and reported as truncated".to_string());
            }
            let report = enumerate(&scenario, &bounds)?;
            if report.truncated_runs > 0 {
                warnings.push(format!("{} schedules hit the step bound with work remaining", report.truncated_runs));
            }
            if !report.exhaustive {
                warnings.push("schedule budget exhausted: exploration is not exhaustive".to_string());
            }
            explore_outcome("check", &path, &scenario, &bounds, None, None, &report, warnings, out.as_deref())
        }
        Command::Stress { scenario: path, seed, iterations, out } => {
            let scenario = Scenario::load_path(&path).with_context(|| format!("loading {}", path.display()))?;
            let report = stress(&scenario, seed, iterations)?;
            explore_outcome(
                "stress",
                &path,
                &scenario,
                &Bounds::default(),
                Some(seed),
                Some(iterations),
                &report,
                Vec::new(),
                out.as_deref(),
            )
        }
        Command::Complexity { object, m, lambda, r, out } => {
            let mut sweep = SweepConfig::defaults(object.into());
            if let Some(m) = m {
                sweep.m_values = m;
            }
            if let Some(lambda) = lambda {
                sweep.lambda_values = lambda;
            }
            if let Some(r) = r {
                sweep.r_values = r;
            }
            let report = run_sweep(&sweep);
            #[derive(Serialize)]
            struct ComplexityDoc<'a> {
                #[serde(flatten)]
                header: RunHeader<'a>,
                sweep: &'a SweepConfig,
                report: &'a lambda_snap::complexity::ComplexityReport,
            }
            emit(
                &ComplexityDoc {
                    header: RunHeader { command: "complexity", version: env!("CARGO_PKG_VERSION"), seed: None },
                    sweep: &sweep,
                    report: &report,
                },
                out.as_deref(),
            )?;
            Ok(if report.ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Bench { object, m, lambda, updaters, scanners, duration, seed, out } => {
            if let Some(scanners) = scanners {
                anyhow::ensure!(scanners == lambda, "--scanners {scanners} disagrees with --lambda {lambda}");
            }
            let object: ObjectKind = object.into();
            anyhow::ensure!(
                object != ObjectKind::Snap1 || lambda == 1,
                "snap1 supports exactly one scanner handle; got {lambda}"
            );
            anyhow::ensure!(duration > 0.0, "--duration must be positive");
            let config = BenchConfig {
                object,
                m,
                lambda,
                updaters,
                duration: Duration::from_secs_f64(duration),
                seed,
                sample_ops: 8,
                include_partial: true,
            };
            let outcome = bench::run(&config);
            #[derive(Serialize)]
            struct BenchDoc<'a> {
                #[serde(flatten)]
                header: RunHeader<'a>,
                object: &'a str,
                m: usize,
                lambda: usize,
                updaters: usize,
                duration_secs: f64,
                registers_allocated: usize,
                outcome: &'a bench::BenchOutcome,
            }
            emit(
                &BenchDoc {
                    header: RunHeader { command: "bench", version: env!("CARGO_PKG_VERSION"), seed: Some(seed) },
                    object: object.as_str(),
                    m,
                    lambda,
                    updaters,
                    duration_secs: duration,
                    registers_allocated: bench::allocated_space(object, m, lambda).total(),
                    outcome: &outcome,
                },
                out.as_deref(),
            )?;
            let live = !outcome.completed.is_empty() && outcome.completed.values().all(|&c| c > 0);
            let ok = live && outcome.sample_linearizable && outcome.totals_consistent;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
