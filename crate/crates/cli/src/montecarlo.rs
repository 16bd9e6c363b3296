//! Seeded batches of generate, solve and validate.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use velsched_core::scenarios::{generate, ScenarioConfig};
use velsched_core::solver::solve;
use velsched_core::{SolveStatus, SolverConfig};

use crate::bundle::validate_report;
use crate::error::{CliError, Result};
use crate::io::{write_csv, write_json};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const TRIALS_DIR: &str = "trials";

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "VELSCHED_WORKERS";

/// Batch definition. Trial `k` uses seed `seed + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub scenario: ScenarioConfig,
    pub solver: SolverConfig,
    pub trials: usize,
    pub refinement: usize,
}

impl MonteCarloConfig {
    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.trials as u64).map(|k| self.scenario.seed + k)
    }
}

/// Solver status of a trial, or `error` when generation or evaluation failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Converged,
    MaxIter,
    InfeasibleInput,
    Error,
}

impl From<SolveStatus> for TrialStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Converged => TrialStatus::Converged,
            SolveStatus::MaxIter => TrialStatus::MaxIter,
            SolveStatus::InfeasibleInput => TrialStatus::InfeasibleInput,
        }
    }
}

/// Outcome of one trial; one row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub status: TrialStatus,
    pub iterations: usize,
    pub overhead: Option<f64>,
    pub min_distance: Option<f64>,
    /// Fine-grid check passed, counting sample slack and surrogate gap.
    pub safe: bool,
    pub d_safe: Option<f64>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn success(&self) -> bool {
        self.status == TrialStatus::Converged && self.safe
    }
}

/// Median and quartiles, linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Quartiles {
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
        })
    }
}

/// Contents of `aggregate.json`; a pure function of the trial records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub converged: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Over successful trials.
    pub iterations: Option<Quartiles>,
    /// Over successful trials.
    pub overhead: Option<Quartiles>,
    pub min_distance: Option<f64>,
    pub wall_time_s: f64,
}

impl Aggregate {
    /// Fold over `records` sorted by seed.
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let mut sorted: Vec<&TrialRecord> = records.iter().collect();
        sorted.sort_by_key(|r| r.seed);
        let ok: Vec<&TrialRecord> = sorted.iter().copied().filter(|r| r.success()).collect();
        let iters: Vec<f64> = ok.iter().map(|r| r.iterations as f64).collect();
        let over: Vec<f64> = ok.iter().filter_map(|r| r.overhead).collect();
        Aggregate {
            trials: sorted.len(),
            converged: sorted.iter().filter(|r| r.status == TrialStatus::Converged).count(),
            successes: ok.len(),
            success_rate: if sorted.is_empty() {
                0.0
            } else {
                ok.len() as f64 / sorted.len() as f64
            },
            iterations: Quartiles::of(&iters),
            overhead: Quartiles::of(&over),
            min_distance: sorted.iter().filter_map(|r| r.min_distance).min_by(f64::total_cmp),
            wall_time_s: sorted.iter().map(|r| r.wall_time_s).sum(),
        }
    }
}

/// Number of worker threads: `VELSCHED_WORKERS` if set, else all cores.
pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Generate, solve and validate one seed. Failures are recorded in the
/// returned record rather than propagated.
pub fn run_trial(batch: &MonteCarloConfig, seed: u64) -> TrialRecord {
    let started = Instant::now();
    let cfg = ScenarioConfig {
        seed,
        ..batch.scenario.clone()
    };
    let outcome = (|| -> Result<_> {
        let inst = generate(&cfg)?.instance;
        let report = solve(&inst, &batch.solver)?;
        let validation = validate_report(&inst, &report, &batch.solver, batch.refinement)?;
        Ok((inst.d_safe, report, validation))
    })();
    let wall_time_s = started.elapsed().as_secs_f64();
    match outcome {
        Ok((d_safe, report, validation)) => TrialRecord {
            seed,
            status: report.status.into(),
            iterations: report.iterations,
            overhead: validation.as_ref().and_then(|v| v.report.overhead),
            min_distance: validation.as_ref().and_then(|v| v.report.min_distance),
            safe: validation.as_ref().is_some_and(|v| v.passed),
            d_safe: Some(d_safe),
            wall_time_s,
            error: report.message,
        },
        Err(e) => TrialRecord {
            seed,
            status: TrialStatus::Error,
            iterations: 0,
            overhead: None,
            min_distance: None,
            safe: false,
            d_safe: None,
            wall_time_s,
            error: Some(e.to_string()),
        },
    }
}

fn trial_path(out: &Path, seed: u64) -> PathBuf {
    out.join(TRIALS_DIR).join(format!("trial_{seed:08}.json"))
}

/// Run every trial on `workers` threads, writing each trial record as it
/// finishes, then `summary.csv` and `aggregate.json`.
pub fn run(batch: &MonteCarloConfig, out: Option<&Path>, workers: usize) -> Result<(Vec<TrialRecord>, Aggregate)> {
    batch.scenario.validate()?;
    batch.solver.validate()?;
    if batch.refinement == 0 {
        return Err(CliError::Usage("refinement must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    let seeds: Vec<u64> = batch.seeds().collect();
    let mut records = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let rec = run_trial(batch, seed);
                if let Some(dir) = out {
                    write_json(&trial_path(dir, seed), &rec)?;
                }
                Ok(rec)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by_key(|r| r.seed);
    let agg = Aggregate::from_records(&records);
    if let Some(dir) = out {
        write_json(&dir.join("batch.json"), batch)?;
        write_csv(&dir.join(SUMMARY_FILE), &records)?;
        write_json(&dir.join(AGGREGATE_FILE), &agg)?;
    }
    Ok((records, agg))
}

/// Read `summary.csv` back into trial records.
pub fn read_summary(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<TrialRecord>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(seed: u64, status: TrialStatus, safe: bool, iterations: usize, overhead: f64) -> TrialRecord {
        TrialRecord {
            seed,
            status,
            iterations,
            overhead: Some(overhead),
            min_distance: Some(1.0 + seed as f64),
            safe,
            d_safe: Some(1.0),
            wall_time_s: 0.5,
            error: None,
        }
    }

    #[test]
    fn quartiles_interpolate() {
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(q, Quartiles { q1: 1.75, median: 2.5, q3: 3.25 });
        assert_eq!(Quartiles::of(&[7.0]).unwrap().median, 7.0);
        assert!(Quartiles::of(&[]).is_none());
    }

    #[test]
    fn aggregate_counts_only_safe_converged() {
        let recs = vec![
            rec(3, TrialStatus::Converged, true, 100, 0.1),
            rec(1, TrialStatus::Converged, false, 50, 0.0),
            rec(2, TrialStatus::MaxIter, true, 3000, 0.5),
            rec(0, TrialStatus::Converged, true, 200, 0.3),
        ];
        let a = Aggregate::from_records(&recs);
        assert_eq!((a.trials, a.converged, a.successes), (4, 3, 2));
        assert_eq!(a.success_rate, 0.5);
        assert_eq!(a.iterations.unwrap().median, 150.0);
        assert!((a.overhead.unwrap().median - 0.2).abs() < 1e-15);
        assert_eq!(a.min_distance, Some(1.0));
        let mut reversed = recs.clone();
        reversed.reverse();
        assert_eq!(Aggregate::from_records(&reversed), a);
    }

    #[test]
    fn generation_failure_is_recorded() {
        use velsched_core::scenarios::Family;
        // far above the graph threshold, so route assignment cannot succeed
        let batch = MonteCarloConfig {
            scenario: ScenarioConfig::new(Family::Graph, 11, 0.05, 0).with_d_safe(50.0),
            solver: SolverConfig::default(),
            trials: 1,
            refinement: 10,
        };
        let r = run_trial(&batch, 0);
        assert_eq!(r.status, TrialStatus::Error);
        assert!(r.error.is_some());
        assert!(!r.success());
    }
}
