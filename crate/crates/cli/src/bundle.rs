//! Output bundle of a single solve.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use velsched_core::problem::mission_horizon;
use velsched_core::solver::IterationRecord;
use velsched_core::trajectory::piecewise_position;
use velsched_core::validation::validate_safety;
use velsched_core::{ProblemInstance, SolveReport, SolveStatus, SolverConfig, TemporalGrid, TimingVector, ValidationReport};

use crate::error::{ExitCode, Result};
use crate::io::{write_csv, write_json};

pub const TIMINGS_FILE: &str = "timings.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const VALIDATION_FILE: &str = "validation.json";
pub const METADATA_FILE: &str = "metadata.json";

/// Contents of `timings.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingsFile {
    pub status: SolveStatus,
    pub iterations: usize,
    /// Passage times per agent; absent for infeasible input.
    pub timings: Option<Vec<Vec<f64>>>,
}

impl TimingsFile {
    pub fn timing_vector(&self) -> Option<TimingVector> {
        self.timings.clone().map(TimingVector::from_agents)
    }
}

/// Contents of `validation.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationFile {
    pub d_safe: f64,
    /// Fine grid spacing divisor relative to the solver grid.
    pub refinement: usize,
    /// `min_distance >= d_safe - sample_slack - surrogate_gap`.
    pub passed: bool,
    pub report: ValidationReport,
}

impl ValidationFile {
    pub fn new(inst: &ProblemInstance, report: ValidationReport, refinement: usize) -> Self {
        ValidationFile {
            d_safe: inst.d_safe,
            refinement,
            passed: report.safe_with_gap(inst.d_safe),
            report,
        }
    }
}

/// Contents of `metadata.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub seed: u64,
    /// SHA-256 over the instance and solver configuration.
    pub config_hash: String,
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub message: Option<String>,
    pub solver: SolverConfig,
}

/// One row of `trajectories.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub agent: usize,
    pub tau: f64,
    pub x: f64,
    pub y: f64,
}

/// Hex SHA-256 of the canonical JSON of the instance and solver settings.
pub fn config_hash(inst: &ProblemInstance, solver: &SolverConfig) -> Result<String> {
    let bytes = serde_json::to_vec(&(inst, solver))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Piecewise positions of every agent on a common grid of spacing `spacing`
/// across the mission horizon, ordered by agent then time.
pub fn sample_trajectories(inst: &ProblemInstance, timings: &TimingVector, spacing: f64) -> Result<Vec<TrajectoryRow>> {
    let (start, end) = mission_horizon(timings);
    let grid = TemporalGrid::over(start, end, spacing)?;
    let mut rows = Vec::with_capacity(inst.num_agents() * grid.len());
    for (agent, path) in inst.paths.iter().enumerate() {
        for &tau in grid.samples() {
            let p = piecewise_position(path, timings.agent(agent), tau);
            rows.push(TrajectoryRow { agent, tau, x: p.x, y: p.y });
        }
    }
    Ok(rows)
}

/// Validation of a solve, if it produced timings.
pub fn validate_report(
    inst: &ProblemInstance,
    report: &SolveReport,
    solver: &SolverConfig,
    refinement: usize,
) -> Result<Option<ValidationFile>> {
    match &report.timings {
        Some(t) => {
            let rep = validate_safety(inst, t, solver.delta_tau, refinement)?;
            Ok(Some(ValidationFile::new(inst, rep, refinement)))
        }
        None => Ok(None),
    }
}

/// Exit code for a solve outcome.
pub fn exit_code(status: SolveStatus, validation: Option<&ValidationFile>) -> ExitCode {
    match status {
        SolveStatus::InfeasibleInput => ExitCode::InfeasibleInput,
        SolveStatus::MaxIter => ExitCode::MaxIter,
        SolveStatus::Converged if validation.is_some_and(|v| v.passed) => ExitCode::Success,
        SolveStatus::Converged => ExitCode::Unsafe,
    }
}

pub struct BundleInput<'a> {
    pub instance: &'a ProblemInstance,
    pub solver: &'a SolverConfig,
    pub report: &'a SolveReport,
    pub validation: Option<&'a ValidationFile>,
    pub seed: u64,
}

/// Write every bundle file into `dir`.
pub fn write_bundle(dir: &Path, input: &BundleInput<'_>) -> Result<()> {
    let BundleInput {
        instance,
        solver,
        report,
        validation,
        seed,
    } = *input;
    write_json(
        &dir.join(TIMINGS_FILE),
        &TimingsFile {
            status: report.status,
            iterations: report.iterations,
            timings: report.timings.as_ref().map(TimingVector::to_nested),
        },
    )?;
    write_csv::<IterationRecord>(&dir.join(TRACE_FILE), &report.trace)?;
    let rows = match (&report.timings, validation) {
        (Some(t), Some(v)) => sample_trajectories(instance, t, solver.delta_tau / v.refinement as f64)?,
        _ => Vec::new(),
    };
    write_csv(&dir.join(TRAJECTORIES_FILE), &rows)?;
    write_json(&dir.join(VALIDATION_FILE), &validation)?;
    write_json(
        &dir.join(METADATA_FILE),
        &Metadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: config_hash(instance, solver)?,
            status: report.status,
            iterations: report.iterations,
            wall_time_s: report.wall_time.as_secs_f64(),
            message: report.message.clone(),
            solver: *solver,
        },
    )
}
