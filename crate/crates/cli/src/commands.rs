//! Argument definitions and verb implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use velsched_core::scenarios::{density_from_safety_distance, graph_feasibility_threshold, Family, ScenarioConfig};
use velsched_core::solver::solve;
use velsched_core::validation::validate_safety;
use velsched_core::{PolyakRule, SolverConfig};

use crate::bundle::{exit_code, validate_report, write_bundle, BundleInput, TimingsFile, ValidationFile};
use crate::error::{CliError, ExitCode, Result};
use crate::io::write_json;
use crate::montecarlo::{self, MonteCarloConfig};
use crate::scenario_file::ScenarioFile;

#[derive(Debug, Parser)]
#[command(name = "velsched", version, about = "Velocity scheduling for agents on fixed routes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scenario file.
    Generate(GenerateArgs),
    /// Solve a scenario file and write a result bundle.
    Solve(SolveArgs),
    /// Run seeded trials and write per-trial and aggregate statistics.
    Montecarlo(MonteCarloArgs),
    /// Check solved timings on a fine grid.
    Validate(ValidateArgs),
}

/// Solver parameters that override the scenario file or defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverOverrides {
    /// Temporal grid spacing of the penalty, s.
    #[arg(long)]
    pub delta_tau: Option<f64>,
    /// Augmented Lagrangian weight.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Momentum refinement count.
    #[arg(long)]
    pub n_ref: Option<usize>,
    /// Polyak step rule: joint or per_pair.
    #[arg(long)]
    pub polyak_rule: Option<PolyakRule>,
    /// Keep the momentum unchanged while the floored point is penalty-free.
    #[arg(long)]
    pub hold_momentum: bool,
}

impl SolverOverrides {
    pub fn apply(&self, mut cfg: SolverConfig) -> Result<SolverConfig> {
        if let Some(v) = self.delta_tau {
            cfg.delta_tau = v;
        }
        if let Some(v) = self.rho {
            cfg.rho = v;
        }
        if let Some(v) = self.max_iter {
            cfg.n_iter_max = v;
        }
        if let Some(v) = self.n_ref {
            cfg.n_ref = v;
        }
        if let Some(v) = self.polyak_rule {
            cfg.polyak_rule = v;
        }
        if self.hold_momentum {
            cfg.hold_momentum_when_feasible = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Scenario generator inputs.
#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// random_crossing_co, random_crossing_counter, bottleneck or graph.
    #[arg(long)]
    pub family: Family,
    /// Number of agents.
    #[arg(long)]
    pub agents: usize,
    /// Target density; required unless a safety distance is given.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Generator seed (first seed for montecarlo).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Safety distance override, m.
    #[arg(long, conflicts_with = "d_safe_ratio")]
    pub d_safe: Option<f64>,
    /// Safety distance as a multiple of the graph feasibility threshold.
    #[arg(long)]
    pub d_safe_ratio: Option<f64>,
    /// Graph node spacing, m.
    #[arg(long)]
    pub d_node: Option<f64>,
}

impl ScenarioArgs {
    pub fn config(&self) -> Result<ScenarioConfig> {
        let probe = ScenarioConfig::new(self.family, self.agents, 0.0, self.seed);
        let d_node = self.d_node.unwrap_or(probe.d_node);
        let d_safe = match (self.d_safe, self.d_safe_ratio) {
            (Some(d), _) => Some(d),
            (None, Some(r)) => Some(r * graph_feasibility_threshold(d_node)?),
            (None, None) => None,
        };
        let phi = match (self.phi, d_safe) {
            (Some(p), _) => p,
            (None, Some(d)) => density_from_safety_distance(d, self.agents, probe.area()),
            (None, None) => return Err(CliError::Usage("--phi is required without --d-safe or --d-safe-ratio".into())),
        };
        let mut cfg = ScenarioConfig::new(self.family, self.agents, phi, self.seed);
        cfg.d_node = d_node;
        cfg.d_safe = d_safe;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub solver: SolverOverrides,
    /// Output scenario file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory for the result bundle.
    #[arg(long)]
    pub out: PathBuf,
    /// Safety distance override, m.
    #[arg(long)]
    pub d_safe: Option<f64>,
    #[command(flatten)]
    pub solver: SolverOverrides,
    /// Validation grid is the penalty grid refined this many times.
    #[arg(long, default_value_t = 10)]
    pub fine_refine: usize,
}

#[derive(Debug, Clone, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub solver: SolverOverrides,
    /// Number of trials; seeds run from --seed upward.
    #[arg(long)]
    pub trials: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Validation grid is the penalty grid refined this many times.
    #[arg(long, default_value_t = 10)]
    pub fine_refine: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// timings.json from a solve bundle.
    #[arg(long)]
    pub timings: PathBuf,
    /// Penalty grid spacing the fine grid is derived from; defaults to the
    /// scenario's solver block.
    #[arg(long)]
    pub delta_tau: Option<f64>,
    /// Validation grid is the penalty grid refined this many times.
    #[arg(long, default_value_t = 10)]
    pub fine_refine: usize,
    /// Optional output file for the validation report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn positive_refinement(r: usize) -> Result<usize> {
    if r == 0 {
        Err(CliError::Usage("--fine-refine must be >= 1".into()))
    } else {
        Ok(r)
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<ExitCode> {
    let cfg = args.scenario.config()?;
    let solver = args.solver.apply(SolverConfig::default())?;
    let (file, inst) = ScenarioFile::generated(cfg, solver)?;
    file.write(&args.out)?;
    println!("d_safe = {}", inst.d_safe);
    Ok(ExitCode::Success)
}

pub fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    let refinement = positive_refinement(args.fine_refine)?;
    let mut file = ScenarioFile::read(&args.scenario)?;
    if let Some(d) = args.d_safe {
        file.config.d_safe = Some(d);
    }
    let solver = args.solver.apply(file.solver)?;
    let inst = file.instance()?;
    let report = solve(&inst, &solver)?;
    let validation = validate_report(&inst, &report, &solver, refinement)?;
    write_bundle(
        &args.out,
        &BundleInput {
            instance: &inst,
            solver: &solver,
            report: &report,
            validation: validation.as_ref(),
            seed: file.config.seed,
        },
    )?;
    let code = exit_code(report.status, validation.as_ref());
    let mut line = format!("status = {}, iterations = {}", report.status.as_str(), report.iterations);
    if let Some(v) = &validation {
        if let Some(o) = v.report.overhead {
            line += &format!(", overhead = {o:.6}");
        }
        if let Some(d) = v.report.min_distance {
            line += &format!(", min_distance = {d:.6}");
        }
        line += &format!(", validated = {}", v.passed);
    }
    if let Some(m) = &report.message {
        line += &format!(", message = {m}");
    }
    println!("{line}");
    Ok(code)
}

pub fn cmd_montecarlo(args: &MonteCarloArgs) -> Result<ExitCode> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be >= 1".into()));
    }
    let batch = MonteCarloConfig {
        scenario: args.scenario.config()?,
        solver: args.solver.apply(SolverConfig::default())?,
        trials: args.trials,
        refinement: positive_refinement(args.fine_refine)?,
    };
    let (_, agg) = montecarlo::run(&batch, Some(&args.out), montecarlo::worker_count()?)?;
    println!("{}", serde_json::to_string_pretty(&agg)?);
    Ok(ExitCode::Success)
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<ExitCode> {
    let refinement = positive_refinement(args.fine_refine)?;
    let file = ScenarioFile::read(&args.scenario)?;
    let inst = file.instance()?;
    let timings = read_timings(&args.timings)?
        .timing_vector()
        .ok_or_else(|| CliError::Usage(format!("{}: no timings to validate", args.timings.display())))?;
    if timings.num_agents() != inst.num_agents()
        || timings.agents().zip(&inst.paths).any(|(t, p)| t.len() != p.len())
    {
        return Err(CliError::Usage(format!(
            "{}: timings do not match the scenario's routes",
            args.timings.display()
        )));
    }
    let delta_tau = args.delta_tau.unwrap_or(file.solver.delta_tau);
    let report = validate_safety(&inst, &timings, delta_tau, refinement)?;
    let v = ValidationFile::new(&inst, report, refinement);
    let text = serde_json::to_string_pretty(&v)?;
    match &args.out {
        Some(p) => write_json(p, &v)?,
        None => println!("{text}"),
    }
    Ok(if v.passed { ExitCode::Success } else { ExitCode::Unsafe })
}

fn read_timings(path: &Path) -> Result<TimingsFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::Validate(a) => cmd_validate(a),
    }
}
