//! Inexact-projection ADMM over the passage times.
//!
//! The stacked times `t` are split into segment durations `x` (boxed by the
//! speed limits) and a collision copy `z`:
//!
//! ```text
//! minimize   q^T t + I_V(x) + I_C(z)
//! subject to E t = e,  D t - x = 0,  t - z = 0
//! ```
//!
//! Each iteration solves one block-tridiagonal system for `t`, clamps `x`,
//! replaces the intractable projection onto the collision-free set by Polyak
//! steps on the penalty (with heavy-ball momentum switched on when the
//! penalty stagnates), and finishes with scaled dual ascent.

mod tridiag;

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use self::tridiag::SymTridiagLdl;
use crate::error::{Error, Result};
use crate::penalty::{self, TemporalGrid};
use crate::problem::{min_time_timing, mission_horizon, ProblemInstance, StackedOperators, TimingVector};

/// Minimum segment duration used when an iterate is not monotone, as a
/// fraction of the fastest admissible duration.
pub const DURATION_FLOOR_FRACTION: f64 = 1e-3;

/// How the Polyak correction of the z-update is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyakRule {
    /// One step `f / |grad f|^2` along the gradient of the whole penalty.
    #[default]
    Joint,
    /// Sum of independent Polyak steps, one per agent pair with positive
    /// penalty, each sized by that pair's own value and gradient.
    PerPair,
}

impl std::str::FromStr for PolyakRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(PolyakRule::Joint),
            "per_pair" | "per-pair" => Ok(PolyakRule::PerPair),
            other => Err(Error::InvalidParameter(format!(
                "unknown polyak rule {other:?}, expected joint or per_pair"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: f64,
    pub n_iter_max: usize,
    /// Polyak refinements per z-update.
    pub n_ref: usize,
    pub alpha_active: f64,
    /// Iterations between stagnation probes.
    pub m_stag: usize,
    pub eps_delta_f: f64,
    pub eps_pri: f64,
    pub eps_f: f64,
    /// Regularizer in the Polyak denominator.
    pub eps_polyak: f64,
    /// Penalty grid spacing, s.
    pub delta_tau: f64,
    /// When momentum is active and the candidate is already collision-free,
    /// keep `v` unchanged instead of decaying it to `alpha * v`.
    pub hold_momentum_when_feasible: bool,
    pub polyak_rule: PolyakRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 100.0,
            n_iter_max: 1000,
            n_ref: 1,
            alpha_active: 0.7,
            m_stag: 10,
            eps_delta_f: 1e-3,
            eps_pri: 1e-5,
            eps_f: 1e-5,
            eps_polyak: 1e-12,
            delta_tau: 0.1,
            hold_momentum_when_feasible: false,
            polyak_rule: PolyakRule::Joint,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("eps_delta_f", self.eps_delta_f),
            ("eps_pri", self.eps_pri),
            ("eps_f", self.eps_f),
            ("eps_polyak", self.eps_polyak),
            ("delta_tau", self.delta_tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.alpha_active) {
            return Err(Error::InvalidParameter(format!(
                "alpha_active must be in [0, 1), got {}",
                self.alpha_active
            )));
        }
        if self.n_ref == 0 || self.m_stag == 0 {
            return Err(Error::InvalidParameter("n_ref and m_stag must be >= 1".into()));
        }
        Ok(())
    }
}

/// Primal and scaled dual iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub u_e: Vec<f64>,
    pub u_x: Vec<f64>,
    pub u_z: Vec<f64>,
    /// Momentum buffer, same shape as `z`.
    pub v: Vec<f64>,
    /// Penalty at the proximal candidate, most recent last.
    pub f_history: VecDeque<f64>,
    /// Completed iterations.
    pub iteration: usize,
}

impl SolverState {
    /// `t = t0`, `x = D t0`, `z = t0`, zero duals and momentum.
    pub fn initial(ops: &StackedOperators, t0: &[f64]) -> Self {
        SolverState {
            t: t0.to_vec(),
            x: ops.apply_d(t0),
            z: t0.to_vec(),
            u_e: vec![0.0; ops.num_boundary_rows()],
            u_x: vec![0.0; ops.num_segments],
            u_z: vec![0.0; ops.dim],
            v: vec![0.0; ops.dim],
            f_history: VecDeque::new(),
            iteration: 0,
        }
    }

    /// `[E t - e; D t - x; t - z]` in the infinity norm.
    pub fn primal_residual(&self, ops: &StackedOperators) -> f64 {
        let r_e = ops
            .apply_e(&self.t)
            .iter()
            .zip(&ops.e)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let r_x = ops
            .apply_d(&self.t)
            .iter()
            .zip(&self.x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let r_z = self
            .t
            .iter()
            .zip(&self.z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        r_e.max(r_x).max(r_z)
    }
}

/// Per-agent factorizations of `E^T E + D^T D + I`.
#[derive(Debug, Clone)]
pub struct TimingSystem {
    factors: Vec<SymTridiagLdl>,
}

impl TimingSystem {
    pub fn new(ops: &StackedOperators) -> Result<Self> {
        let factors = ops
            .blocks
            .iter()
            .map(|b| {
                let (diag, off) = Self::block_matrix(b.len, b.fixed_arrival.is_some());
                SymTridiagLdl::factor(&diag, &off)
            })
            .collect::<Result<_>>()?;
        Ok(TimingSystem { factors })
    }

    /// Diagonal and off-diagonal of one agent's block.
    pub fn block_matrix(len: usize, fixed_arrival: bool) -> (Vec<f64>, Vec<f64>) {
        let mut diag = vec![1.0; len];
        for k in 0..len - 1 {
            diag[k] += 1.0;
            diag[k + 1] += 1.0;
        }
        diag[0] += 1.0;
        if fixed_arrival {
            diag[len - 1] += 1.0;
        }
        (diag, vec![-1.0; len - 1])
    }

    /// Solve the stacked system for an arbitrary right-hand side.
    pub fn solve(&self, ops: &StackedOperators, rhs: &[f64]) -> Vec<f64> {
        let mut out = rhs.to_vec();
        for (b, f) in ops.blocks.iter().zip(&self.factors) {
            f.solve_in_place(&mut out[b.offset..b.offset + b.len]);
        }
        out
    }
}

/// Right-hand side `E^T(e - u_E) + D^T(x - u_x) + (z - u_z) - q / rho`.
pub fn t_update_rhs(state: &SolverState, ops: &StackedOperators, rho: f64) -> Vec<f64> {
    let be: Vec<f64> = ops.e.iter().zip(&state.u_e).map(|(e, u)| e - u).collect();
    let bx: Vec<f64> = state.x.iter().zip(&state.u_x).map(|(x, u)| x - u).collect();
    let mut rhs = ops.apply_et(&be);
    for (r, d) in rhs.iter_mut().zip(ops.apply_dt(&bx)) {
        *r += d;
    }
    for k in 0..rhs.len() {
        rhs[k] += state.z[k] - state.u_z[k] - ops.q[k] / rho;
    }
    rhs
}

/// Minimizer of the augmented Lagrangian over `t`.
pub fn t_update(state: &SolverState, ops: &StackedOperators, system: &TimingSystem, rho: f64) -> Vec<f64> {
    system.solve(ops, &t_update_rhs(state, ops, rho))
}

/// Projection of `D t + u_x` onto the duration box.
pub fn x_update(state: &SolverState, ops: &StackedOperators) -> Vec<f64> {
    ops.apply_d(&state.t)
        .into_iter()
        .zip(&state.u_x)
        .zip(ops.x_lower.iter().zip(&ops.x_upper))
        .map(|((dt, u), (&lo, &hi))| (dt + u).clamp(lo, hi))
        .collect()
}

/// Copy of `times` in which every segment lasts at least
/// `DURATION_FLOOR_FRACTION * d / v_max`, re-summed from each agent's first entry.
pub fn floor_durations(ops: &StackedOperators, times: &[f64]) -> Vec<f64> {
    let mut out = times.to_vec();
    for b in &ops.blocks {
        let seg = &mut out[b.offset..b.offset + b.len];
        for n in 0..b.len - 1 {
            let floor = ops.x_lower[b.seg_offset + n] * DURATION_FLOOR_FRACTION;
            if seg[n + 1] - seg[n] < floor {
                seg[n + 1] = seg[n] + floor;
            }
        }
    }
    out
}

/// Outcome of one z-update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZStep {
    /// Penalty at the proximal candidate before any refinement.
    pub f_hat: f64,
    pub alpha: f64,
    /// Polyak step of the last refinement; 1 under [`PolyakRule::PerPair`],
    /// whose step sizes are folded into the direction.
    pub step: f64,
}

/// Momentum coefficient for iteration `k` given the probe history (most
/// recent entry is `f(z_hat^k)`).
pub fn momentum_coefficient(history: &VecDeque<f64>, cfg: &SolverConfig, k: usize) -> f64 {
    if k < cfg.m_stag || history.len() <= cfg.m_stag {
        return 0.0;
    }
    let now = history[history.len() - 1];
    let then = history[history.len() - 1 - cfg.m_stag];
    if (now - then).abs() < cfg.eps_delta_f {
        cfg.alpha_active
    } else {
        0.0
    }
}

/// Sum over active pairs of `f_p / (|grad f_p|^2 + eps) * grad f_p`.
fn per_pair_direction(
    inst: &ProblemInstance,
    timings: &TimingVector,
    grid: &TemporalGrid,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let mut dir = vec![0.0; timings.len()];
    for term in penalty::pair_terms(inst, timings, grid)? {
        let n2: f64 = term.gradient.iter().map(|v| v * v).sum();
        let c = term.value / (n2 + cfg.eps_polyak);
        for (d, gk) in dir.iter_mut().zip(&term.gradient) {
            *d += c * gk;
        }
    }
    Ok(dir)
}

/// Polyak-momentum correction of `z_hat = t + u_z`, updating `z`, the
/// momentum buffer and the penalty history.
pub fn z_update(
    state: &mut SolverState,
    inst: &ProblemInstance,
    ops: &StackedOperators,
    grid: &TemporalGrid,
    cfg: &SolverConfig,
    layout: &TimingVector,
) -> Result<ZStep> {
    let z_hat: Vec<f64> = state.t.iter().zip(&state.u_z).map(|(t, u)| t + u).collect();
    let mut base = floor_durations(ops, &z_hat);
    let mut result = ZStep {
        f_hat: 0.0,
        alpha: 0.0,
        step: 0.0,
    };
    for r in 0..cfg.n_ref {
        if r > 0 {
            base = floor_durations(ops, &state.z);
        }
        let eval = penalty::evaluate(inst, &layout.with_values(base.clone()), grid, true)?;
        if r == 0 {
            result.f_hat = eval.value;
            state.f_history.push_back(eval.value);
            while state.f_history.len() > cfg.m_stag + 1 {
                state.f_history.pop_front();
            }
            result.alpha = momentum_coefficient(&state.f_history, cfg, state.iteration);
        }
        let (g, step) = match cfg.polyak_rule {
            PolyakRule::Joint => {
                let g2: f64 = eval.gradient.iter().map(|v| v * v).sum();
                (eval.gradient, eval.value / (g2 + cfg.eps_polyak))
            }
            PolyakRule::PerPair => (per_pair_direction(inst, &layout.with_values(base.clone()), grid, cfg)?, 1.0),
        };
        let g = &g;
        result.step = step;
        if cfg.hold_momentum_when_feasible && result.alpha > 0.0 && eval.value == 0.0 {
            // collision-free candidate: keep the accumulated correction
        } else if result.alpha == 0.0 {
            for (v, gk) in state.v.iter_mut().zip(g) {
                *v = -step * gk;
            }
        } else {
            for (v, gk) in state.v.iter_mut().zip(g) {
                *v = result.alpha * *v - step * gk;
            }
        }
        state.z = base.iter().zip(&state.v).map(|(b, v)| b + v).collect();
    }
    Ok(result)
}

/// Scaled dual ascent on the three consensus constraints.
pub fn dual_update(state: &mut SolverState, ops: &StackedOperators) {
    for (u, (et, e)) in state.u_e.iter_mut().zip(ops.apply_e(&state.t).into_iter().zip(&ops.e)) {
        *u += et - e;
    }
    for (u, (dt, x)) in state.u_x.iter_mut().zip(ops.apply_d(&state.t).into_iter().zip(&state.x)) {
        *u += dt - x;
    }
    for k in 0..state.u_z.len() {
        state.u_z[k] += state.t[k] - state.z[k];
    }
}

/// Both the primal residual and the penalty at `z` are small.
pub fn check_termination(primal_residual: f64, f_z: f64, cfg: &SolverConfig) -> bool {
    primal_residual <= cfg.eps_pri && f_z <= cfg.eps_f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InfeasibleInput,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::InfeasibleInput => "infeasible_input",
        }
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Penalty at the proximal candidate.
    pub f_hat: f64,
    /// Penalty at the updated collision copy (termination test).
    pub f_z: f64,
    pub residual: f64,
    /// `q^T t`
    pub objective: f64,
    pub alpha: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Passage times after the final box re-projection; `None` for
    /// infeasible input.
    pub timings: Option<TimingVector>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
    pub wall_time: Duration,
    /// Reason for `InfeasibleInput`.
    pub message: Option<String>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.trace.last()
    }
}

/// Clamp every segment duration of `t` into the box and re-sum from the
/// departure times.
pub fn project_timings(ops: &StackedOperators, t: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    for b in &ops.blocks {
        out[b.offset] = b.start_time;
        for n in 0..b.len - 1 {
            let k = b.offset + n;
            let s = b.seg_offset + n;
            let dt = (t[k + 1] - t[k]).clamp(ops.x_lower[s], ops.x_upper[s]);
            out[k + 1] = out[k] + dt;
        }
    }
    out
}

fn penalty_grid(inst: &ProblemInstance, times: &TimingVector, delta_tau: f64) -> Result<TemporalGrid> {
    let (start, end) = mission_horizon(times);
    TemporalGrid::over(start, end + inst.smoothing.bias, delta_tau)
}

/// Iterate state shared by [`solve`] and callers that want to step manually.
#[derive(Debug, Clone)]
pub struct Admm<'a> {
    pub inst: &'a ProblemInstance,
    pub ops: StackedOperators,
    pub cfg: SolverConfig,
    pub system: TimingSystem,
    pub state: SolverState,
    pub grid: TemporalGrid,
    layout: TimingVector,
}

impl<'a> Admm<'a> {
    /// Set up operators, factorization and the min-time starting point.
    pub fn new(inst: &'a ProblemInstance, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let ops = StackedOperators::assemble(inst)?;
        let t0 = min_time_timing(inst)?;
        let system = TimingSystem::new(&ops)?;
        let state = SolverState::initial(&ops, t0.as_slice());
        let grid = penalty_grid(inst, &t0, cfg.delta_tau)?;
        Ok(Admm {
            inst,
            ops,
            cfg,
            system,
            state,
            grid,
            layout: t0,
        })
    }

    pub fn layout(&self) -> &TimingVector {
        &self.layout
    }

    /// Penalty of an arbitrary stacked vector on the current grid, with
    /// durations floored first.
    pub fn penalty_at(&self, values: &[f64]) -> Result<f64> {
        let floored = floor_durations(&self.ops, values);
        penalty::penalty_value(self.inst, &self.layout.with_values(floored), &self.grid)
    }

    fn refresh_grid(&mut self, values: &[f64]) -> Result<()> {
        let tv = self.layout.with_values(floor_durations(&self.ops, values));
        let (start, end) = mission_horizon(&tv);
        if self
            .grid
            .needs_rebuild(start, end + self.inst.smoothing.bias)
        {
            self.grid = penalty_grid(self.inst, &tv, self.cfg.delta_tau)?;
        }
        Ok(())
    }

    /// One full ADMM iteration; returns the trace record.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let k = self.state.iteration;
        self.state.t = t_update(&self.state, &self.ops, &self.system, self.cfg.rho);
        self.state.x = x_update(&self.state, &self.ops);

        let z_hat: Vec<f64> = self
            .state
            .t
            .iter()
            .zip(&self.state.u_z)
            .map(|(t, u)| t + u)
            .collect();
        self.refresh_grid(&z_hat)?;
        let zs = z_update(
            &mut self.state,
            self.inst,
            &self.ops,
            &self.grid,
            &self.cfg,
            &self.layout,
        )?;
        dual_update(&mut self.state, &self.ops);

        let residual = self.state.primal_residual(&self.ops);
        let f_z = self.penalty_at(&self.state.z)?;
        self.state.iteration += 1;
        Ok(IterationRecord {
            iteration: k,
            f_hat: zs.f_hat,
            f_z,
            residual,
            objective: self.ops.objective(&self.state.t),
            alpha: zs.alpha,
            step: zs.step,
        })
    }

    /// Box-feasible schedule from the current `t`.
    pub fn current_timings(&self) -> TimingVector {
        self.layout
            .with_values(project_timings(&self.ops, &self.state.t))
    }
}

/// Run the ADMM loop until convergence or the iteration cap.
pub fn solve(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let started = Instant::now();
    let mut admm = match Admm::new(inst, *cfg) {
        Ok(a) => a,
        Err(e @ (Error::InfeasibleArrival { .. } | Error::InvalidPath { .. })) => {
            return Ok(SolveReport {
                timings: None,
                status: SolveStatus::InfeasibleInput,
                iterations: 0,
                trace: Vec::new(),
                wall_time: started.elapsed(),
                message: Some(e.to_string()),
            });
        }
        Err(e) => return Err(e),
    };
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    for _ in 0..cfg.n_iter_max {
        let rec = admm.step()?;
        trace.push(rec);
        if check_termination(rec.residual, rec.f_z, cfg) {
            status = SolveStatus::Converged;
            break;
        }
    }
    Ok(SolveReport {
        timings: Some(admm.current_timings()),
        status,
        iterations: trace.len(),
        trace,
        wall_time: started.elapsed(),
        message: None,
    })
}
