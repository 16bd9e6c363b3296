//! Post-solve checks: fine-grid safety of the piecewise motion, travel-time
//! overhead, and tracking by a PD-controlled point mass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::penalty::{min_pairwise_distance, PositionModel, TemporalGrid};
use crate::problem::{min_time_timing, mission_horizon, ProblemInstance, TimingVector};
use crate::trajectory::{piecewise_position, piecewise_velocity, sigmoid, SmoothProfile};

/// Outcome of [`validate_safety`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Smallest sampled pairwise distance of the piecewise motion; `None`
    /// for a single agent.
    pub min_distance: Option<f64>,
    pub argmin_pair: Option<(usize, usize)>,
    pub argmin_tau: Option<f64>,
    /// Spacing of the validation grid, s.
    pub grid_spacing: f64,
    /// Inter-sample motion bound `v_max * grid_spacing`, m.
    pub sample_slack: f64,
    /// Bound on how far pairwise distances of the delay-compensated smooth
    /// surrogate can differ from the piecewise ones, m.
    pub surrogate_gap: f64,
    /// `min_distance >= d_safe - sample_slack`.
    pub safe: bool,
    /// Arrival time of every agent, s.
    pub completion_times: Vec<f64>,
    /// Summed arrival times of the agents without a prescribed arrival, s.
    pub sum_completion: f64,
    /// See [`overhead`].
    pub overhead: Option<f64>,
}

impl ValidationReport {
    /// Safety with both tolerances: `min_distance >= d_safe - sample_slack - surrogate_gap`.
    pub fn safe_with_gap(&self, d_safe: f64) -> bool {
        self.min_distance
            .is_none_or(|d| d >= d_safe - self.sample_slack - self.surrogate_gap)
    }
}

fn check_monotone(timings: &TimingVector) -> Result<()> {
    for (i, t) in timings.agents().enumerate() {
        if let Some(n) = t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateDuration {
                agent: i,
                segment: n,
                duration: t[n + 1] - t[n],
            });
        }
    }
    Ok(())
}

/// Largest `|p~(tau + b) - p(tau)|` over the samples, per agent.
fn delay_compensated_deviation(inst: &ProblemInstance, timings: &TimingVector, grid: &TemporalGrid) -> Result<Vec<f64>> {
    let b = inst.smoothing.bias;
    inst.paths
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let times = timings.agent(i);
            let profile = SmoothProfile::new(path, times, inst.smoothing)?;
            Ok(grid
                .samples()
                .iter()
                .map(|&tau| profile.position(tau + b).distance(piecewise_position(path, times, tau)))
                .fold(0.0, f64::max))
        })
        .collect()
}

/// Check `timings` on a grid of spacing `delta_tau / refinement` with the
/// piecewise model.
///
/// The surrogate gap is the sum of the two largest per-agent deviations
/// between the smooth profile advanced by its delay and the piecewise
/// profile.
pub fn validate_safety(
    inst: &ProblemInstance,
    timings: &TimingVector,
    delta_tau: f64,
    refinement: usize,
) -> Result<ValidationReport> {
    if refinement == 0 {
        return Err(Error::InvalidParameter("refinement must be >= 1".into()));
    }
    check_monotone(timings)?;
    let spacing = delta_tau / refinement as f64;
    let (start, end) = mission_horizon(timings);
    let grid = TemporalGrid::over(start, end, spacing)?;
    let closest = min_pairwise_distance(inst, timings, &grid, PositionModel::Piecewise)?;

    let mut dev = delay_compensated_deviation(inst, timings, &grid)?;
    dev.sort_by(|a, b| b.total_cmp(a));
    let surrogate_gap = dev.iter().take(2).sum();

    let sample_slack = inst.v_max * spacing;
    let safe = closest.is_none_or(|c| c.distance >= inst.d_safe - sample_slack);
    let completion_times: Vec<f64> = timings.agents().map(|t| t[t.len() - 1]).collect();
    let sum_completion = inst
        .paths
        .iter()
        .zip(&completion_times)
        .filter(|(p, _)| p.fixed_arrival.is_none())
        .map(|(_, t)| t)
        .sum();
    Ok(ValidationReport {
        min_distance: closest.map(|c| c.distance),
        argmin_pair: closest.map(|c| c.pair),
        argmin_tau: closest.map(|c| c.tau),
        grid_spacing: spacing,
        sample_slack,
        surrogate_gap,
        safe,
        completion_times,
        sum_completion,
        overhead: overhead(inst, timings)?,
    })
}

/// Relative increase of the summed completion times over the speed-limit
/// minimum, counting only agents without a prescribed arrival:
/// `(sum t_N - sum t_N^min) / sum (t_N^min - t_s)`. `None` when every agent
/// has a prescribed arrival.
pub fn overhead(inst: &ProblemInstance, timings: &TimingVector) -> Result<Option<f64>> {
    let min = min_time_timing(inst)?;
    let (mut extra, mut base) = (0.0, 0.0);
    let mut any = false;
    for (i, p) in inst.paths.iter().enumerate() {
        if p.fixed_arrival.is_some() {
            continue;
        }
        any = true;
        let t = timings.agent(i);
        let m = min.agent(i);
        extra += t[t.len() - 1] - m[m.len() - 1];
        base += m[m.len() - 1] - p.start_time;
    }
    Ok(any.then(|| extra / base))
}

/// Point-mass tracking controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSimConfig {
    /// Gain on the position error, 1/s^2.
    pub kp: f64,
    /// Gain on the velocity error, 1/s.
    pub kd: f64,
    /// Integration step, s.
    pub step: f64,
    /// Bandwidth of the reference second-order velocity loop, rad/s.
    pub bandwidth: f64,
    /// Simulated time after the last arrival, s.
    pub settle: f64,
    /// Spacing of the recorded samples, s.
    pub record_interval: f64,
}

impl Default for TrackingSimConfig {
    fn default() -> Self {
        TrackingSimConfig {
            kp: 0.1,
            kd: 10.0,
            step: 1e-3,
            bandwidth: 10.0,
            settle: 1.0,
            record_interval: 0.01,
        }
    }
}

impl TrackingSimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kp", self.kp),
            ("kd", self.kd),
            ("step", self.step),
            ("bandwidth", self.bandwidth),
            ("record_interval", self.record_interval),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.settle >= 0.0 && self.settle.is_finite()) {
            return Err(Error::InvalidParameter(format!("settle must be >= 0, got {}", self.settle)));
        }
        Ok(())
    }
}

/// Simulated tracking of a whole schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    /// Recorded sample times, s.
    pub times: Vec<f64>,
    /// `[agent][sample]` tracked positions.
    pub positions: Vec<Vec<Vec2>>,
    /// Largest distance between a tracked position and the smooth surrogate.
    pub max_tracking_error: f64,
    /// Smallest pairwise distance between tracked agents; `None` for one agent.
    pub min_pairwise_distance: Option<f64>,
}

/// Integrate one agent over `[t0, t1]` with semi-implicit Euler:
/// `a = kp (p_ref - p) + kd (v_cmd - v)`, where `p_ref` and `v_cmd` come from
/// the piecewise schedule. Returns positions every `cfg.record_interval`
/// together with the largest deviation from the smooth surrogate.
pub fn track_agent(
    inst: &ProblemInstance,
    agent: usize,
    times: &[f64],
    cfg: &TrackingSimConfig,
    (t0, t1): (f64, f64),
) -> Result<(Vec<Vec2>, f64)> {
    cfg.validate()?;
    let path = &inst.paths[agent];
    let profile = SmoothProfile::new(path, times, inst.smoothing)?;
    let steps = ((t1 - t0) / cfg.step).round().max(0.0) as usize;
    let every = ((cfg.record_interval / cfg.step).round() as usize).max(1);
    let mut p = piecewise_position(path, times, t0);
    let mut v = piecewise_velocity(path, times, t0);
    let mut out = Vec::with_capacity(steps / every + 1);
    let mut worst: f64 = 0.0;
    for k in 0..=steps {
        let tau = t0 + k as f64 * cfg.step;
        worst = worst.max(p.distance(profile.position(tau)));
        if k % every == 0 {
            out.push(p);
        }
        let a = (piecewise_position(path, times, tau) - p) * cfg.kp + (piecewise_velocity(path, times, tau) - v) * cfg.kd;
        v += a * cfg.step;
        p += v * cfg.step;
    }
    Ok((out, worst))
}

/// Track every agent over the mission horizon plus `cfg.settle`.
pub fn simulate_tracking(inst: &ProblemInstance, timings: &TimingVector, cfg: &TrackingSimConfig) -> Result<TrackingResult> {
    cfg.validate()?;
    check_monotone(timings)?;
    let (start, end) = mission_horizon(timings);
    let window = (start, end + cfg.settle);
    let mut positions = Vec::with_capacity(inst.num_agents());
    let mut max_tracking_error: f64 = 0.0;
    for i in 0..inst.num_agents() {
        let (pos, err) = track_agent(inst, i, timings.agent(i), cfg, window)?;
        max_tracking_error = max_tracking_error.max(err);
        positions.push(pos);
    }
    let n = positions.first().map_or(0, Vec::len);
    let every = ((cfg.record_interval / cfg.step).round() as usize).max(1);
    let times = (0..n).map(|k| start + (k * every) as f64 * cfg.step).collect();
    let mut min_pairwise: Option<f64> = None;
    for (i, j) in inst.pairs() {
        for (a, b) in positions[i].iter().zip(&positions[j]) {
            let d = a.distance(*b);
            min_pairwise = Some(min_pairwise.map_or(d, |m| m.min(d)));
        }
    }
    Ok(TrackingResult {
        times,
        positions,
        max_tracking_error,
        min_pairwise_distance: min_pairwise,
    })
}

/// Response of `omega^2 / (s + omega)^2` to a command held constant over each
/// step (exact zero-order-hold discretization), starting at rest. Entry `k`
/// is the output at `k * step`.
pub fn second_order_reference(command: &[f64], omega: f64, step: f64) -> Result<Vec<f64>> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega must be > 0, got {omega}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    let a = (-omega * step).exp();
    let wh = omega * step;
    // cascade of two first-order lags: y1' = -w y1 + w u, y' = -w y + w y1
    let (mut y1, mut y) = (0.0, 0.0);
    let mut out = Vec::with_capacity(command.len());
    for &u in command {
        out.push(y);
        let y_next = a * wh * y1 + a * y + (1.0 - a * (1.0 + wh)) * u;
        y1 = a * y1 + (1.0 - a) * u;
        y = y_next;
    }
    Ok(out)
}

/// Largest gap on `[0, t_end]` between the logistic velocity switch
/// `sigma(beta (t - b))` and the unit-step response of the second-order loop,
/// sampled every `step`.
pub fn step_response_mismatch(beta: f64, bias: f64, omega: f64, t_end: f64, step: f64) -> Result<f64> {
    let n = (t_end / step).round() as usize + 1;
    let reference = second_order_reference(&vec![1.0; n], omega, step)?;
    Ok(reference
        .iter()
        .enumerate()
        .map(|(k, &r)| (sigmoid(beta * (k as f64 * step - bias)) - r).abs())
        .fold(0.0, f64::max))
}
