//! Pairwise safety penalty on a uniform temporal grid.
//!
//! The penalty is the grid-averaged hinge `max(1 - dist / d_safe, 0)` summed
//! over agent pairs, normalized by the number of pairs and the grid span, and
//! evaluated on the smooth surrogate positions.

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::problem::{mission_horizon, ProblemInstance, TimingVector};
use crate::trajectory::{piecewise_position, SmoothProfile};

/// Uniformly spaced sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGrid {
    samples: Vec<f64>,
    delta_tau: f64,
    span: f64,
}

impl TemporalGrid {
    /// Samples `start, start + dt, ...` until the last one reaches `end`
    /// (it may overshoot by less than one step).
    pub fn over(start: f64, end: f64, delta_tau: f64) -> Result<Self> {
        if !(delta_tau > 0.0 && delta_tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be > 0, got {delta_tau}"
            )));
        }
        if !(start.is_finite() && end.is_finite()) {
            return Err(Error::InvalidParameter("grid bounds must be finite".into()));
        }
        let steps = ((end - start) / delta_tau - 1e-9).ceil().max(0.0) as usize;
        let samples: Vec<f64> = (0..=steps).map(|m| start + m as f64 * delta_tau).collect();
        let span = if steps == 0 {
            delta_tau
        } else {
            samples[steps] - samples[0]
        };
        Ok(TemporalGrid {
            samples,
            delta_tau,
            span,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn delta_tau(&self) -> f64 {
        self.delta_tau
    }

    /// `T_s`; one step for a single-sample grid.
    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn start(&self) -> f64 {
        self.samples[0]
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    /// Whether a grid should be rebuilt for an iterate covering
    /// `[start, end]`: the horizon left the grid, or shrank by more than 10 %.
    pub fn needs_rebuild(&self, start: f64, end: f64) -> bool {
        start < self.start() || end > self.end() || (end - start) < 0.9 * self.span
    }
}

/// Grid over the mission horizon of `timings`.
pub fn build_grid(timings: &TimingVector, delta_tau: f64) -> Result<TemporalGrid> {
    let (start, end) = mission_horizon(timings);
    TemporalGrid::over(start, end, delta_tau)
}

/// Penalty value, optional gradient, and per-pair minimum surrogate distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyEval {
    pub value: f64,
    /// Empty unless requested.
    pub gradient: Vec<f64>,
    /// Minimum sampled surrogate distance per pair, in [`ProblemInstance::pairs`] order.
    pub pair_min_distance: Vec<f64>,
}

/// Smooth positions of every agent at every grid sample, `[agent][sample]`.
fn smooth_positions(
    inst: &ProblemInstance,
    timings: &TimingVector,
    grid: &TemporalGrid,
) -> Result<Vec<Vec<Vec2>>> {
    inst.paths
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let profile = SmoothProfile::new(path, timings.agent(i), inst.smoothing)?;
            Ok(grid.samples().iter().map(|&tau| profile.position(tau)).collect())
        })
        .collect()
}

fn check_layout(inst: &ProblemInstance, timings: &TimingVector) -> Result<()> {
    if timings.num_agents() != inst.num_agents() {
        return Err(Error::InvalidParameter(format!(
            "timing vector has {} agents, instance has {}",
            timings.num_agents(),
            inst.num_agents()
        )));
    }
    Ok(())
}

/// Evaluate the penalty and, if `with_gradient`, its gradient with respect
/// to the stacked timing vector.
///
/// Hinge terms exactly at `d_safe` count as inactive; a term at zero distance
/// contributes to the value but not to the gradient.
pub fn evaluate(
    inst: &ProblemInstance,
    timings: &TimingVector,
    grid: &TemporalGrid,
    with_gradient: bool,
) -> Result<PenaltyEval> {
    check_layout(inst, timings)?;
    let k = inst.num_agents();
    let n_pairs = inst.num_pairs();
    if n_pairs == 0 {
        return Ok(PenaltyEval {
            value: 0.0,
            gradient: if with_gradient { vec![0.0; timings.len()] } else { Vec::new() },
            pair_min_distance: Vec::new(),
        });
    }
    let pos = smooth_positions(inst, timings, grid)?;
    let m = grid.len();
    let scale = grid.delta_tau() / (n_pairs as f64 * grid.span());
    let d_safe = inst.d_safe;

    // per-agent, per-sample weight for the Jacobian-transpose product
    let mut weights = if with_gradient {
        vec![vec![Vec2::ZERO; m]; k]
    } else {
        Vec::new()
    };
    let mut hinge_sum = 0.0;
    let mut pair_min_distance = Vec::with_capacity(n_pairs);

    for (i, j) in inst.pairs() {
        let mut pair_sum = 0.0;
        let mut pair_min = f64::INFINITY;
        for s in 0..m {
            let diff = pos[i][s] - pos[j][s];
            let dist = diff.norm();
            pair_min = pair_min.min(dist);
            if dist < d_safe {
                pair_sum += 1.0 - dist / d_safe;
                if with_gradient && dist > 0.0 {
                    let w = diff * (scale / (d_safe * dist));
                    weights[i][s] -= w;
                    weights[j][s] += w;
                }
            }
        }
        hinge_sum += pair_sum;
        pair_min_distance.push(pair_min);
    }

    let gradient = if with_gradient {
        let mut grad = vec![0.0; timings.len()];
        for (i, path) in inst.paths.iter().enumerate() {
            let times = timings.agent(i);
            let profile = SmoothProfile::new(path, times, inst.smoothing)?;
            let mut jac = vec![Vec2::ZERO; times.len()];
            let g = &mut grad[timings.offset(i)..timings.offset(i) + times.len()];
            for (s, &w) in weights[i].iter().enumerate() {
                if w == Vec2::ZERO {
                    continue;
                }
                profile.position_and_jacobian(grid.samples()[s], &mut jac);
                for (gk, col) in g.iter_mut().zip(&jac) {
                    *gk += col.dot(w);
                }
            }
        }
        grad
    } else {
        Vec::new()
    };

    Ok(PenaltyEval {
        value: scale * hinge_sum,
        gradient,
        pair_min_distance,
    })
}

/// Penalty value and gradient of a single agent pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTerm {
    pub pair: (usize, usize),
    /// Contribution of this pair to the total penalty value.
    pub value: f64,
    /// Gradient of `value` with respect to the stacked timing vector.
    pub gradient: Vec<f64>,
}

/// Per-pair decomposition of [`evaluate`], restricted to pairs with a
/// positive penalty. The values and gradients sum to the totals of
/// [`evaluate`].
pub fn pair_terms(inst: &ProblemInstance, timings: &TimingVector, grid: &TemporalGrid) -> Result<Vec<PairTerm>> {
    check_layout(inst, timings)?;
    let n_pairs = inst.num_pairs();
    if n_pairs == 0 {
        return Ok(Vec::new());
    }
    let pos = smooth_positions(inst, timings, grid)?;
    let m = grid.len();
    let scale = grid.delta_tau() / (n_pairs as f64 * grid.span());
    let d_safe = inst.d_safe;
    let profiles = inst
        .paths
        .iter()
        .enumerate()
        .map(|(i, path)| SmoothProfile::new(path, timings.agent(i), inst.smoothing))
        .collect::<Result<Vec<_>>>()?;
    // Jacobians are computed on first use and shared between pairs
    let mut jac_cache: Vec<Vec<Option<Vec<Vec2>>>> = (0..inst.num_agents()).map(|_| vec![None; m]).collect();
    let mut jacobian = |agent: usize, s: usize| -> Vec<Vec2> {
        jac_cache[agent][s]
            .get_or_insert_with(|| {
                let mut jac = vec![Vec2::ZERO; timings.agent(agent).len()];
                profiles[agent].position_and_jacobian(grid.samples()[s], &mut jac);
                jac
            })
            .clone()
    };

    let mut out = Vec::new();
    for (i, j) in inst.pairs() {
        let mut hinge = 0.0;
        let mut gradient = Vec::new();
        for s in 0..m {
            let diff = pos[i][s] - pos[j][s];
            let dist = diff.norm();
            if dist >= d_safe {
                continue;
            }
            hinge += 1.0 - dist / d_safe;
            if dist > 0.0 {
                if gradient.is_empty() {
                    gradient = vec![0.0; timings.len()];
                }
                let w = diff * (scale / (d_safe * dist));
                for (agent, sign) in [(i, -1.0), (j, 1.0)] {
                    let off = timings.offset(agent);
                    for (n, col) in jacobian(agent, s).iter().enumerate() {
                        gradient[off + n] += sign * col.dot(w);
                    }
                }
            }
        }
        if hinge > 0.0 {
            if gradient.is_empty() {
                gradient = vec![0.0; timings.len()];
            }
            out.push(PairTerm {
                pair: (i, j),
                value: scale * hinge,
                gradient,
            });
        }
    }
    Ok(out)
}

pub fn penalty_value(inst: &ProblemInstance, timings: &TimingVector, grid: &TemporalGrid) -> Result<f64> {
    evaluate(inst, timings, grid, false).map(|e| e.value)
}

pub fn penalty_gradient(
    inst: &ProblemInstance,
    timings: &TimingVector,
    grid: &TemporalGrid,
) -> Result<Vec<f64>> {
    evaluate(inst, timings, grid, true).map(|e| e.gradient)
}

/// Which position model a distance query uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionModel {
    /// Constant velocity per segment, holding outside `[t_1, t_N]`.
    Piecewise,
    /// Softplus surrogate.
    Smooth,
}

/// Closest sampled approach over all pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestApproach {
    pub distance: f64,
    pub pair: (usize, usize),
    pub tau: f64,
}

/// Minimum distance over all pairs and samples. `None` for a single agent.
pub fn min_pairwise_distance(
    inst: &ProblemInstance,
    timings: &TimingVector,
    grid: &TemporalGrid,
    model: PositionModel,
) -> Result<Option<ClosestApproach>> {
    check_layout(inst, timings)?;
    let pos: Vec<Vec<Vec2>> = match model {
        PositionModel::Smooth => smooth_positions(inst, timings, grid)?,
        PositionModel::Piecewise => inst
            .paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                grid.samples()
                    .iter()
                    .map(|&tau| piecewise_position(p, timings.agent(i), tau))
                    .collect()
            })
            .collect(),
    };
    let mut best: Option<ClosestApproach> = None;
    for (i, j) in inst.pairs() {
        for (s, &tau) in grid.samples().iter().enumerate() {
            let d = pos[i][s].distance(pos[j][s]);
            if best.is_none_or(|b| d < b.distance) {
                best = Some(ClosestApproach {
                    distance: d,
                    pair: (i, j),
                    tau,
                });
            }
        }
    }
    Ok(best)
}
