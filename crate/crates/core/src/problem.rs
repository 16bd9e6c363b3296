//! Stacked problem data: timing layout, difference/boundary operators and the
//! speed box on segment durations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{SmoothingParams, WaypointPath};

/// Passage times of all agents stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingVector {
    values: Vec<f64>,
    /// `offsets[i]..offsets[i + 1]` is agent `i`; length `K + 1`.
    offsets: Vec<usize>,
}

impl TimingVector {
    pub fn from_agents(per_agent: Vec<Vec<f64>>) -> Self {
        let mut offsets = Vec::with_capacity(per_agent.len() + 1);
        offsets.push(0);
        let mut values = Vec::new();
        for t in per_agent {
            values.extend(t);
            offsets.push(values.len());
        }
        TimingVector { values, offsets }
    }

    /// A vector with the same layout as `self` holding `values`.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len(), "layout mismatch");
        TimingVector {
            values,
            offsets: self.offsets.clone(),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn agent_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn agents(&self) -> impl Iterator<Item = &[f64]> {
        self.offsets.windows(2).map(|w| &self.values[w[0]..w[1]])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.agents().map(<[f64]>::to_vec).collect()
    }

    /// Whether every agent's times are strictly increasing.
    pub fn is_monotone(&self) -> bool {
        self.agents().all(|t| t.windows(2).all(|w| w[1] > w[0]))
    }
}

/// Routes plus the global constants of one scheduling problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub paths: Vec<WaypointPath>,
    pub v_min: f64,
    pub v_max: f64,
    pub d_safe: f64,
    pub smoothing: SmoothingParams,
}

impl ProblemInstance {
    pub fn new(
        paths: Vec<WaypointPath>,
        v_min: f64,
        v_max: f64,
        d_safe: f64,
        smoothing: SmoothingParams,
    ) -> Result<Self> {
        let inst = ProblemInstance {
            paths,
            v_min,
            v_max,
            d_safe,
            smoothing,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::InvalidParameter("at least one agent required".into()));
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max && self.v_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "speed bounds must satisfy 0 < v_min < v_max, got [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        if !(self.d_safe > 0.0 && self.d_safe.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "d_safe must be > 0, got {}",
                self.d_safe
            )));
        }
        SmoothingParams::new(self.smoothing.beta, self.smoothing.bias)?;
        for p in &self.paths {
            p.validate()?;
        }
        Ok(())
    }

    pub fn num_agents(&self) -> usize {
        self.paths.len()
    }

    /// Stacked dimension `N`.
    pub fn dim(&self) -> usize {
        self.paths.iter().map(WaypointPath::len).sum()
    }

    /// Number of unordered agent pairs.
    pub fn num_pairs(&self) -> usize {
        let k = self.num_agents();
        k * k.saturating_sub(1) / 2
    }

    /// Unordered pairs `(i, j)`, `i < j`, in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let k = self.num_agents();
        (0..k).flat_map(move |i| (i + 1..k).map(move |j| (i, j)))
    }

    /// Timing vector of zeros laid out like this instance.
    pub fn zero_timing(&self) -> TimingVector {
        TimingVector::from_agents(self.paths.iter().map(|p| vec![0.0; p.len()]).collect())
    }
}

/// Per-agent slice of the stacked operators.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBlock {
    /// First index of this agent in `t`.
    pub offset: usize,
    /// First index of this agent in `x` (segment durations).
    pub seg_offset: usize,
    pub len: usize,
    pub start_time: f64,
    pub fixed_arrival: Option<f64>,
    pub seg_lengths: Vec<f64>,
}

/// Difference map `D`, boundary selector `E` with values `e`, objective
/// selector `q` and the duration box, stored block by block.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedOperators {
    pub blocks: Vec<AgentBlock>,
    /// Stacked dimension `N`.
    pub dim: usize,
    /// Number of segment durations, `N - K`.
    pub num_segments: usize,
    pub e: Vec<f64>,
    pub q: Vec<f64>,
    /// `d / v_max`
    pub x_lower: Vec<f64>,
    /// `d / v_min`
    pub x_upper: Vec<f64>,
}

impl StackedOperators {
    /// Build the operators of an instance.
    ///
    /// Fails when a fixed arrival cannot be met at any admissible speed.
    pub fn assemble(inst: &ProblemInstance) -> Result<Self> {
        inst.validate()?;
        let mut blocks = Vec::with_capacity(inst.num_agents());
        let mut offset = 0;
        let mut seg_offset = 0;
        let mut x_lower = Vec::new();
        let mut x_upper = Vec::new();
        let mut q = vec![0.0; inst.dim()];
        let mut e: Vec<f64> = inst.paths.iter().map(|p| p.start_time).collect();

        for (i, p) in inst.paths.iter().enumerate() {
            let seg_lengths = p.segment_lengths();
            let total: f64 = seg_lengths.iter().sum();
            if let Some(tf) = p.fixed_arrival {
                let earliest = p.start_time + total / inst.v_max;
                let latest = p.start_time + total / inst.v_min;
                if tf < earliest || tf > latest {
                    return Err(Error::InfeasibleArrival {
                        agent: i,
                        arrival: tf,
                        earliest,
                        latest,
                    });
                }
                e.push(tf);
            } else {
                q[offset + p.len() - 1] = 1.0;
            }
            x_lower.extend(seg_lengths.iter().map(|d| d / inst.v_max));
            x_upper.extend(seg_lengths.iter().map(|d| d / inst.v_min));
            blocks.push(AgentBlock {
                offset,
                seg_offset,
                len: p.len(),
                start_time: p.start_time,
                fixed_arrival: p.fixed_arrival,
                seg_lengths,
            });
            offset += p.len();
            seg_offset += p.len() - 1;
        }

        Ok(StackedOperators {
            blocks,
            dim: offset,
            num_segments: seg_offset,
            e,
            q,
            x_lower,
            x_upper,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.blocks.len()
    }

    /// Rows of `E`: one per agent start, then one per fixed arrival.
    pub fn num_boundary_rows(&self) -> usize {
        self.e.len()
    }

    /// `D t`
    pub fn apply_d(&self, t: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_segments);
        for b in &self.blocks {
            out.extend(t[b.offset..b.offset + b.len].windows(2).map(|w| w[1] - w[0]));
        }
        out
    }

    /// `D^T x`
    pub fn apply_dt(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for b in &self.blocks {
            for n in 0..b.len - 1 {
                let v = x[b.seg_offset + n];
                out[b.offset + n] -= v;
                out[b.offset + n + 1] += v;
            }
        }
        out
    }

    /// Indices into `t` selected by the rows of `E`, in row order.
    pub fn boundary_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self.blocks.iter().map(|b| b.offset).collect();
        idx.extend(
            self.blocks
                .iter()
                .filter(|b| b.fixed_arrival.is_some())
                .map(|b| b.offset + b.len - 1),
        );
        idx
    }

    /// `E t`
    pub fn apply_e(&self, t: &[f64]) -> Vec<f64> {
        self.boundary_indices().into_iter().map(|k| t[k]).collect()
    }

    /// `E^T y`
    pub fn apply_et(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (row, k) in self.boundary_indices().into_iter().enumerate() {
            out[k] += y[row];
        }
        out
    }

    /// `q^T t`
    pub fn objective(&self, t: &[f64]) -> f64 {
        self.q.iter().zip(t).map(|(a, b)| a * b).sum()
    }

    /// Dense `D`, row-major. Intended for tests and small instances.
    pub fn dense_d(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.dim]; self.num_segments];
        for b in &self.blocks {
            for n in 0..b.len - 1 {
                m[b.seg_offset + n][b.offset + n] = -1.0;
                m[b.seg_offset + n][b.offset + n + 1] = 1.0;
            }
        }
        m
    }

    /// Dense `E`, row-major.
    pub fn dense_e(&self) -> Vec<Vec<f64>> {
        self.boundary_indices()
            .into_iter()
            .map(|k| {
                let mut row = vec![0.0; self.dim];
                row[k] = 1.0;
                row
            })
            .collect()
    }
}

/// Departure at `t_s`, every segment at `v_max`. Agents with a fixed arrival
/// get their durations scaled uniformly to land exactly on it.
pub fn min_time_timing(inst: &ProblemInstance) -> Result<TimingVector> {
    let mut per_agent = Vec::with_capacity(inst.num_agents());
    for (i, p) in inst.paths.iter().enumerate() {
        let lengths = p.segment_lengths();
        let min_duration: f64 = lengths.iter().map(|d| d / inst.v_max).sum();
        let scale = match p.fixed_arrival {
            None => 1.0,
            Some(tf) => {
                let s = (tf - p.start_time) / min_duration;
                // scale in [1, v_max / v_min] keeps every duration inside the box
                if !(s >= 1.0 && s <= inst.v_max / inst.v_min) {
                    return Err(Error::InfeasibleArrival {
                        agent: i,
                        arrival: tf,
                        earliest: p.start_time + min_duration,
                        latest: p.start_time + min_duration * inst.v_max / inst.v_min,
                    });
                }
                s
            }
        };
        let mut t = Vec::with_capacity(p.len());
        let mut acc = p.start_time;
        t.push(acc);
        for d in &lengths {
            acc += scale * d / inst.v_max;
            t.push(acc);
        }
        if let Some(tf) = p.fixed_arrival {
            *t.last_mut().unwrap() = tf;
        }
        per_agent.push(t);
    }
    Ok(TimingVector::from_agents(per_agent))
}

/// `[min_i t^(i)_1, max_i t^(i)_{N_i}]`.
pub fn mission_horizon(timings: &TimingVector) -> (f64, f64) {
    timings.agents().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
        (lo.min(t[0]), hi.max(t[t.len() - 1]))
    })
}
