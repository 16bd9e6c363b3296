//! Waypoint timings to position profiles.
//!
//! Two motion models share the same passage-time vector:
//!
//! * the exact piecewise-linear model, constant velocity on each segment and
//!   holding at the first/last waypoint outside `[t_1, t_N]`;
//! * the smooth surrogate, where each segment velocity is switched on and off
//!   by logistic functions delayed by a tracking bias `b`. Its closed-form
//!   integral is a sum of softplus differences and is differentiable in both
//!   `tau` and the passage times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Ordered waypoints of one agent together with its boundary times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointPath {
    pub id: usize,
    pub waypoints: Vec<Vec2>,
    /// Departure time `t_s`, seconds.
    pub start_time: f64,
    /// Prescribed arrival time `t_f`, seconds.
    #[serde(default)]
    pub fixed_arrival: Option<f64>,
}

impl WaypointPath {
    pub fn new(
        id: usize,
        waypoints: Vec<Vec2>,
        start_time: f64,
        fixed_arrival: Option<f64>,
    ) -> Result<Self> {
        let path = WaypointPath {
            id,
            waypoints,
            start_time,
            fixed_arrival,
        };
        path.validate()?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidPath {
            agent: self.id,
            reason,
        };
        if self.waypoints.len() < 2 {
            return Err(invalid(format!(
                "needs at least 2 waypoints, got {}",
                self.waypoints.len()
            )));
        }
        if let Some(n) = self.segment_lengths().iter().position(|&d| !(d > 0.0)) {
            return Err(invalid(format!("waypoints {n} and {} coincide", n + 1)));
        }
        if !self.start_time.is_finite() {
            return Err(invalid("start time is not finite".into()));
        }
        if let Some(tf) = self.fixed_arrival {
            if !tf.is_finite() {
                return Err(invalid("fixed arrival is not finite".into()));
            }
        }
        Ok(())
    }

    /// Number of waypoints `N_i`.
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn num_segments(&self) -> usize {
        self.waypoints.len().saturating_sub(1)
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        self.waypoints
            .windows(2)
            .map(|w| w[1].distance(w[0]))
            .collect()
    }

    pub fn total_length(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }

    pub fn first(&self) -> Vec2 {
        self.waypoints[0]
    }

    pub fn last(&self) -> Vec2 {
        self.waypoints[self.waypoints.len() - 1]
    }

    /// Translate every waypoint by `w`.
    pub fn translated(&self, w: Vec2) -> WaypointPath {
        WaypointPath {
            waypoints: self.waypoints.iter().map(|&p| p + w).collect(),
            ..self.clone()
        }
    }

    fn check_times(&self, times: &[f64]) -> Result<()> {
        if times.len() != self.waypoints.len() {
            return Err(Error::LengthMismatch {
                agent: self.id,
                expected: self.waypoints.len(),
                got: times.len(),
            });
        }
        Ok(())
    }
}

/// Sharpness and delay of the smooth surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    /// Transition sharpness, 1/s.
    pub beta: f64,
    /// Tracking delay, s.
    pub bias: f64,
    /// Velocity-loop bandwidth the two values were matched to, rad/s.
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

/// `b * omega` for a critically damped loop: the time its step response
/// reaches one half, in units of `1/omega`.
pub const HALF_RISE_TIME_FACTOR: f64 = 1.678;
/// `beta / omega` matching the loop's maximum slope.
pub const SHARPNESS_FACTOR: f64 = 1.47;

impl SmoothingParams {
    pub fn new(beta: f64, bias: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
        }
        if !(bias >= 0.0 && bias.is_finite()) {
            return Err(Error::InvalidParameter(format!("bias must be >= 0, got {bias}")));
        }
        Ok(SmoothingParams {
            beta,
            bias,
            bandwidth: None,
        })
    }

    /// Match a critically damped second-order velocity loop of bandwidth `omega`.
    pub fn from_bandwidth(omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be > 0, got {omega}"
            )));
        }
        Ok(SmoothingParams {
            beta: SHARPNESS_FACTOR * omega,
            bias: HALF_RISE_TIME_FACTOR / omega,
            bandwidth: Some(omega),
        })
    }
}

/// Beyond this magnitude `sigmoid` and `softplus` are replaced by their
/// asymptotes; the neglected terms are below `e^-40 < 5e-18`.
const SATURATION: f64 = 40.0;

/// Logistic function, evaluated without overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x > SATURATION {
        1.0
    } else if x < -SATURATION {
        0.0
    } else if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)`, evaluated without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > SATURATION {
        x
    } else if x < -SATURATION {
        0.0
    } else if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Constant segment velocities `(p_{n+1} - p_n) / (t_{n+1} - t_n)`.
pub fn segment_velocities(path: &WaypointPath, times: &[f64]) -> Result<Vec<Vec2>> {
    path.check_times(times)?;
    path.waypoints
        .windows(2)
        .zip(times.windows(2))
        .enumerate()
        .map(|(n, (p, t))| {
            let dt = t[1] - t[0];
            if !(dt > 0.0) {
                return Err(Error::DegenerateDuration {
                    agent: path.id,
                    segment: n,
                    duration: dt,
                });
            }
            Ok((p[1] - p[0]) / dt)
        })
        .collect()
}

/// Position of the piecewise constant-velocity model. Holds at the first
/// waypoint before `t_1` and at the last one after `t_N`.
///
/// `times` must be strictly increasing with one entry per waypoint.
pub fn piecewise_position(path: &WaypointPath, times: &[f64], tau: f64) -> Vec2 {
    debug_assert_eq!(times.len(), path.len());
    let n = times.len();
    if tau <= times[0] {
        return path.waypoints[0];
    }
    if tau >= times[n - 1] {
        return path.waypoints[n - 1];
    }
    // first index with times[k] > tau; k in 1..n
    let k = times.partition_point(|&t| t <= tau);
    let (t0, t1) = (times[k - 1], times[k]);
    let (p0, p1) = (path.waypoints[k - 1], path.waypoints[k]);
    let s = (tau - t0) / (t1 - t0);
    p0 + (p1 - p0) * s
}

/// Velocity of the piecewise model (zero outside `[t_1, t_N)`).
pub fn piecewise_velocity(path: &WaypointPath, times: &[f64], tau: f64) -> Vec2 {
    let n = times.len();
    if tau < times[0] || tau >= times[n - 1] {
        return Vec2::ZERO;
    }
    let k = times.partition_point(|&t| t <= tau);
    (path.waypoints[k] - path.waypoints[k - 1]) / (times[k] - times[k - 1])
}

/// Smooth surrogate for one agent and one timing vector, with the segment
/// velocities precomputed.
#[derive(Debug, Clone)]
pub struct SmoothProfile<'a> {
    path: &'a WaypointPath,
    times: &'a [f64],
    velocities: Vec<Vec2>,
    params: SmoothingParams,
}

impl<'a> SmoothProfile<'a> {
    pub fn new(path: &'a WaypointPath, times: &'a [f64], params: SmoothingParams) -> Result<Self> {
        let velocities = segment_velocities(path, times)?;
        Ok(SmoothProfile {
            path,
            times,
            velocities,
            params,
        })
    }

    pub fn velocities(&self) -> &[Vec2] {
        &self.velocities
    }

    #[inline]
    fn arg(&self, k: usize, tau: f64) -> f64 {
        self.params.beta * (tau - self.times[k] - self.params.bias)
    }

    pub fn velocity(&self, tau: f64) -> Vec2 {
        let mut acc = Vec2::ZERO;
        let mut s_prev = sigmoid(self.arg(0, tau));
        for (n, &v) in self.velocities.iter().enumerate() {
            let s_next = sigmoid(self.arg(n + 1, tau));
            acc += v * (s_prev - s_next);
            s_prev = s_next;
        }
        acc
    }

    /// Waypoint range `(lo, hi, live)` that matters at `tau`: waypoints
    /// before `lo` and segments before `lo` are fully passed (softplus in its
    /// linear branch, sigmoid exactly 1), segments from `hi` and waypoints
    /// from `live` have not started (softplus and sigmoid exactly 0).
    fn window(&self, tau: f64) -> (usize, usize, usize) {
        let beta = self.params.beta;
        let arg = |t: f64| beta * (tau - t - self.params.bias);
        let passed = self.times.partition_point(|&t| arg(t) > SATURATION);
        let live = self.times.partition_point(|&t| arg(t) >= -SATURATION);
        let lo = passed.saturating_sub(1);
        (lo, live.min(self.velocities.len()), live)
    }

    /// Only the segments inside [`Self::window`] are summed, starting from
    /// the last passed waypoint.
    pub fn position(&self, tau: f64) -> Vec2 {
        let beta = self.params.beta;
        let (lo, hi, _) = self.window(tau);
        let mut acc = Vec2::ZERO;
        if lo < hi {
            let mut z_prev = softplus(self.arg(lo, tau));
            for n in lo..hi {
                let z_next = softplus(self.arg(n + 1, tau));
                acc += self.velocities[n] * ((z_prev - z_next) / beta);
                z_prev = z_next;
            }
        }
        self.path.waypoints[lo] + acc
    }

    /// Position at `tau` and its derivative with respect to every passage
    /// time, written into `jac` (one column per waypoint).
    ///
    /// Outside [`Self::window`] the segment and shifted-argument terms of a
    /// waypoint cancel or vanish, so they are skipped.
    pub fn position_and_jacobian(&self, tau: f64, jac: &mut [Vec2]) -> Vec2 {
        let n_pts = self.times.len();
        debug_assert_eq!(jac.len(), n_pts);
        let beta = self.params.beta;
        let (lo, hi, live) = self.window(tau);

        let mut pos = self.path.waypoints[lo];
        for j in jac.iter_mut() {
            *j = Vec2::ZERO;
        }
        if lo < hi {
            let mut z_prev = softplus(self.arg(lo, tau));
            for n in lo..hi {
                let v = self.velocities[n];
                let z_next = softplus(self.arg(n + 1, tau));
                let s = (z_prev - z_next) / beta;
                pos += v * s;
                // v_n depends on t_n and t_{n+1} through 1/(t_{n+1} - t_n)
                let dv = v * (s / (self.times[n + 1] - self.times[n]));
                jac[n] += dv;
                jac[n + 1] -= dv;
                z_prev = z_next;
            }
        }
        // shifted arguments: d zeta(a_k)/d t_k = -beta * sigma(a_k); at `lo`
        // the incoming segment's term cancels the skipped passed segment
        for k in lo..live {
            let v_before = if k > lo { self.velocities[k - 1] } else { Vec2::ZERO };
            let v_after = if k + 1 < n_pts { self.velocities[k] } else { Vec2::ZERO };
            jac[k] += (v_before - v_after) * sigmoid(self.arg(k, tau));
        }
        pos
    }
}

/// Velocity of the smooth surrogate at `tau`.
pub fn smooth_velocity(
    path: &WaypointPath,
    times: &[f64],
    params: SmoothingParams,
    tau: f64,
) -> Result<Vec2> {
    Ok(SmoothProfile::new(path, times, params)?.velocity(tau))
}

/// Position of the smooth surrogate at `tau`.
pub fn smooth_position(
    path: &WaypointPath,
    times: &[f64],
    params: SmoothingParams,
    tau: f64,
) -> Result<Vec2> {
    Ok(SmoothProfile::new(path, times, params)?.position(tau))
}

/// `d p~(tau) / d t_k` for every waypoint `k`, as a list of 2-D columns.
pub fn smooth_position_jacobian(
    path: &WaypointPath,
    times: &[f64],
    params: SmoothingParams,
    tau: f64,
) -> Result<Vec<Vec2>> {
    let profile = SmoothProfile::new(path, times, params)?;
    let mut jac = vec![Vec2::ZERO; times.len()];
    profile.position_and_jacobian(tau, &mut jac);
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(p: &[(f64, f64)]) -> WaypointPath {
        WaypointPath::new(0, p.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), 0.0, None).unwrap()
    }

    fn table_params() -> SmoothingParams {
        SmoothingParams::from_bandwidth(10.0).unwrap()
    }

    #[test]
    fn path_invariants() {
        assert!(WaypointPath::new(0, vec![Vec2::ZERO], 0.0, None).is_err());
        assert!(WaypointPath::new(0, vec![Vec2::ZERO, Vec2::ZERO], 0.0, None).is_err());
        assert!(WaypointPath::new(0, vec![Vec2::ZERO, Vec2::new(1.0, 0.0)], 0.0, None).is_ok());
    }

    #[test]
    fn segment_velocity_examples() {
        let v = segment_velocities(&line(&[(0.0, 0.0), (2.0, 0.0)]), &[0.0, 1.0]).unwrap();
        assert_eq!(v, vec![Vec2::new(2.0, 0.0)]);
        let v = segment_velocities(&line(&[(0.0, 0.0), (0.0, 3.0)]), &[0.0, 1.5]).unwrap();
        assert_eq!(v, vec![Vec2::new(0.0, 2.0)]);
        let err = segment_velocities(&line(&[(0.0, 0.0), (1.0, 0.0)]), &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateDuration { segment: 0, .. }));
    }

    #[test]
    fn length_mismatch() {
        let err = segment_velocities(&line(&[(0.0, 0.0), (1.0, 0.0)]), &[0.0]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 2, got: 1, .. }));
    }

    #[test]
    fn piecewise_examples() {
        let p = line(&[(0.0, 0.0), (2.0, 0.0)]);
        let t = [0.0, 1.0];
        assert_eq!(piecewise_position(&p, &t, 0.5), Vec2::new(1.0, 0.0));
        assert_eq!(piecewise_position(&p, &t, -1.0), Vec2::new(0.0, 0.0));
        assert_eq!(piecewise_position(&p, &t, 5.0), Vec2::new(2.0, 0.0));
    }

    #[test]
    fn piecewise_multi_segment() {
        let p = line(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0)]);
        let t = [0.0, 1.0, 3.0];
        assert_eq!(piecewise_position(&p, &t, 1.0), Vec2::new(2.0, 0.0));
        assert_eq!(piecewise_position(&p, &t, 2.0), Vec2::new(2.0, 1.0));
        assert_eq!(piecewise_velocity(&p, &t, 2.0), Vec2::new(0.0, 1.0));
        assert_eq!(piecewise_velocity(&p, &t, 3.5), Vec2::ZERO);
    }

    #[test]
    fn bandwidth_matching() {
        let s = table_params();
        assert_abs_diff_eq!(s.bias, 0.1678, epsilon = 1e-12);
        assert_abs_diff_eq!(s.beta, 14.7, epsilon = 1e-12);
        assert_abs_diff_eq!(SmoothingParams::from_bandwidth(1.678).unwrap().bias, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(SmoothingParams::from_bandwidth(1.47).unwrap().beta, 2.1609, epsilon = 1e-12);
        assert!(SmoothingParams::from_bandwidth(0.0).is_err());
        assert!(SmoothingParams::from_bandwidth(-3.0).is_err());
        assert!(SmoothingParams::new(0.0, 0.1).is_err());
        assert!(SmoothingParams::new(1.0, -0.1).is_err());
    }

    #[test]
    fn overflow_safe_activations() {
        assert_eq!(sigmoid(1e3), 1.0);
        assert_eq!(sigmoid(-1e3), 0.0);
        assert_eq!(softplus(1e3), 1e3);
        assert_eq!(softplus(-1e3), 0.0);
        assert_abs_diff_eq!(softplus(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(sigmoid(0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn smooth_velocity_single_segment() {
        let p = line(&[(0.0, 0.0), (2.0, 0.0)]);
        let params = SmoothingParams::new(14.7, 0.1678).unwrap();
        let v = smooth_velocity(&p, &[0.0, 1.0], params, 0.5 + 0.1678).unwrap();
        // direct scalar evaluation of the two logistic terms
        let expected = 2.0 * (1.0 / (1.0 + (-7.35f64).exp()) - 1.0 / (1.0 + 7.35f64.exp()));
        assert_abs_diff_eq!(v.x, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(v.x, 1.99743, epsilon = 1e-5);
        assert_eq!(v.y, 0.0);

        let v = smooth_velocity(&p, &[0.0, 1.0], params, -1e4).unwrap();
        assert_eq!(v, Vec2::ZERO);
    }

    #[test]
    fn smooth_velocity_sharp_limit() {
        let p = line(&[(0.0, 0.0), (2.0, 0.0), (2.0, 3.0)]);
        let t = [0.0, 1.0, 2.5];
        let params = SmoothingParams::new(1e4, 0.0).unwrap();
        let expected = segment_velocities(&p, &t).unwrap();
        for (n, tau) in [0.5, 1.75].into_iter().enumerate() {
            let v = smooth_velocity(&p, &t, params, tau).unwrap();
            assert!((v - expected[n]).norm() < 1e-6);
        }
    }

    #[test]
    fn smooth_position_boundaries() {
        let p = line(&[(0.0, 0.0), (2.0, 0.0), (2.0, 3.0), (-1.0, 3.0)]);
        let t = [0.0, 1.0, 2.5, 4.0];
        let params = table_params();
        let start = smooth_position(&p, &t, params, t[0]).unwrap();
        let tol = p.total_length() * (-params.beta * params.bias).exp();
        assert!(start.distance(p.first()) < tol);

        let end = smooth_position(&p, &t, params, t[3] + params.bias + 2.0).unwrap();
        assert!(end.distance(p.last()) < 1e-4);
    }

    #[test]
    fn smooth_position_sharp_limit() {
        let p = line(&[(0.0, 0.0), (2.0, 0.0), (2.0, 3.0), (-1.0, 3.0)]);
        let t = [0.0, 1.0, 2.5, 4.0];
        let params = SmoothingParams::new(1e4, 0.0).unwrap();
        let prof = SmoothProfile::new(&p, &t, params).unwrap();
        let mut worst: f64 = 0.0;
        for m in 0..=5000 {
            let tau = -0.5 + 5.0 * m as f64 / 5000.0;
            worst = worst.max(prof.position(tau).distance(piecewise_position(&p, &t, tau)));
        }
        assert!(worst < 1e-3, "worst deviation {worst}");
    }

    #[test]
    fn jacobian_far_before_start_vanishes() {
        let p = line(&[(0.0, 0.0), (2.0, 0.0), (2.0, 3.0)]);
        let t = [0.0, 1.0, 2.5];
        let jac = smooth_position_jacobian(&p, &t, table_params(), -10.0).unwrap();
        for c in jac {
            assert!(c.norm() < 1e-8);
        }
    }

    #[test]
    fn jacobian_time_translation_identity() {
        let p = line(&[(0.0, 0.0), (2.0, 0.0), (2.0, 3.0), (-1.0, 3.0)]);
        let t = [0.3, 1.0, 2.5, 4.0];
        let params = table_params();
        for tau in [0.0, 0.7, 1.3, 2.6, 3.9, 5.0] {
            let jac = smooth_position_jacobian(&p, &t, params, tau).unwrap();
            let sum = jac.iter().fold(Vec2::ZERO, |a, &c| a + c);
            let v = smooth_velocity(&p, &t, params, tau).unwrap();
            assert!((sum + v).norm() < 1e-6, "tau {tau}: {sum:?} vs {v:?}");
        }
    }

    /// Closed-form position and Jacobian summed over every segment.
    fn full_sum(path: &WaypointPath, t: &[f64], params: SmoothingParams, tau: f64) -> (Vec2, Vec<Vec2>) {
        let v = segment_velocities(path, t).unwrap();
        let a = |k: usize| params.beta * (tau - t[k] - params.bias);
        let mut pos = path.waypoints[0];
        let mut jac = vec![Vec2::ZERO; t.len()];
        for n in 0..v.len() {
            let s = (softplus(a(n)) - softplus(a(n + 1))) / params.beta;
            pos += v[n] * s;
            let dv = v[n] * (s / (t[n + 1] - t[n]));
            jac[n] += dv;
            jac[n + 1] -= dv;
        }
        for k in 0..t.len() {
            let before = if k > 0 { v[k - 1] } else { Vec2::ZERO };
            let after = if k < v.len() { v[k] } else { Vec2::ZERO };
            jac[k] += (before - after) * sigmoid(a(k));
        }
        (pos, jac)
    }

    #[test]
    fn windowed_sums_match_full_sum() {
        let p = line(&[(0.0, 0.0), (3.0, 0.0), (3.0, 4.0), (-1.0, 4.0), (-1.0, -2.0), (5.0, -2.0)]);
        let t = [0.0, 1.5, 3.0, 3.2, 9.0, 60.0];
        let prof = SmoothProfile::new(&p, &t, table_params()).unwrap();
        let mut jac = vec![Vec2::ZERO; t.len()];
        for k in 0..=8000 {
            let tau = -20.0 + 0.01 * k as f64;
            let (pos, full_jac) = full_sum(&p, &t, table_params(), tau);
            assert!(prof.position(tau).distance(pos) < 1e-12, "tau {tau}");
            assert!(prof.position_and_jacobian(tau, &mut jac).distance(pos) < 1e-12, "tau {tau}");
            for (a, b) in jac.iter().zip(&full_jac) {
                assert!(a.distance(*b) < 1e-12, "tau {tau}: {jac:?} vs {full_jac:?}");
            }
        }
        assert_eq!(prof.position(1e6), Vec2::new(5.0, -2.0));
        assert_eq!(prof.position(-1e6), Vec2::ZERO);
    }
}
