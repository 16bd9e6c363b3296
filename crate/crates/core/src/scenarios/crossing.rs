//! Random crossing scenarios: agents enter on one workspace edge, leave near
//! the point-reflected position on the opposite edge, and share the central
//! region on the way.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Family, ScenarioConfig};
use crate::error::{Error, Result};
use crate::geometry::{segment_distance, Vec2};
use crate::problem::ProblemInstance;
use crate::trajectory::WaypointPath;

/// Uniform offset per coordinate applied to goals and intermediate waypoints, m.
pub const PERTURBATION: f64 = 0.5;
/// Fraction of the edge length used for start positions.
const EDGE_FILL: f64 = 0.9;
const MAX_ATTEMPTS: usize = 200;

/// Stratified positions along `[-EDGE_FILL w, EDGE_FILL w]`, pairwise at
/// least `min_gap` apart.
fn edge_slots(rng: &mut ChaCha8Rng, count: usize, w: f64, min_gap: f64) -> Result<Vec<f64>> {
    let slot = 2.0 * EDGE_FILL * w / count as f64;
    if slot < min_gap {
        return Err(Error::GenerationFailed(format!(
            "{count} starts with spacing {min_gap:.3} m do not fit on a {:.1} m edge",
            2.0 * EDGE_FILL * w
        )));
    }
    let jitter = 0.5 * (slot - min_gap);
    Ok((0..count)
        .map(|k| -EDGE_FILL * w + (k as f64 + 0.5) * slot + rng.random_range(-1.0..=1.0) * jitter)
        .collect())
}

/// Counter-directional starts: one stratified grid of `n` slots shared by
/// both edges, with `n` the smallest odd number `>= count`. Agent `i` takes
/// slot `i`, on the left edge for even `i` and the right edge for odd `i`.
/// Because `n` is odd, a slot and its mirror image `-y` never sit on
/// opposite edges, so the point-reflected chords of two opposing agents stay
/// at least one slot minus jitter apart at the edges.
fn interleaved_slots(rng: &mut ChaCha8Rng, count: usize, w: f64, d_safe: f64) -> Result<Vec<Vec2>> {
    let n = count | 1;
    let slot = 2.0 * EDGE_FILL * w / n as f64;
    if 2.0 * slot < d_safe {
        return Err(Error::GenerationFailed(format!(
            "{count} counter-directional starts with spacing {d_safe:.3} m do not fit on a {:.1} m edge",
            2.0 * EDGE_FILL * w
        )));
    }
    let jitter = 0.5 * (slot - d_safe).max(0.0);
    Ok((0..count)
        .map(|i| {
            let y = -EDGE_FILL * w + (i as f64 + 0.5) * slot + rng.random_range(-1.0..=1.0) * jitter;
            Vec2::new(if i % 2 == 0 { -w } else { w }, y)
        })
        .collect())
}

fn perturb(rng: &mut ChaCha8Rng, p: Vec2) -> Vec2 {
    p + Vec2::new(
        rng.random_range(-PERTURBATION..=PERTURBATION),
        rng.random_range(-PERTURBATION..=PERTURBATION),
    )
}

fn min_pairwise(points: &[Vec2]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(points[i].distance(points[j]));
        }
    }
    best
}

/// Whether two straight start-goal chords pass within `d` of each other.
fn has_conflict(starts: &[Vec2], goals: &[Vec2], d: f64) -> bool {
    (0..starts.len()).any(|i| {
        (i + 1..starts.len()).any(|j| segment_distance(starts[i], goals[i], starts[j], goals[j]) < d)
    })
}

fn attempt(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng, d_safe: f64) -> Result<Option<ProblemInstance>> {
    let k = cfg.agents;
    let w = cfg.half_width;
    let counter = cfg.family == Family::RandomCrossingCounter;

    let starts: Vec<Vec2> = if counter {
        interleaved_slots(rng, k, w, d_safe)?
    } else {
        edge_slots(rng, k, w, d_safe)?
            .into_iter()
            .map(|y| Vec2::new(-w, y))
            .collect()
    };

    let mut paths = Vec::with_capacity(k);
    let mut goals = Vec::with_capacity(k);
    for (id, &s) in starts.iter().enumerate() {
        let goal = cfg.clamp(perturb(rng, -s));
        let n = cfg.n_waypoints;
        let mut pts = Vec::with_capacity(n);
        pts.push(s);
        for m in 1..n - 1 {
            let along = s + (goal - s) * (m as f64 / (n - 1) as f64);
            pts.push(cfg.clamp(perturb(rng, along)));
        }
        pts.push(goal);
        goals.push(goal);
        paths.push(WaypointPath::new(id, pts, 0.0, None)?);
    }

    // agents hold at their goals, so goals must be mutually safe
    if min_pairwise(&goals) < d_safe {
        return Ok(None);
    }
    if counter && !has_conflict(&starts, &goals, d_safe) {
        return Ok(None);
    }
    cfg.instance(paths).map(Some)
}

/// Random crossing instance for [`Family::RandomCrossingCo`] or
/// [`Family::RandomCrossingCounter`].
///
/// Starts are stratified along the left edge (co-directional) or alternate
/// between the left and right edges on an interleaved grid
/// (counter-directional). Each goal is the
/// start reflected through the workspace center; goals and intermediate
/// waypoints on the start-goal chord receive a uniform perturbation of up to
/// [`PERTURBATION`] per coordinate and are clamped to the workspace. Draws
/// with unsafe goal spacing, or counter-directional draws without any
/// conflicting pair of chords, are redrawn. Draws are not screened for
/// schedulability: at high density some instances are infeasible.
pub fn gen_random_crossing(cfg: &ScenarioConfig) -> Result<ProblemInstance> {
    cfg.validate()?;
    if !matches!(cfg.family, Family::RandomCrossingCo | Family::RandomCrossingCounter) {
        return Err(Error::InvalidParameter(format!(
            "gen_random_crossing called with family {}",
            cfg.family
        )));
    }
    let d_safe = cfg.resolved_d_safe()?;
    let mut rng = cfg.rng();
    for _ in 0..MAX_ATTEMPTS {
        if let Some(inst) = attempt(cfg, &mut rng, d_safe)? {
            return Ok(inst);
        }
    }
    Err(Error::GenerationFailed(format!(
        "no valid {} instance after {MAX_ATTEMPTS} draws",
        cfg.family
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::segments_intersect;

    #[test]
    fn deterministic_per_seed() {
        let cfg = ScenarioConfig::new(Family::RandomCrossingCounter, 7, 0.05, 42);
        assert_eq!(gen_random_crossing(&cfg).unwrap(), gen_random_crossing(&cfg).unwrap());
        let other = ScenarioConfig { seed: 43, ..cfg.clone() };
        assert_ne!(gen_random_crossing(&cfg).unwrap(), gen_random_crossing(&other).unwrap());
    }

    #[test]
    fn counter_pair_chords_cross() {
        for seed in 0..20 {
            let cfg = ScenarioConfig::new(Family::RandomCrossingCounter, 2, 0.01, seed);
            let inst = gen_random_crossing(&cfg).unwrap();
            let (a, b) = (&inst.paths[0], &inst.paths[1]);
            assert!(a.first().x < 0.0 && b.first().x > 0.0);
            assert!(segments_intersect(a.first(), a.last(), b.first(), b.last()), "seed {seed}");
        }
    }

    #[test]
    fn co_goals_beyond_midline() {
        for seed in 0..20 {
            let cfg = ScenarioConfig::new(Family::RandomCrossingCo, 3, 0.05, seed);
            let inst = gen_random_crossing(&cfg).unwrap();
            for p in &inst.paths {
                assert!(p.first().x < 0.0);
                assert!(p.last().x > 0.0);
                assert_eq!(p.len(), 10);
            }
        }
    }

    #[test]
    fn inside_workspace_and_separated() {
        for seed in 0..20 {
            let cfg = ScenarioConfig::new(Family::RandomCrossingCounter, 7, 0.05, seed);
            let inst = gen_random_crossing(&cfg).unwrap();
            for p in &inst.paths {
                assert!(p.waypoints.iter().all(|&q| cfg.contains(q)));
            }
            let starts: Vec<Vec2> = inst.paths.iter().map(|p| p.first()).collect();
            assert!(min_pairwise(&starts) >= inst.d_safe);
        }
    }

    #[test]
    fn overrides_and_wrong_family() {
        let cfg = ScenarioConfig::new(Family::RandomCrossingCo, 3, 0.05, 1).with_d_safe(1.0);
        assert_eq!(gen_random_crossing(&cfg).unwrap().d_safe, 1.0);
        let cfg = ScenarioConfig::new(Family::Bottleneck, 3, 0.05, 1);
        assert!(gen_random_crossing(&cfg).is_err());
    }
}
