//! Bottleneck scenario: every agent funnels through the corridor
//! `y = 0, x in [-3, 3]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Family, ScenarioConfig};
use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Vec2};
use crate::problem::ProblemInstance;
use crate::trajectory::WaypointPath;

pub const CORRIDOR_ENTRY: Vec2 = Vec2 { x: -3.0, y: 0.0 };
pub const CORRIDOR_EXIT: Vec2 = Vec2 { x: 3.0, y: 0.0 };

/// Inner x-limit of the start (and, mirrored, goal) region, m.
const FAN_INNER_X: f64 = 5.0;
/// Distance kept from the workspace boundary, m.
const MARGIN: f64 = 0.5;
const MAX_DRAWS: usize = 20_000;

/// Whether `c` may sit near the straight leg from `p` to `hub`: only when it
/// is strictly closer to the hub, so the two agents have a consistent order.
fn leg_compatible(c: Vec2, p: Vec2, hub: Vec2, d: f64) -> bool {
    point_segment_distance(c, p, hub) >= d || c.distance(hub) < p.distance(hub)
}

/// Draw `count` points uniformly in `x in [x_lo, x_hi]`, `|y| <= y_max`,
/// pairwise at least `d` apart and mutually [`leg_compatible`]; returned in
/// increasing distance from `hub`.
fn fan(
    rng: &mut ChaCha8Rng,
    count: usize,
    (x_lo, x_hi): (f64, f64),
    y_max: f64,
    hub: Vec2,
    d: f64,
) -> Result<Vec<Vec2>> {
    let mut out: Vec<Vec2> = Vec::with_capacity(count);
    for _ in 0..MAX_DRAWS {
        if out.len() == count {
            break;
        }
        let c = Vec2::new(rng.random_range(x_lo..=x_hi), rng.random_range(-y_max..=y_max));
        let clear = out
            .iter()
            .all(|&p| p.distance(c) >= d && leg_compatible(c, p, hub, d) && leg_compatible(p, c, hub, d));
        if clear {
            out.push(c);
        }
    }
    if out.len() < count {
        return Err(Error::GenerationFailed(format!(
            "placed only {} of {count} bottleneck endpoints at spacing {d:.3} m",
            out.len()
        )));
    }
    out.sort_by(|a, b| a.distance(hub).total_cmp(&b.distance(hub)));
    Ok(out)
}

/// Bottleneck instance: `[start, (-3, 0), (3, 0), goal]` per agent.
///
/// Starts are scattered over the left band `x in [-w + 0.5, -5]`, goals over
/// the mirrored right band, with endpoints pairwise `d_safe` apart. An
/// endpoint may lie on another agent's leg to or from the corridor only if it
/// is closer to the corridor. Starts nearest the entry are paired with goals
/// farthest from the exit, so the agent that naturally leads through the
/// corridor never has to pass a goal where a later agent already waits.
pub fn gen_bottleneck(cfg: &ScenarioConfig) -> Result<ProblemInstance> {
    cfg.validate()?;
    if cfg.family != Family::Bottleneck {
        return Err(Error::InvalidParameter(format!(
            "gen_bottleneck called with family {}",
            cfg.family
        )));
    }
    let w = cfg.half_width;
    if w - MARGIN <= FAN_INNER_X {
        return Err(Error::InvalidParameter(format!(
            "bottleneck needs half_width > {}, got {w}",
            FAN_INNER_X + MARGIN
        )));
    }
    let d_safe = cfg.resolved_d_safe()?;
    let mut rng = cfg.rng();
    let band = (-(w - MARGIN), -FAN_INNER_X);
    let starts = fan(&mut rng, cfg.agents, band, w - MARGIN, CORRIDOR_ENTRY, d_safe)?;
    let mut goals = fan(&mut rng, cfg.agents, (-band.1, -band.0), w - MARGIN, CORRIDOR_EXIT, d_safe)?;
    goals.reverse();
    let paths = starts
        .into_iter()
        .zip(goals)
        .enumerate()
        .map(|(id, (s, g))| WaypointPath::new(id, vec![s, CORRIDOR_ENTRY, CORRIDOR_EXIT, g], 0.0, None))
        .collect::<Result<Vec<_>>>()?;
    cfg.instance(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> ScenarioConfig {
        ScenarioConfig::new(Family::Bottleneck, 11, 0.1, seed)
    }

    #[test]
    fn corridor_points_in_order() {
        let inst = gen_bottleneck(&cfg(7)).unwrap();
        assert_eq!(inst.num_agents(), 11);
        for p in &inst.paths {
            assert_eq!(p.waypoints[1], CORRIDOR_ENTRY);
            assert_eq!(p.waypoints[2], CORRIDOR_EXIT);
            assert!(p.first().x < CORRIDOR_ENTRY.x && p.last().x > CORRIDOR_EXIT.x);
        }
    }

    #[test]
    fn starts_distinct_and_separated() {
        for seed in 0..10 {
            let inst = gen_bottleneck(&cfg(seed)).unwrap();
            for i in 0..11 {
                for j in i + 1..11 {
                    assert!(inst.paths[i].first().distance(inst.paths[j].first()) >= inst.d_safe);
                    assert!(inst.paths[i].last().distance(inst.paths[j].last()) >= inst.d_safe);
                }
            }
            for p in &inst.paths {
                assert!(p.waypoints.iter().all(|&q| cfg(seed).contains(q)));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(gen_bottleneck(&cfg(3)).unwrap(), gen_bottleneck(&cfg(3)).unwrap());
        assert_ne!(gen_bottleneck(&cfg(3)).unwrap(), gen_bottleneck(&cfg(4)).unwrap());
    }
}
