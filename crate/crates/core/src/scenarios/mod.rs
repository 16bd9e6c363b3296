//! Seeded benchmark generators: random crossing (co- and counter-directional),
//! a bottleneck corridor, and one-way Delaunay road networks.
//!
//! Every generator is a pure function of its [`ScenarioConfig`]; the random
//! stream is a ChaCha8 generator seeded from `config.seed`.

mod bottleneck;
mod crossing;
mod graph;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use self::bottleneck::{gen_bottleneck, CORRIDOR_ENTRY, CORRIDOR_EXIT};
pub use self::crossing::gen_random_crossing;
pub use self::graph::{gen_graph_network, GraphEdge, GraphScenario, NetworkGraph};
use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Vec2};
use crate::problem::ProblemInstance;
use crate::trajectory::{SmoothingParams, WaypointPath};

/// Benchmark family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    RandomCrossingCo,
    RandomCrossingCounter,
    Bottleneck,
    Graph,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::RandomCrossingCo,
        Family::RandomCrossingCounter,
        Family::Bottleneck,
        Family::Graph,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::RandomCrossingCo => "random_crossing_co",
            Family::RandomCrossingCounter => "random_crossing_counter",
            Family::Bottleneck => "bottleneck",
            Family::Graph => "graph",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown family '{s}' (expected one of: random_crossing_co, \
                     random_crossing_counter, bottleneck, graph)"
                ))
            })
    }
}

fn default_half_width() -> f64 {
    10.0
}

fn default_n_waypoints() -> usize {
    10
}

fn default_d_node() -> f64 {
    1.5
}

fn default_v_min() -> f64 {
    0.02
}

fn default_v_max() -> f64 {
    2.0
}

fn default_bandwidth() -> f64 {
    10.0
}

/// Generator inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub family: Family,
    /// Number of agents `K`.
    pub agents: usize,
    /// Occupancy density `phi`.
    pub phi: f64,
    /// Workspace is `[-half_width, half_width]^2`, meters.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    /// Waypoints per agent for the crossing families.
    #[serde(default = "default_n_waypoints")]
    pub n_waypoints: usize,
    /// Target node spacing for the graph family, meters.
    #[serde(default = "default_d_node")]
    pub d_node: f64,
    pub seed: u64,
    /// Explicit safety distance; derived from `phi` when absent.
    #[serde(default)]
    pub d_safe: Option<f64>,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    /// Velocity-loop bandwidth used for the smooth surrogate, rad/s.
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
}

impl ScenarioConfig {
    /// Defaults for everything except the four main knobs.
    pub fn new(family: Family, agents: usize, phi: f64, seed: u64) -> Self {
        ScenarioConfig {
            family,
            agents,
            phi,
            half_width: default_half_width(),
            n_waypoints: default_n_waypoints(),
            d_node: default_d_node(),
            seed,
            d_safe: None,
            v_min: default_v_min(),
            v_max: default_v_max(),
            bandwidth: default_bandwidth(),
        }
    }

    pub fn with_d_safe(mut self, d_safe: f64) -> Self {
        self.d_safe = Some(d_safe);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents < 2 {
            return Err(Error::InvalidParameter(format!(
                "scenarios need at least 2 agents, got {}",
                self.agents
            )));
        }
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "phi must be in (0, 1), got {}",
                self.phi
            )));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "half_width must be > 0, got {}",
                self.half_width
            )));
        }
        if self.n_waypoints < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_waypoints must be >= 2, got {}",
                self.n_waypoints
            )));
        }
        if !(self.d_node > 0.0 && self.d_node.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "d_node must be > 0, got {}",
                self.d_node
            )));
        }
        if let Some(d) = self.d_safe {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("d_safe must be > 0, got {d}")));
            }
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max && self.v_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "speed bounds must satisfy 0 < v_min < v_max, got [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        SmoothingParams::from_bandwidth(self.bandwidth)?;
        Ok(())
    }

    /// Workspace area `A`, m^2.
    pub fn area(&self) -> f64 {
        (2.0 * self.half_width).powi(2)
    }

    /// The override if present, otherwise the density-normalized distance.
    pub fn resolved_d_safe(&self) -> Result<f64> {
        match self.d_safe {
            Some(d) => Ok(d),
            None => safety_distance_from_density(self.phi, self.agents, self.area()),
        }
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    pub(crate) fn instance(&self, paths: Vec<WaypointPath>) -> Result<ProblemInstance> {
        ProblemInstance::new(
            paths,
            self.v_min,
            self.v_max,
            self.resolved_d_safe()?,
            SmoothingParams::from_bandwidth(self.bandwidth)?,
        )
    }

    pub(crate) fn clamp(&self, p: Vec2) -> Vec2 {
        let w = self.half_width;
        Vec2::new(p.x.clamp(-w, w), p.y.clamp(-w, w))
    }

    #[cfg(test)]
    pub(crate) fn contains(&self, p: Vec2) -> bool {
        let w = self.half_width;
        p.x.abs() <= w && p.y.abs() <= w
    }
}

/// Diameter of `K` equal disks covering a fraction `phi` of `area`:
/// `2 sqrt(area phi / (K pi))`.
pub fn safety_distance_from_density(phi: f64, agents: usize, area: f64) -> Result<f64> {
    if !(phi > 0.0 && phi.is_finite()) || agents == 0 || !(area > 0.0 && area.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "density inputs must be positive: phi={phi}, agents={agents}, area={area}"
        )));
    }
    Ok(2.0 * (area * phi / (agents as f64 * std::f64::consts::PI)).sqrt())
}

/// Occupancy density implied by a safety distance (inverse of
/// [`safety_distance_from_density`]).
pub fn density_from_safety_distance(d_safe: f64, agents: usize, area: f64) -> f64 {
    agents as f64 * std::f64::consts::PI * (d_safe / 2.0).powi(2) / area
}

/// Distance from a node to the opposite edge of an equilateral triangle of
/// side `d_node`, halved: `d_node sqrt(3) / 4`.
pub fn graph_feasibility_threshold(d_node: f64) -> Result<f64> {
    if !(d_node > 0.0 && d_node.is_finite()) {
        return Err(Error::InvalidParameter(format!("d_node must be > 0, got {d_node}")));
    }
    Ok(d_node * 3f64.sqrt() / 4.0)
}

/// Smallest distance from `p` to the polyline through `path`'s waypoints.
pub fn distance_to_route(p: Vec2, path: &WaypointPath) -> f64 {
    path.waypoints
        .windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Whether two agents admit at least one order in which the later agent can
/// wait at its start while the earlier one passes and parks clear of the
/// later agent's route. Pairs failing this in both orders (for example two
/// agents driving head-on along the same line) have no safe schedule.
pub fn pair_orderable(a: &WaypointPath, b: &WaypointPath, d_safe: f64) -> bool {
    let first_then = |early: &WaypointPath, late: &WaypointPath| {
        distance_to_route(late.first(), early) >= d_safe && distance_to_route(early.last(), late) >= d_safe
    };
    first_then(a, b) || first_then(b, a)
}

/// [`pair_orderable`] for every pair of paths.
pub fn all_pairs_orderable(paths: &[WaypointPath], d_safe: f64) -> bool {
    (0..paths.len()).all(|i| (i + 1..paths.len()).all(|j| pair_orderable(&paths[i], &paths[j], d_safe)))
}

/// Output of [`generate`]: the instance, plus the road network for the graph
/// family.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    pub instance: ProblemInstance,
    pub graph: Option<GraphScenario>,
}

/// Dispatch on `config.family`.
pub fn generate(config: &ScenarioConfig) -> Result<GeneratedScenario> {
    match config.family {
        Family::RandomCrossingCo | Family::RandomCrossingCounter => Ok(GeneratedScenario {
            instance: gen_random_crossing(config)?,
            graph: None,
        }),
        Family::Bottleneck => Ok(GeneratedScenario {
            instance: gen_bottleneck(config)?,
            graph: None,
        }),
        Family::Graph => {
            let g = gen_graph_network(config)?;
            Ok(GeneratedScenario {
                instance: g.instance.clone(),
                graph: Some(g),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn safety_distance_examples() {
        assert_abs_diff_eq!(
            safety_distance_from_density(0.05, 11, 400.0).unwrap(),
            2.0 * (20.0 / (11.0 * std::f64::consts::PI)).sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(safety_distance_from_density(0.05, 11, 400.0).unwrap(), 1.5215, epsilon = 1e-4);
        let quarter_pi = std::f64::consts::FRAC_PI_4;
        assert_abs_diff_eq!(safety_distance_from_density(quarter_pi, 1, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(safety_distance_from_density(quarter_pi, 1, 4.0).unwrap(), 2.0, epsilon = 1e-12);
        assert!(safety_distance_from_density(0.0, 3, 400.0).is_err());
        assert!(safety_distance_from_density(0.1, 0, 400.0).is_err());
    }

    #[test]
    fn density_round_trip() {
        for &(phi, k) in &[(0.01, 3usize), (0.05, 7), (0.1, 11), (0.3, 20)] {
            let d = safety_distance_from_density(phi, k, 400.0).unwrap();
            assert_abs_diff_eq!(density_from_safety_distance(d, k, 400.0), phi, epsilon = 1e-14);
        }
    }

    #[test]
    fn graph_threshold_examples() {
        assert_abs_diff_eq!(graph_feasibility_threshold(1.5).unwrap(), 0.649519, epsilon = 1e-6);
        assert_abs_diff_eq!(graph_feasibility_threshold(4.0 / 3f64.sqrt()).unwrap(), 1.0, epsilon = 1e-12);
        assert!(graph_feasibility_threshold(0.0).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("ring".parse::<Family>().is_err());
    }

    #[test]
    fn orderability() {
        let line = |id, a: (f64, f64), b: (f64, f64)| {
            WaypointPath::new(id, vec![Vec2::new(a.0, a.1), Vec2::new(b.0, b.1)], 0.0, None).unwrap()
        };
        // head-on along one lane
        assert!(!pair_orderable(&line(0, (-10.0, 0.0), (10.0, 0.0)), &line(1, (10.0, 0.2), (-10.0, 0.2)), 1.0));
        // perpendicular crossing
        assert!(pair_orderable(&line(0, (-10.0, 0.0), (10.0, 0.0)), &line(1, (0.0, -10.0), (0.0, 10.0)), 1.0));
        // same lane, same direction: the agent ahead goes first and parks beyond the other's goal
        assert!(pair_orderable(&line(0, (-10.0, 0.0), (10.0, 0.0)), &line(1, (-5.0, 0.0), (12.0, 0.0)), 1.0));
        // the agent ahead parks on the other's route
        assert!(!pair_orderable(&line(0, (-10.0, 0.0), (10.0, 0.0)), &line(1, (-5.0, 0.0), (5.0, 0.0)), 1.0));
        assert_abs_diff_eq!(distance_to_route(Vec2::new(0.0, 3.0), &line(0, (-1.0, 0.0), (1.0, 0.0))), 3.0);
    }

    #[test]
    fn config_validation() {
        assert!(ScenarioConfig::new(Family::Bottleneck, 11, 0.1, 0).validate().is_ok());
        assert!(ScenarioConfig::new(Family::Bottleneck, 1, 0.1, 0).validate().is_err());
        assert!(ScenarioConfig::new(Family::Bottleneck, 3, 0.0, 0).validate().is_err());
        assert!(ScenarioConfig::new(Family::Bottleneck, 3, 1.0, 0).validate().is_err());
    }
}
