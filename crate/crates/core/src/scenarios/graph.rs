//! One-way road networks on a Delaunay triangulation of quasi-uniform nodes.

use petgraph::algo::astar;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};

use super::{pair_orderable, Family, ScenarioConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::problem::ProblemInstance;
use crate::trajectory::WaypointPath;

/// Initial Poisson-disk radius as a fraction of the target spacing.
const INITIAL_RADIUS_FRACTION: f64 = 0.7;
/// Accepted band for mean nearest-neighbor spacing, relative to `d_node`.
const SPACING_BAND: (f64, f64) = (0.9, 1.1);
const SPACING_ROUNDS: usize = 30;
/// Candidate points drawn per unit of `area / r^2`.
const CANDIDATE_DENSITY: f64 = 6.0;
/// Orientation redraws before giving up.
const ORIENTATION_RETRIES: usize = 50;
/// Endpoint draws per agent within one orientation.
const ENDPOINT_TRIES: usize = 40;
/// Endpoints are drawn from the outer third of the workspace on each side.
const SIDE_BAND: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: usize,
    pub to: usize,
    pub length: f64,
}

/// Nodes and one-way edges; every Delaunay edge appears exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub nodes: Vec<Vec2>,
    pub edges: Vec<GraphEdge>,
}

impl NetworkGraph {
    /// Mean distance from each node to its nearest neighbor.
    pub fn mean_nearest_neighbor(&self) -> f64 {
        mean_nearest_neighbor(&self.nodes)
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }

    fn digraph(&self) -> DiGraph<(), f64> {
        let mut g = DiGraph::with_capacity(self.nodes.len(), self.edges.len());
        for _ in &self.nodes {
            g.add_node(());
        }
        for e in &self.edges {
            g.add_edge(NodeIndex::new(e.from), NodeIndex::new(e.to), e.length);
        }
        g
    }
}

/// Generated network, per-agent node routes and the scheduling instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphScenario {
    pub graph: NetworkGraph,
    pub routes: Vec<Vec<usize>>,
    pub instance: ProblemInstance,
}

fn mean_nearest_neighbor(nodes: &[Vec2]) -> f64 {
    if nodes.len() < 2 {
        return 0.0;
    }
    let total: f64 = nodes
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &q)| p.distance(q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / nodes.len() as f64
}

/// Dart throwing: uniform candidates, rejected when closer than `r` to an
/// accepted node.
fn poisson_disk(rng: &mut ChaCha8Rng, w: f64, r: f64) -> Vec<Vec2> {
    let candidates = (CANDIDATE_DENSITY * (2.0 * w).powi(2) / (r * r)).ceil() as usize;
    let mut nodes: Vec<Vec2> = Vec::new();
    for _ in 0..candidates {
        let c = Vec2::new(rng.random_range(-w..=w), rng.random_range(-w..=w));
        if nodes.iter().all(|&p| p.distance(c) >= r) {
            nodes.push(c);
        }
    }
    nodes
}

/// Nodes whose mean nearest-neighbor spacing lies in the target band.
fn sample_nodes(rng: &mut ChaCha8Rng, w: f64, d_node: f64) -> Result<Vec<Vec2>> {
    let mut r = INITIAL_RADIUS_FRACTION * d_node;
    let mut last = 0.0;
    for _ in 0..SPACING_ROUNDS {
        let nodes = poisson_disk(rng, w, r);
        last = mean_nearest_neighbor(&nodes);
        let ratio = last / d_node;
        if (SPACING_BAND.0..=SPACING_BAND.1).contains(&ratio) && nodes.len() >= 3 {
            return Ok(nodes);
        }
        r *= (d_node / last).clamp(0.5, 2.0);
    }
    Err(Error::GenerationFailed(format!(
        "node spacing did not reach the target band (last mean spacing {last:.3} m for d_node {d_node} m)"
    )))
}

/// Undirected Delaunay edges as index pairs `(a, b)`, `a < b`, sorted.
pub fn delaunay_edges(nodes: &[Vec2]) -> Result<Vec<(usize, usize)>> {
    let points: Vec<Point2<f64>> = nodes.iter().map(|p| Point2::new(p.x, p.y)).collect();
    let tri = DelaunayTriangulation::<Point2<f64>>::bulk_load_stable(points)
        .map_err(|e| Error::GenerationFailed(format!("triangulation failed: {e:?}")))?;
    if tri.num_vertices() != nodes.len() {
        return Err(Error::GenerationFailed("duplicate nodes in triangulation".into()));
    }
    let mut edges: Vec<(usize, usize)> = tri
        .undirected_edges()
        .map(|e| {
            let [a, b] = e.vertices();
            let (a, b) = (a.fix().index(), b.fix().index());
            (a.min(b), a.max(b))
        })
        .collect();
    edges.sort_unstable();
    Ok(edges)
}

fn orient(rng: &mut ChaCha8Rng, nodes: &[Vec2], undirected: &[(usize, usize)]) -> NetworkGraph {
    let edges = undirected
        .iter()
        .map(|&(a, b)| {
            let (from, to) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            GraphEdge {
                from,
                to,
                length: nodes[a].distance(nodes[b]),
            }
        })
        .collect();
    NetworkGraph {
        nodes: nodes.to_vec(),
        edges,
    }
}

/// Directed shortest route, as node indices.
fn route(g: &DiGraph<(), f64>, from: usize, to: usize) -> Option<Vec<usize>> {
    astar(
        g,
        NodeIndex::new(from),
        |n| n.index() == to,
        |e| *e.weight(),
        |_| 0.0,
    )
    .map(|(_, path)| path.into_iter().map(|n| n.index()).collect())
}

/// Signed coordinate of `p` along one of the four outward directions.
fn side_coordinate(p: Vec2, side: usize) -> f64 {
    match side {
        0 => -p.x,
        1 => p.x,
        2 => -p.y,
        _ => p.y,
    }
}

/// Choose endpoints and routes for every agent on a fixed orientation.
fn assign_agents(
    rng: &mut ChaCha8Rng,
    cfg: &ScenarioConfig,
    graph: &NetworkGraph,
    d_safe: f64,
) -> Option<Vec<Vec<usize>>> {
    let g = graph.digraph();
    let threshold = cfg.half_width * (1.0 - 2.0 * SIDE_BAND);
    let mut starts: Vec<usize> = Vec::new();
    let mut goals: Vec<usize> = Vec::new();
    let mut routes = Vec::with_capacity(cfg.agents);
    let mut paths: Vec<WaypointPath> = Vec::with_capacity(cfg.agents);
    for _ in 0..cfg.agents {
        let mut found = None;
        for _ in 0..ENDPOINT_TRIES {
            let side = rng.random_range(0..4usize);
            let opposite = side ^ 1;
            let mut from: Vec<usize> = (0..graph.nodes.len())
                .filter(|&n| side_coordinate(graph.nodes[n], side) >= threshold)
                .collect();
            let mut to: Vec<usize> = (0..graph.nodes.len())
                .filter(|&n| side_coordinate(graph.nodes[n], opposite) >= threshold)
                .collect();
            from.shuffle(rng);
            to.shuffle(rng);
            let s = from.into_iter().find(|&n| {
                !goals.contains(&n)
                    && starts.iter().all(|&m| graph.nodes[m].distance(graph.nodes[n]) >= d_safe)
            });
            let t = to.into_iter().find(|&n| {
                !starts.contains(&n)
                    && goals.iter().all(|&m| graph.nodes[m].distance(graph.nodes[n]) >= d_safe)
            });
            if let (Some(s), Some(t)) = (s, t) {
                if let Some(r) = route(&g, s, t) {
                    let path = WaypointPath::new(paths.len(), r.iter().map(|&n| graph.nodes[n]).collect(), 0.0, None)
                        .ok()?;
                    if paths.iter().all(|p| pair_orderable(p, &path, d_safe)) {
                        found = Some((s, t, r, path));
                        break;
                    }
                }
            }
        }
        let (s, t, r, path) = found?;
        starts.push(s);
        goals.push(t);
        routes.push(r);
        paths.push(path);
    }
    Some(routes)
}

/// Road-network instance.
///
/// Nodes come from Poisson-disk dart throwing, starting at radius
/// `0.7 d_node` and rescaled until the mean nearest-neighbor spacing is
/// within 10 % of `d_node`. Each Delaunay edge gets a uniformly random
/// direction. Every agent starts on a node in the outer third of a random
/// side and ends on a node in the outer third of the opposite side, following
/// the directed shortest path; starts (and goals) are distinct and `d_safe`
/// apart, and every pair of routes is [`pair_orderable`](super::pair_orderable).
/// The orientation is redrawn when some agent has no admissible route.
pub fn gen_graph_network(cfg: &ScenarioConfig) -> Result<GraphScenario> {
    cfg.validate()?;
    if cfg.family != Family::Graph {
        return Err(Error::InvalidParameter(format!(
            "gen_graph_network called with family {}",
            cfg.family
        )));
    }
    let d_safe = cfg.resolved_d_safe()?;
    let mut rng = cfg.rng();
    let nodes = sample_nodes(&mut rng, cfg.half_width, cfg.d_node)?;
    let undirected = delaunay_edges(&nodes)?;
    for _ in 0..ORIENTATION_RETRIES {
        let graph = orient(&mut rng, &nodes, &undirected);
        if let Some(routes) = assign_agents(&mut rng, cfg, &graph, d_safe) {
            let paths = routes
                .iter()
                .enumerate()
                .map(|(id, r)| WaypointPath::new(id, r.iter().map(|&n| nodes[n]).collect(), 0.0, None))
                .collect::<Result<Vec<_>>>()?;
            let instance = cfg.instance(paths)?;
            return Ok(GraphScenario {
                graph,
                routes,
                instance,
            });
        }
    }
    Err(Error::GenerationFailed(format!(
        "no orientation with routes for all {} agents after {ORIENTATION_RETRIES} draws",
        cfg.agents
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::graph_feasibility_threshold;

    fn cfg(seed: u64) -> ScenarioConfig {
        let d = 0.8 * graph_feasibility_threshold(1.5).unwrap();
        ScenarioConfig::new(Family::Graph, 11, 0.05, seed).with_d_safe(d)
    }

    /// Strictly inside the circumcircle of `a, b, c` (any orientation).
    fn in_circumcircle(a: Vec2, b: Vec2, c: Vec2, p: Vec2) -> bool {
        let (ax, ay) = (a.x - p.x, a.y - p.y);
        let (bx, by) = (b.x - p.x, b.y - p.y);
        let (cx, cy) = (c.x - p.x, c.y - p.y);
        let det = (ax * ax + ay * ay) * (bx * cy - cx * by) - (bx * bx + by * by) * (ax * cy - cx * ay)
            + (cx * cx + cy * cy) * (ax * by - bx * ay);
        let orient = (b - a).cross(c - a);
        det * orient.signum() > 1e-9
    }

    fn strictly_inside(a: Vec2, b: Vec2, c: Vec2, q: Vec2) -> bool {
        let s = [(b - a).cross(q - a), (c - b).cross(q - b), (a - c).cross(q - c)];
        s.iter().all(|&v| v > 0.0) || s.iter().all(|&v| v < 0.0)
    }

    #[test]
    fn delaunay_empty_circumcircles() {
        let mut rng = cfg(0).rng();
        for _ in 0..5 {
            let nodes: Vec<Vec2> = (0..25)
                .map(|_| Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
                .collect();
            let edges = delaunay_edges(&nodes).unwrap();
            let adjacent = |a: usize, b: usize| edges.binary_search(&(a.min(b), a.max(b))).is_ok();
            for &(a, b) in &edges {
                for c in b + 1..nodes.len() {
                    if !adjacent(a, c) || !adjacent(b, c) {
                        continue;
                    }
                    let (pa, pb, pc) = (nodes[a], nodes[b], nodes[c]);
                    let others = || (0..nodes.len()).filter(|&p| p != a && p != b && p != c);
                    // mutually adjacent triple with an empty interior is a face
                    if others().any(|p| strictly_inside(pa, pb, pc, nodes[p])) {
                        continue;
                    }
                    for p in others() {
                        assert!(!in_circumcircle(pa, pb, pc, nodes[p]), "node {p} inside face ({a},{b},{c})");
                    }
                }
            }
        }
    }

    #[test]
    fn spacing_and_orientation() {
        let s = gen_graph_network(&cfg(1)).unwrap();
        let ratio = s.graph.mean_nearest_neighbor() / 1.5;
        assert!((0.9..=1.1).contains(&ratio), "spacing ratio {ratio}");
        let undirected = delaunay_edges(&s.graph.nodes).unwrap();
        assert_eq!(undirected.len(), s.graph.edges.len());
        for e in &s.graph.edges {
            assert!(!s.graph.has_edge(e.to, e.from));
        }
    }

    #[test]
    fn routes_follow_directed_edges() {
        for seed in 0..5 {
            let s = gen_graph_network(&cfg(seed)).unwrap();
            assert_eq!(s.routes.len(), 11);
            for (r, p) in s.routes.iter().zip(&s.instance.paths) {
                for w in r.windows(2) {
                    assert!(s.graph.has_edge(w[0], w[1]));
                }
                assert_eq!(p.len(), r.len());
            }
            let starts: Vec<usize> = s.routes.iter().map(|r| r[0]).collect();
            let mut dedup = starts.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(dedup.len(), starts.len());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(gen_graph_network(&cfg(9)).unwrap(), gen_graph_network(&cfg(9)).unwrap());
    }

    #[test]
    fn routes_pairwise_orderable() {
        for seed in 0..5 {
            let sc = gen_graph_network(&cfg(seed)).unwrap();
            assert!(crate::scenarios::all_pairs_orderable(&sc.instance.paths, sc.instance.d_safe));
        }
    }
}
