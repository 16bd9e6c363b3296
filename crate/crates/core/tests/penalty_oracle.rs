use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use velsched_core::penalty::{build_grid, evaluate, penalty_gradient, penalty_value, TemporalGrid};
use velsched_core::trajectory::{SmoothingParams, WaypointPath};
use velsched_core::{ProblemInstance, TimingVector, Vec2};

const BETA: f64 = 14.7;
const BIAS: f64 = 0.1678;

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Smooth position straight from the closed form, without the library's
/// profile type.
fn oracle_position(pts: &[Vec2], times: &[f64], tau: f64) -> Vec2 {
    let mut p = pts[0];
    for n in 0..pts.len() - 1 {
        let v = (pts[n + 1] - pts[n]) * (1.0 / (times[n + 1] - times[n]));
        let a = softplus(BETA * (tau - times[n] - BIAS));
        let b = softplus(BETA * (tau - times[n + 1] - BIAS));
        p += v * ((a - b) / BETA);
    }
    p
}

/// Double loop over pairs and samples.
fn oracle_penalty(inst: &ProblemInstance, t: &TimingVector, grid: &TemporalGrid) -> f64 {
    let k = inst.paths.len();
    let n_pairs = k * (k - 1) / 2;
    let mut sum = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            for &tau in grid.samples() {
                let pi = oracle_position(&inst.paths[i].waypoints, t.agent(i), tau);
                let pj = oracle_position(&inst.paths[j].waypoints, t.agent(j), tau);
                let d = pi.distance(pj);
                sum += (1.0 - d / inst.d_safe).max(0.0);
            }
        }
    }
    grid.delta_tau() / (n_pairs as f64 * grid.span()) * sum
}

/// Agents with 3 or 5 waypoints inside a 4 m box, so routes interact.
fn random_instance(rng: &mut ChaCha8Rng, k: usize, n: usize, d_safe: f64) -> (ProblemInstance, TimingVector) {
    let mut paths = Vec::new();
    let mut times = Vec::new();
    for id in 0..k {
        let mut pts = vec![Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))];
        while pts.len() < n {
            let c = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            if c.distance(pts[pts.len() - 1]) > 0.3 {
                pts.push(c);
            }
        }
        let mut t = vec![rng.random_range(0.0..1.0)];
        for _ in 1..n {
            t.push(t[t.len() - 1] + rng.random_range(0.5..2.0));
        }
        paths.push(WaypointPath::new(id, pts, t[0], None).unwrap());
        times.push(t);
    }
    let inst = ProblemInstance::new(paths, 0.02, 5.0, d_safe, SmoothingParams::new(BETA, BIAS).unwrap()).unwrap();
    (inst, TimingVector::from_agents(times))
}

#[test]
fn matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut active = 0;
    for trial in 0..20 {
        let k = 2 + trial % 2;
        let n = [3, 5][trial % 3 % 2];
        let (inst, t) = random_instance(&mut rng, k, n, 1.2);
        let grid = build_grid(&t, 0.2).unwrap();
        assert!(grid.len() <= 50);
        let f = penalty_value(&inst, &t, &grid).unwrap();
        let o = oracle_penalty(&inst, &t, &grid);
        assert!((f - o).abs() <= 1e-12, "trial {trial}: {f} vs {o}");
        if o > 0.0 {
            active += 1;
        }
    }
    assert!(active >= 10, "only {active} instances with a violation");
}

/// Distance of every pair at every sample, from the oracle positions.
fn all_distances(inst: &ProblemInstance, t: &TimingVector, grid: &TemporalGrid) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..inst.paths.len() {
        for j in i + 1..inst.paths.len() {
            for &tau in grid.samples() {
                let pi = oracle_position(&inst.paths[i].waypoints, t.agent(i), tau);
                let pj = oracle_position(&inst.paths[j].waypoints, t.agent(j), tau);
                out.push(pi.distance(pj));
            }
        }
    }
    out
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 100 {
        let k = rng.random_range(2..=3);
        let n = if rng.random_bool(0.5) { 3 } else { 5 };
        let (inst, t) = random_instance(&mut rng, k, n, 1.5);
        let grid = build_grid(&t, 0.1).unwrap();
        let dists = all_distances(&inst, &t, &grid);
        // away from the hinge kink and the undefined direction at zero distance
        let clear = dists.iter().all(|&d| (d - inst.d_safe).abs() > 1e-3 && d > 1e-3);
        if !clear || !dists.iter().any(|&d| d < inst.d_safe) {
            continue;
        }
        let g = penalty_gradient(&inst, &t, &grid).unwrap();
        let mut fd = vec![0.0; t.len()];
        for (idx, slot) in fd.iter_mut().enumerate() {
            let mut plus = t.as_slice().to_vec();
            plus[idx] += h;
            let mut minus = t.as_slice().to_vec();
            minus[idx] -= h;
            let fp = penalty_value(&inst, &t.with_values(plus), &grid).unwrap();
            let fm = penalty_value(&inst, &t.with_values(minus), &grid).unwrap();
            *slot = (fp - fm) / (2.0 * h);
        }
        let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / scale < 1e-4, "relative error {}", err / scale);
        checked += 1;
    }
}

fn head_on() -> (ProblemInstance, TimingVector) {
    let a = WaypointPath::new(0, vec![Vec2::new(-5.0, 0.0), Vec2::new(5.0, 0.0)], 0.0, None).unwrap();
    let b = WaypointPath::new(1, vec![Vec2::new(5.0, 0.4), Vec2::new(-5.0, 0.4)], 0.0, None).unwrap();
    let inst = ProblemInstance::new(vec![a, b], 0.02, 1.0, 1.0, SmoothingParams::new(BETA, BIAS).unwrap()).unwrap();
    (inst, TimingVector::from_agents(vec![vec![0.0, 10.0], vec![0.0, 10.0]]))
}

#[test]
fn refinement_of_grid_spacing() {
    let (inst, t) = head_on();
    let coarse = penalty_value(&inst, &t, &build_grid(&t, 0.1).unwrap()).unwrap();
    let fine = penalty_value(&inst, &t, &build_grid(&t, 0.05).unwrap()).unwrap();
    assert!(coarse > 0.0);
    assert!((coarse - fine).abs() < 0.05 * coarse, "{coarse} vs {fine}");
}

#[test]
fn zero_penalty_iff_clear() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let (inst, t) = random_instance(&mut rng, 3, 3, 1.0);
        let grid = build_grid(&t, 0.1).unwrap();
        let e = evaluate(&inst, &t, &grid, false).unwrap();
        let min = e.pair_min_distance.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(e.value == 0.0, min >= inst.d_safe);
    }
}

#[test]
fn uninvolved_agent_has_zero_gradient() {
    let (inst2, t2) = head_on();
    let far = WaypointPath::new(2, vec![Vec2::new(-5.0, 20.0), Vec2::new(5.0, 20.0)], 0.0, None).unwrap();
    let mut paths = inst2.paths.clone();
    paths.push(far);
    let inst = ProblemInstance::new(paths, 0.02, 1.0, 1.0, inst2.smoothing).unwrap();
    let mut agents = t2.to_nested();
    agents.push(vec![0.0, 10.0]);
    let t = TimingVector::from_agents(agents);
    let g = penalty_gradient(&inst, &t, &build_grid(&t, 0.1).unwrap()).unwrap();
    assert!(g[..4].iter().any(|&v| v != 0.0));
    assert!(g[4..].iter().all(|&v| v == 0.0));
}
