use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use velsched_core::problem::min_time_timing;
use velsched_core::solver::TimingSystem;
use velsched_core::trajectory::{SmoothingParams, WaypointPath};
use velsched_core::{ProblemInstance, StackedOperators, Vec2};

fn random_instance(rng: &mut ChaCha8Rng, max_len: usize) -> ProblemInstance {
    let k = rng.random_range(1..=4);
    let paths = (0..k)
        .map(|id| {
            let n = rng.random_range(2..=max_len);
            let mut pts = vec![Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))];
            while pts.len() < n {
                let step = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                if step.norm() > 0.1 {
                    pts.push(pts[pts.len() - 1] + step);
                }
            }
            let start = rng.random_range(0.0..3.0);
            let length: f64 = pts.windows(2).map(|w| w[0].distance(w[1])).sum();
            let arrival = rng.random_bool(0.3).then(|| start + 2.0 * length);
            WaypointPath::new(id, pts, start, arrival).unwrap()
        })
        .collect();
    ProblemInstance::new(paths, 0.05, 1.5, 1.0, SmoothingParams::from_bandwidth(10.0).unwrap()).unwrap()
}

fn dense(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c])
}

#[test]
fn difference_map_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 8);
        let ops = StackedOperators::assemble(&inst).unwrap();
        let t: Vec<f64> = (0..ops.dim).map(|_| rng.random_range(-100.0..100.0)).collect();
        let d = ops.apply_d(&t);
        let mut expected = Vec::new();
        for b in &ops.blocks {
            for n in 0..b.len - 1 {
                expected.push(t[b.offset + n + 1] - t[b.offset + n]);
            }
        }
        assert_eq!(d, expected);
    }
}

#[test]
fn objective_of_min_time_timing() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 8);
        let ops = StackedOperators::assemble(&inst).unwrap();
        let t0 = min_time_timing(&inst).unwrap();
        let expected: f64 = inst
            .paths
            .iter()
            .filter(|p| p.fixed_arrival.is_none())
            .map(|p| p.start_time + p.segment_lengths().iter().map(|d| d / inst.v_max).sum::<f64>())
            .sum();
        assert!((ops.objective(t0.as_slice()) - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }
}

#[test]
fn system_matrix_is_block_diagonal_and_spd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let inst = random_instance(&mut rng, 30);
        let ops = StackedOperators::assemble(&inst).unwrap();
        let e = dense(&ops.dense_e(), ops.dim);
        let d = dense(&ops.dense_d(), ops.dim);
        let m = e.transpose() * &e + d.transpose() * &d + DMatrix::identity(ops.dim, ops.dim);
        assert_eq!(m, m.transpose());
        assert!(m.clone().cholesky().is_some());

        let mut blocks = DMatrix::zeros(ops.dim, ops.dim);
        for b in &ops.blocks {
            let (diag, off) = TimingSystem::block_matrix(b.len, b.fixed_arrival.is_some());
            for k in 0..b.len {
                blocks[(b.offset + k, b.offset + k)] = diag[k];
                if k + 1 < b.len {
                    blocks[(b.offset + k, b.offset + k + 1)] = off[k];
                    blocks[(b.offset + k + 1, b.offset + k)] = off[k];
                }
            }
        }
        assert_eq!(m, blocks);
    }
}
