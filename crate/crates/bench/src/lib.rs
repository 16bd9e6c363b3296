//! Fixed benchmark fixtures.

use velsched_core::problem::min_time_timing;
use velsched_core::scenarios::{generate, Family, ScenarioConfig};
use velsched_core::{ProblemInstance, TimingVector};

/// Seeded scenario instance.
pub fn instance(family: Family, agents: usize, phi: f64, seed: u64) -> ProblemInstance {
    generate(&ScenarioConfig::new(family, agents, phi, seed))
        .expect("benchmark scenario generates")
        .instance
}

/// Instance together with its speed-limit timing, the solver's start point.
pub fn with_min_time(inst: ProblemInstance) -> (ProblemInstance, TimingVector) {
    let t = min_time_timing(&inst).expect("benchmark instance is feasible");
    (inst, t)
}
