//! Velocity scheduling for agents that must stay on fixed routes.
//!
//! Every agent follows an ordered list of waypoints; the only freedom is
//! *when* it passes each waypoint. The solver chooses those passage times so
//! that the summed completion time is minimal while speed bounds hold and no
//! two agents come closer than a safety distance.
//!
//! The pipeline is:
//!
//! * [`trajectory`] maps passage times to piecewise-linear and smooth
//!   (sigmoid/softplus) position profiles together with analytic sensitivities.
//! * [`problem`] stacks the per-agent data into the linear operators used by
//!   the splitting method.
//! * [`penalty`] measures pairwise safety violations on a temporal grid.
//! * [`solver`] runs the inexact-projection ADMM loop.
//! * [`scenarios`] generates seeded benchmark instances.
//! * [`validation`] checks solved schedules on a finer grid and under a
//!   simulated tracking controller.

pub mod error;
pub mod geometry;
pub mod penalty;
pub mod problem;
pub mod scenarios;
pub mod solver;
pub mod trajectory;
pub mod validation;

pub use error::{Error, Result};
pub use geometry::Vec2;
pub use penalty::{PenaltyEval, TemporalGrid};
pub use problem::{ProblemInstance, StackedOperators, TimingVector};
pub use solver::{PolyakRule, SolveReport, SolveStatus, SolverConfig};
pub use trajectory::{SmoothingParams, WaypointPath};
pub use validation::ValidationReport;
