//! Value-function solvers for optimal control of McKean-Vlasov dynamics.
//!
//! The crate computes `V(t, x, π)` along three independent routes (direct search
//! over step controls, Poisson-randomized intensity control and a penalized
//! constrained-jump BSDE) and provides the cross-checks that tie them together.

pub mod bsde;
pub mod control_opt;
pub mod error;
pub mod forward_sim;
pub mod lattice;
pub mod measures;
pub mod problem;
pub mod randomized;
pub mod stats;

pub use error::{Error, Result};
pub use forward_sim::{SimConfig, StepControl, TimeGrid, XiSampler};
pub use measures::{empirical_from_samples, moment_norm, wasserstein2, EmpiricalMeasure};
pub use problem::{ActionSpace, BenchmarkProblem, CoefficientSet, Coefficients};
pub use stats::{SeedSummary, ValueEstimate};
