//! Particle simulation of the controlled McKean-Vlasov pair and the flow harness.

mod brownian;
mod control;
mod engine;
mod flow;
mod grid;

pub use brownian::{BrownianSheet, CellMap};
pub use control::{evaluate_control, history_bits, history_cell, BrownianHistory, StepControl};
pub use engine::{
    gain_estimate, simulate_coupled, CloudState, ControlRun, SimConfig, SimContext, Trajectory,
    XiSampler,
};
pub use flow::{flow_check, FlowReport};
pub use grid::TimeGrid;
