//! V^R by backward induction over bang-bang intensities on the jump lattice.

use super::intensity::check_bounds;
use super::{LatticePolicy, MarkIntensity};
use crate::control_opt::ControlCatalog;
use crate::error::{Error, Result};
use crate::forward_sim::{SimConfig, SimContext, StepControl, XiSampler};
use crate::lattice::{Lattice, LatticeStats, Rule, TerminalFn, DEFAULT_STATE_CAP};
use crate::problem::BenchmarkProblem;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Control in force before the first jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialControl {
    /// A catalog entry ᾱ.
    Catalog(usize),
    /// The constant action a₀ (the shifted problem).
    Action(usize),
}

impl Default for InitialControl {
    fn default() -> Self {
        InitialControl::Catalog(0)
    }
}

impl InitialControl {
    pub fn control(&self, problem: &BenchmarkProblem, catalog: &ControlCatalog) -> Result<StepControl> {
        match *self {
            InitialControl::Catalog(i) if i < catalog.len() => Ok(catalog.get(i).clone()),
            InitialControl::Action(a) if a < problem.actions.len() => Ok(StepControl::constant(problem.horizon, a)),
            _ => Err(Error::DegenerateInput("initial control out of range".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedConfig {
    pub k_max: usize,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub initial: InitialControl,
    #[serde(default = "default_cap")]
    pub state_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_STATE_CAP
}

#[derive(Debug, Clone)]
pub struct RandomizedValue {
    pub value: f64,
    pub stats: LatticeStats,
    /// The optimal bang-bang intensities.
    pub policy: LatticePolicy,
}

/// Lattice with the initial control at id 0 and the marks of `lambda` at ids
/// `1..=|λ|` in mark order.
#[allow(clippy::too_many_arguments)]
pub fn randomized_lattice(
    ctx: &SimContext<'_>,
    lambda: &MarkIntensity,
    catalog: &ControlCatalog,
    initial: InitialControl,
    k_max: usize,
    end_step: Option<usize>,
    terminal: Option<&TerminalFn<'_>>,
    state_cap: usize,
) -> Result<Lattice> {
    lambda.check_catalog(catalog)?;
    let mut controls = vec![initial.control(ctx.problem(), catalog)?];
    controls.extend(lambda.marks().iter().map(|&m| catalog.get(m).clone()));
    Lattice::build(ctx, &controls, k_max, end_step, state_cap, terminal)
}

/// sup over ν ∈ [lo, hi] of J^R on the lattice.
pub fn value_randomized(
    problem: &BenchmarkProblem,
    t: f64,
    x: &[f64],
    xi: &XiSampler,
    lambda: &MarkIntensity,
    catalog: &ControlCatalog,
    rcfg: &RandomizedConfig,
    cfg: &SimConfig,
) -> Result<RandomizedValue> {
    check_bounds(rcfg.lo, rcfg.hi)?;
    let ctx = SimContext::new(problem, t, x, xi, cfg)?;
    let lattice = randomized_lattice(&ctx, lambda, catalog, rcfg.initial, rcfg.k_max, None, None, rcfg.state_cap)?;
    let sol = lattice.solve(lambda.rates(), Rule::BangBang { lo: rcfg.lo, hi: rcfg.hi })?;
    let stats = LatticeStats::from(&lattice);
    let policy = LatticePolicy::new(Arc::new(lattice), &sol, rcfg.lo, rcfg.hi)?;
    Ok(RandomizedValue {
        value: sol.root,
        stats,
        policy,
    })
}
