//! Exhaustive search over a step-control catalog under common random numbers.

use super::catalog::ControlCatalog;
use crate::error::{Error, Result};
use crate::forward_sim::{SimConfig, SimContext, XiSampler};
use crate::problem::BenchmarkProblem;
use crate::stats::ValueEstimate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectValue {
    pub value: f64,
    /// Catalog index of the best control (lowest index among ties).
    pub argmax: usize,
    pub table: Vec<ValueEstimate>,
}

impl DirectValue {
    /// CSV `control_id,value,std_error` after a `#` provenance comment.
    pub fn write_table<W: Write>(&self, mut w: W, seed: u64, config_hash: &str) -> Result<()> {
        writeln!(w, "# seed={seed} config_hash={config_hash}")?;
        writeln!(w, "control_id,value,std_error")?;
        for (i, e) in self.table.iter().enumerate() {
            writeln!(w, "{i},{:e},{:e}", e.mean, e.std_error)?;
        }
        Ok(())
    }
}

pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Evaluates every catalog entry in `ctx` and keeps the best mean.
pub fn value_direct_in(ctx: &SimContext<'_>, catalog: &ControlCatalog) -> Result<DirectValue> {
    if catalog.is_empty() {
        return Err(Error::DegenerateInput("empty catalog".into()));
    }
    check_catalog(ctx.problem(), catalog)?;
    let table: Vec<ValueEstimate> = catalog
        .controls
        .par_iter()
        .map(|c| ctx.run_control(c, false).map(|r| r.estimate()))
        .collect::<Result<_>>()?;
    let (argmax, value) = argmax(table.iter().map(|e| e.mean));
    Ok(DirectValue {
        value,
        argmax,
        table,
    })
}

/// V(t, x, π) as the best catalog gain.
pub fn value_direct(
    problem: &BenchmarkProblem,
    t: f64,
    x: &[f64],
    xi: &XiSampler,
    catalog: &ControlCatalog,
    cfg: &SimConfig,
) -> Result<DirectValue> {
    let ctx = SimContext::new(problem, t, x, xi, cfg)?;
    value_direct_in(&ctx, catalog)
}

/// Values for several starting points sharing one ξ-cloud.
///
/// The x-particles of `ctx` are split into consecutive groups of `group_size`;
/// each group is one start and is maximized over the catalog separately.
pub fn batched_values(ctx: &SimContext<'_>, catalog: &ControlCatalog, group_size: usize) -> Result<Vec<f64>> {
    check_catalog(ctx.problem(), catalog)?;
    if group_size == 0 || !ctx.n_x().is_multiple_of(group_size) {
        return Err(Error::DegenerateInput("x-particles do not split into groups".into()));
    }
    let groups = ctx.n_x() / group_size;
    let per_control: Vec<Vec<f64>> = catalog
        .controls
        .par_iter()
        .map(|c| {
            ctx.run_control(c, false).map(|r| {
                r.rewards
                    .chunks(group_size)
                    .map(|g| g.iter().sum::<f64>() / group_size as f64)
                    .collect()
            })
        })
        .collect::<Result<_>>()?;
    Ok((0..groups)
        .map(|g| argmax(per_control.iter().map(|v| v[g])).1)
        .collect())
}

fn check_catalog(problem: &BenchmarkProblem, catalog: &ControlCatalog) -> Result<()> {
    if catalog.n_actions > problem.actions.len()
        || catalog.controls.iter().any(|c| c.max_action() >= problem.actions.len())
    {
        return Err(Error::DegenerateInput(
            "catalog uses more actions than the problem defines".into(),
        ));
    }
    if let Some(c) = catalog.controls.first() {
        if (c.horizon() - problem.horizon).abs() > 1e-12 {
            return Err(Error::DegenerateInput("catalog horizon differs from the problem's".into()));
        }
    }
    Ok(())
}
