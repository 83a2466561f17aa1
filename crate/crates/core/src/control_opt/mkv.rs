//! Law-level value for finitely valued initial conditions.
//!
//! With ξ = Σ x_k 1_{E_k}, a control measurable in (B, ξ) is a tuple of Brownian
//! controls, one per atom, and the conditional law given ξ splits atom by atom.
//! Each atom therefore evolves as its own population started from δ_{x_k}.

use super::catalog::{ControlCatalog, DEFAULT_CATALOG_CAP};
use super::direct::{argmax, value_direct, DirectValue};
use crate::error::{Error, Result};
use crate::forward_sim::{BrownianSheet, CellMap, SimConfig, TimeGrid, XiSampler};
use crate::measures::EmpiricalMeasure;
use crate::problem::BenchmarkProblem;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MkvValue {
    pub value: f64,
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub per_atom: Vec<DirectValue>,
}

fn atoms_of(xi: &XiSampler) -> Result<EmpiricalMeasure> {
    xi.atomic_law()
        .ok_or_else(|| Error::UnsupportedInput("ξ must be finitely valued".into()))
}

/// Σ_k p_k V(t, x_k, δ_{x_k}), each atom optimized on its own.
pub fn value_mkv(
    problem: &BenchmarkProblem,
    t: f64,
    xi: &XiSampler,
    catalog: &ControlCatalog,
    cfg: &SimConfig,
) -> Result<MkvValue> {
    let law = atoms_of(xi)?;
    let mut per_atom = Vec::with_capacity(law.len());
    let mut value = 0.0;
    for (x, p) in law.points().zip(law.weights()) {
        let d = value_direct(problem, t, x, &XiSampler::dirac(x), catalog, cfg)?;
        value += p * d.value;
        per_atom.push(d);
    }
    Ok(MkvValue {
        value,
        atoms: law.points().map(|p| p.to_vec()).collect(),
        weights: law.weights().to_vec(),
        per_atom,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMkvValue {
    pub value: f64,
    /// Best catalog index for each atom.
    pub argmax: Vec<usize>,
    pub evaluated: usize,
}

/// Joint search over the product catalog: the ξ-population is simulated as one
/// system in which every particle uses the control assigned to its atom and sees
/// the conditional empirical law of its atom.
///
/// Atom k receives max(2, round(p_k N)) particles; the gain is Σ p_k × (atom mean).
pub fn joint_mkv_value(
    problem: &BenchmarkProblem,
    t: f64,
    xi: &XiSampler,
    catalog: &ControlCatalog,
    cfg: &SimConfig,
    cap: Option<usize>,
) -> Result<JointMkvValue> {
    cfg.validate()?;
    let law = atoms_of(xi)?;
    let k_atoms = law.len();
    let cap = cap.unwrap_or(DEFAULT_CATALOG_CAP);
    let mut count: u128 = 1;
    for _ in 0..k_atoms {
        count = count.saturating_mul(catalog.len() as u128);
    }
    if count > cap as u128 {
        return Err(Error::Capacity {
            what: "product catalog",
            needed: count,
            cap: cap as u128,
        });
    }
    let dim = problem.state_dim();
    let sizes: Vec<usize> = law
        .weights()
        .iter()
        .map(|p| ((p * cfg.n_xi as f64).round() as usize).max(2))
        .collect();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, n| {
            let o = *acc;
            *acc += n;
            Some(o)
        })
        .collect();
    let total: usize = sizes.iter().sum();
    let mut x0 = Vec::with_capacity(total * dim);
    for (k, n) in sizes.iter().enumerate() {
        for _ in 0..*n {
            x0.extend_from_slice(law.point(k));
        }
    }
    let grid = TimeGrid::new(t, problem.horizon, cfg.n_steps)?;
    let sheet = BrownianSheet::new(cfg.seed, total, grid.n_steps(), problem.coefficients.noise_dim());
    let map = CellMap::new(&sheet, &grid, problem.horizon, catalog.intervals, catalog.cells)?;

    let tuples: Vec<Vec<usize>> = (0..count as usize)
        .map(|mut id| {
            (0..k_atoms)
                .map(|_| {
                    let d = id % catalog.len();
                    id /= catalog.len();
                    d
                })
                .collect()
        })
        .collect();

    let sim = |tuple: &Vec<usize>| -> Result<f64> {
        let c = &problem.coefficients.coefficients;
        let d = sheet.noise_dim();
        let dt = grid.dt();
        let sq = dt.sqrt();
        let mut st = x0.clone();
        let mut rew = vec![0.0; total];
        let group_law = |buf: &[f64], k: usize| {
            let lo = offsets[k] * dim;
            EmpiricalMeasure::uniform_flat_unchecked(dim, buf[lo..lo + sizes[k] * dim].to_vec())
        };
        let mut laws: Vec<EmpiricalMeasure> = (0..k_atoms).map(|k| group_law(&st, k)).collect();
        let mut b = vec![0.0; dim];
        let mut s = vec![0.0; dim * d];
        for j in 0..grid.n_steps() {
            let (t0, t1) = (grid.node(j), grid.node(j + 1));
            let iv = map.interval_of_step(j);
            let mut next = vec![0.0; st.len()];
            let mut acts = vec![0usize; total];
            for k in 0..k_atoms {
                let ctrl = catalog.get(tuple[k]);
                for i in offsets[k]..offsets[k] + sizes[k] {
                    let a_idx = ctrl.action(iv, map.cell(i, iv));
                    acts[i] = a_idx;
                    let a = problem.actions.action(a_idx);
                    let x = &st[i * dim..(i + 1) * dim];
                    c.drift(t0, x, &laws[k], a, &mut b);
                    c.diffusion(t0, x, &laws[k], a, &mut s);
                    let z = sheet.normals(i, j);
                    for r in 0..dim {
                        let mut v = x[r] + b[r] * dt;
                        for l in 0..d {
                            v += s[r * d + l] * z[l] * sq;
                        }
                        next[i * dim + r] = v;
                    }
                }
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBlowup { step: j + 1, time: t1 });
            }
            let next_laws: Vec<EmpiricalMeasure> = (0..k_atoms).map(|k| group_law(&next, k)).collect();
            for k in 0..k_atoms {
                for i in offsets[k]..offsets[k] + sizes[k] {
                    let a = problem.actions.action(acts[i]);
                    let f0 = c.running(t0, &st[i * dim..(i + 1) * dim], &laws[k], a);
                    let f1 = c.running(t1, &next[i * dim..(i + 1) * dim], &next_laws[k], a);
                    rew[i] += 0.5 * (f0 + f1) * dt;
                }
            }
            st = next;
            laws = next_laws;
        }
        let mut value = 0.0;
        for k in 0..k_atoms {
            let mut m = 0.0;
            for i in offsets[k]..offsets[k] + sizes[k] {
                m += rew[i] + c.terminal(&st[i * dim..(i + 1) * dim], &laws[k]);
            }
            value += law.weights()[k] * m / sizes[k] as f64;
        }
        Ok(value)
    };

    let values: Vec<f64> = tuples.par_iter().map(sim).collect::<Result<_>>()?;
    let (best, value) = argmax(values.iter().copied());
    Ok(JointMkvValue {
        value,
        argmax: tuples[best].clone(),
        evaluated: tuples.len(),
    })
}
