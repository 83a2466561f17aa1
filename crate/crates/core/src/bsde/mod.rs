//! Penalized constrained-jump BSDE on the Poisson filtration.
//!
//! The equation has no Brownian component: its randomness is the marked point
//! process, which the jump lattice enumerates, so every penalized equation is
//! solved exactly on the lattice. In expectation form, on step `j`,
//!
//! `Y_j = E_ref[Y_{j+1}] + F Δt + Δt Σ_a λ(a) (n U(a)₊ − U(a))`,
//!
//! and the jump part of `E_ref[Y_{j+1}]` cancels the compensator, leaving
//! `Y_j = A + n Δt Σ_a λ(a) U(a)₊` with `A` the no-jump continuation. Jumps are
//! treated implicitly (`U(a) = Z_a − Y_j`).

use crate::control_opt::{batched_values, value_direct, ControlCatalog};
use crate::error::{Error, Result};
use crate::forward_sim::{CloudState, SimConfig, SimContext, TimeGrid, XiSampler};
use crate::lattice::{Lattice, LatticeStats, Rule, TerminalFn};
use crate::measures::EmpiricalMeasure;
use crate::problem::BenchmarkProblem;
use crate::randomized::{randomized_lattice, InitialControl, MarkIntensity, RandomizedConfig};
use crate::stats::mix_seed;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Lower intensity standing in for the open bound ν > 0 in the dual problem.
/// Its effect on the root is at most ε λ(A) (T − t) max|U|.
pub const DUAL_EPS: f64 = 1e-9;
/// Tolerated decrease of the root value between successive penalty levels.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Default penalty schedule 1, 2, 4, ..., 256.
pub fn default_schedule() -> Vec<f64> {
    (0..=8).map(|k| (1u32 << k) as f64).collect()
}

/// Jump lattice together with the reference mark rates.
#[derive(Debug, Clone)]
pub struct JumpHistoryTree {
    pub lattice: Lattice,
    pub rates: Vec<f64>,
}

impl JumpHistoryTree {
    /// Tree rooted at `(t, x, π)` with the initial control and marks of `rcfg`
    /// and `lambda`. Bounds in `rcfg` are ignored.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        problem: &BenchmarkProblem,
        t: f64,
        x: &[f64],
        xi: &XiSampler,
        lambda: &MarkIntensity,
        catalog: &ControlCatalog,
        rcfg: &RandomizedConfig,
        cfg: &SimConfig,
    ) -> Result<Self> {
        let ctx = SimContext::new(problem, t, x, xi, cfg)?;
        Self::build_in(&ctx, lambda, catalog, rcfg.initial, rcfg.k_max, None, None, rcfg.state_cap)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn build_in(
        ctx: &SimContext<'_>,
        lambda: &MarkIntensity,
        catalog: &ControlCatalog,
        initial: InitialControl,
        k_max: usize,
        end_step: Option<usize>,
        terminal: Option<&TerminalFn<'_>>,
        state_cap: usize,
    ) -> Result<Self> {
        let lattice = randomized_lattice(ctx, lambda, catalog, initial, k_max, end_step, terminal, state_cap)?;
        Ok(Self {
            lattice,
            rates: lambda.rates().to_vec(),
        })
    }

    pub fn stats(&self) -> LatticeStats {
        LatticeStats::from(&self.lattice)
    }
}

/// Mean running reward rate on the step into `node` at level `step ≥ 1` (the
/// trapezoid average of f over the step).
pub fn driver_eval(tree: &JumpHistoryTree, step: usize, node: usize) -> Result<f64> {
    if step == 0 || step > tree.lattice.end_step() || node >= tree.lattice.level_len(step) {
        return Err(Error::Tree(format!("no node {node} at step {step}")));
    }
    Ok(tree.lattice.driver(step, node) / tree.lattice.grid().dt())
}

#[derive(Debug, Clone)]
pub struct PenalizedSolution {
    pub n: f64,
    pub root: f64,
    pub dt: f64,
    /// Y per level, flat `nodes × stride` as in the lattice.
    pub y: Vec<Vec<f64>>,
    /// Accumulated penalty K per state.
    pub k: Vec<Vec<f64>>,
    pub max_u_plus: f64,
}

/// Solves the penalized equation with penalty level `n ≥ 0`. At `n = 0` no
/// jump is ever worth anything and Y is the gain of the initial control.
pub fn solve_penalized(n: f64, tree: &JumpHistoryTree) -> Result<PenalizedSolution> {
    if !(n >= 0.0 && n.is_finite()) {
        return Err(Error::Domain {
            value: n,
            domain: "n ≥ 0".into(),
        });
    }
    let sol = tree.lattice.solve(&tree.rates, Rule::Penalized(n))?;
    let k = tree.lattice.accumulate_penalty(&sol)?;
    Ok(PenalizedSolution {
        n,
        root: sol.root,
        dt: tree.lattice.grid().dt(),
        k,
        max_u_plus: sol.max_u_plus,
        y: sol.y,
    })
}

impl PenalizedSolution {
    /// CSV rows `(n, node_id, time, Y, K, max_U_plus)`.
    pub fn write_trace<W: Write>(&self, tree: &JumpHistoryTree, w: W) -> Result<()> {
        let sol = crate::lattice::LatticeSolution {
            root: self.root,
            y: self.y.clone(),
            high_marks: None,
            penalty: None,
            max_u_plus: self.max_u_plus,
        };
        tree.lattice.write_trace(w, self.n, &sol, &self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualReport {
    pub n: f64,
    pub penalized: f64,
    pub dual: f64,
    pub abs: f64,
    /// `abs / max(1, |penalized|)`.
    pub rel: f64,
}

/// Compares the penalized root with the best bang-bang intensity in
/// `{DUAL_EPS, n}` on the same tree.
pub fn dual_check(n: f64, tree: &JumpHistoryTree) -> Result<DualReport> {
    let pen = solve_penalized(n, tree)?.root;
    let dual = if n <= DUAL_EPS {
        tree.lattice.solve(&tree.rates, Rule::BangBang { lo: n, hi: n })?.root
    } else {
        tree.lattice.solve(&tree.rates, Rule::BangBang { lo: DUAL_EPS, hi: n })?.root
    };
    let abs = (pen - dual).abs();
    Ok(DualReport {
        n,
        penalized: pen,
        dual,
        abs,
        rel: abs / pen.abs().max(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: f64,
    pub root: f64,
    pub max_u_plus: f64,
    pub max_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalSolution {
    pub value: f64,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// max (U)₊ ≤ tolerance at the last level solved.
    pub constraint_satisfied: bool,
}

/// Runs the penalty schedule, checking that the root is nondecreasing in n,
/// and stops once successive roots differ by less than `tol`.
pub fn minimal_solution(tree: &JumpHistoryTree, schedule: &[f64], tol: f64) -> Result<MinimalSolution> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateInput("schedule must be non-empty and increasing".into()));
    }
    let mut trace: Vec<TraceRow> = Vec::with_capacity(schedule.len());
    let mut converged = false;
    for &n in schedule {
        let s = solve_penalized(n, tree)?;
        let max_k = s.k.iter().flatten().filter(|v| !v.is_nan()).fold(0.0f64, |a, b| a.max(*b));
        if let Some(prev) = trace.last() {
            if s.root < prev.root - MONOTONE_TOL {
                return Err(Error::SchemeInconsistency(format!(
                    "root value fell from {} at n = {} to {} at n = {}",
                    prev.root, prev.n, s.root, n
                )));
            }
            let done = (s.root - prev.root).abs() < tol;
            trace.push(TraceRow {
                n,
                root: s.root,
                max_u_plus: s.max_u_plus,
                max_k,
            });
            if done {
                converged = true;
                break;
            }
        } else {
            trace.push(TraceRow {
                n,
                root: s.root,
                max_u_plus: s.max_u_plus,
                max_k,
            });
        }
    }
    let last = trace.last().expect("non-empty schedule");
    Ok(MinimalSolution {
        value: last.root,
        converged,
        constraint_satisfied: last.max_u_plus <= tol,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeynmanKacReport {
    pub y: f64,
    pub v_direct: f64,
    pub difference: f64,
    pub solution: MinimalSolution,
}

/// Limit of the penalized roots against the direct value on the same particles.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_check(
    problem: &BenchmarkProblem,
    t: f64,
    x: &[f64],
    xi: &XiSampler,
    lambda: &MarkIntensity,
    catalog: &ControlCatalog,
    rcfg: &RandomizedConfig,
    schedule: &[f64],
    tol: f64,
    cfg: &SimConfig,
) -> Result<FeynmanKacReport> {
    let tree = JumpHistoryTree::build(problem, t, x, xi, lambda, catalog, rcfg, cfg)?;
    let solution = minimal_solution(&tree, schedule, tol)?;
    let v_direct = value_direct(problem, t, x, xi, catalog, cfg)?.value;
    Ok(FeynmanKacReport {
        y: solution.value,
        v_direct,
        difference: (solution.value - v_direct).abs(),
        solution,
    })
}

/// Inner sizes for the continuation values of the DPP check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DppInner {
    /// x-particles per node whose value is estimated (quantile-stratified).
    pub subsample: usize,
    /// Particles per subsampled start in the continuation simulation.
    pub per_start: usize,
}

impl Default for DppInner {
    fn default() -> Self {
        Self {
            subsample: 16,
            per_start: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DppReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub boundary_nodes: usize,
}

/// Starts at the `(i + ½)/k` quantiles of the first coordinate.
fn stratified_starts(x: &[f64], dim: usize, k: usize) -> Vec<f64> {
    let m = x.len() / dim;
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| x[a * dim].total_cmp(&x[b * dim]));
    let mut out = Vec::with_capacity(k * dim);
    for i in 0..k {
        let q = (((i as f64 + 0.5) / k as f64) * m as f64).floor() as usize;
        let p = idx[q.min(m - 1)];
        out.extend_from_slice(&x[p * dim..(p + 1) * dim]);
    }
    out
}

/// V(t, x, π) against sup_ν E^ν[∫ₜˢ E f dr + E V(s, X_s, P_s)].
///
/// The right side optimizes bang-bang intensities on the lattice up to `s`;
/// at every node at `s` the continuation is the mean of the direct value
/// started from quantile-stratified x-particles under the node's law.
#[allow(clippy::too_many_arguments)]
pub fn dpp_check(
    problem: &BenchmarkProblem,
    t: f64,
    s: f64,
    x: &[f64],
    xi: &XiSampler,
    lambda: &MarkIntensity,
    catalog: &ControlCatalog,
    rcfg: &RandomizedConfig,
    inner: DppInner,
    cfg: &SimConfig,
) -> Result<DppReport> {
    if !(t < s && s < problem.horizon) {
        return Err(Error::Domain {
            value: s,
            domain: format!("t < s < T with t = {t}, T = {}", problem.horizon),
        });
    }
    if inner.subsample == 0 || inner.per_start == 0 {
        return Err(Error::DegenerateInput("empty continuation sample".into()));
    }
    let ctx = SimContext::new(problem, t, x, xi, cfg)?;
    let grid = *ctx.grid();
    let s_step = grid.require_node(s)?;
    let dim = problem.state_dim();
    let rest = TimeGrid::new(grid.node(s_step), problem.horizon, grid.n_steps() - s_step)?;
    let terminal = |_: usize, node: usize, st: &CloudState, _: &EmpiricalMeasure| -> Result<f64> {
        let starts = stratified_starts(&st.x, dim, inner.subsample);
        let mut x0 = Vec::with_capacity(starts.len() * inner.per_start);
        for p in starts.chunks(dim) {
            for _ in 0..inner.per_start {
                x0.extend_from_slice(p);
            }
        }
        let sub = SimContext::from_states(problem, rest, st.xi.clone(), x0, mix_seed(cfg.seed, node as u64), false)?;
        let v = batched_values(&sub, catalog, inner.per_start)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    };
    let tree = JumpHistoryTree::build_in(
        &ctx,
        lambda,
        catalog,
        rcfg.initial,
        rcfg.k_max,
        Some(s_step),
        Some(&terminal),
        rcfg.state_cap,
    )?;
    let rhs = tree
        .lattice
        .solve(&tree.rates, Rule::BangBang { lo: rcfg.lo, hi: rcfg.hi })?
        .root;
    let lhs = crate::control_opt::value_direct_in(&ctx, catalog)?.value;
    Ok(DppReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        boundary_nodes: tree.lattice.level_len(s_step),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_opt::{enumerate_step_controls, ControlCatalog};
    use crate::problem::{lookup, ActionSpace, BenchmarkProblem, CoefficientSet, Coefficients};
    use crate::forward_sim::StepControl;
    use crate::lattice::DEFAULT_STATE_CAP;
    use std::sync::Arc;

    fn cfg() -> SimConfig {
        SimConfig {
            n_steps: 10,
            n_xi: 32,
            n_x: 32,
            seed: 4,
        }
    }

    fn rcfg(k_max: usize) -> RandomizedConfig {
        RandomizedConfig {
            k_max,
            lo: 0.1,
            hi: 50.0,
            initial: InitialControl::Catalog(0),
            state_cap: DEFAULT_STATE_CAP,
        }
    }

    fn tree(name: &str, k_max: usize) -> (JumpHistoryTree, ControlCatalog) {
        let p = lookup(name).unwrap();
        let cat = enumerate_step_controls(p.actions.len(), p.horizon, 2, 1, 100).unwrap();
        let lam = MarkIntensity::uniform(cat.len(), 2.0).unwrap();
        let xi = XiSampler::Gaussian { mean: vec![0.0; p.state_dim()], std_dev: 0.3 };
        let x = vec![0.1; p.state_dim()];
        (JumpHistoryTree::build(&p, 0.0, &x, &xi, &lam, &cat, &rcfg(k_max), &cfg()).unwrap(), cat)
    }

    #[derive(Debug)]
    struct ConstantReward(f64);

    impl Coefficients for ConstantReward {
        fn state_dim(&self) -> usize {
            1
        }
        fn drift(&self, _: f64, _: &[f64], _: &EmpiricalMeasure, a: &[f64], out: &mut [f64]) {
            out[0] = a[0];
        }
        fn diffusion(&self, _: f64, _: &[f64], _: &EmpiricalMeasure, _: &[f64], out: &mut [f64]) {
            out[0] = 0.2;
        }
        fn running(&self, _: f64, _: &[f64], _: &EmpiricalMeasure, _: &[f64]) -> f64 {
            self.0
        }
        fn terminal(&self, _: &[f64], _: &EmpiricalMeasure) -> f64 {
            0.0
        }
    }

    fn constant_problem(c: f64) -> BenchmarkProblem {
        BenchmarkProblem {
            name: "constant".into(),
            coefficients: CoefficientSet::new(Arc::new(ConstantReward(c)), 1.0, 0.0, 1.0),
            actions: ActionSpace::scalar(&[-1.0, 1.0], 0.5).unwrap(),
            horizon: 1.0,
            analytic: None,
        }
    }

    #[test]
    fn driver_of_constant_rewards() {
        for c in [0.0, 1.0] {
            let p = constant_problem(c);
            let cat = enumerate_step_controls(2, 1.0, 2, 1, 100).unwrap();
            let lam = MarkIntensity::uniform(4, 1.0).unwrap();
            let t = JumpHistoryTree::build(&p, 0.0, &[0.0], &XiSampler::dirac(&[0.0]), &lam, &cat, &rcfg(2), &cfg()).unwrap();
            for j in 1..=10 {
                for node in 0..t.lattice.level_len(j) {
                    assert!((driver_eval(&t, j, node).unwrap() - c).abs() < 1e-12);
                }
            }
            assert!(driver_eval(&t, 0, 0).is_err());
        }
    }

    #[test]
    fn drift_only_first_driver_is_deterministic() {
        let p = crate::problem::ProblemConfig {
            running_slope: Some(1.0),
            ..crate::problem::ProblemConfig::named("drift-only")
        }
        .build()
        .unwrap();
        let cat = enumerate_step_controls(2, 1.0, 2, 1, 100).unwrap();
        let lam = MarkIntensity::uniform(4, 1.0).unwrap();
        let t = JumpHistoryTree::build(&p, 0.0, &[0.3], &XiSampler::dirac(&[0.0]), &lam, &cat, &rcfg(1), &cfg()).unwrap();
        // Entry 0 plays −1: x over the first step goes 0.3 → 0.2, f = x.
        let node = t.lattice.child(0, 0, 0).unwrap();
        assert!((driver_eval(&t, 1, node).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_problem_solution_vanishes() {
        let (t, _) = tree("zero", 2);
        for n in [0.0, 1.0, 64.0] {
            let s = solve_penalized(n, &t).unwrap();
            assert_eq!(s.root, 0.0);
            assert_eq!(s.max_u_plus, 0.0);
            assert!(s.k.iter().flatten().all(|v| v.is_nan() || *v == 0.0));
            assert_eq!(dual_check(n, &t).unwrap().abs, 0.0);
        }
        let m = minimal_solution(&t, &default_schedule(), 1e-9).unwrap();
        assert!(m.converged);
        assert_eq!(m.trace.len(), 2);
        assert_eq!(m.value, 0.0);
    }

    #[test]
    fn zero_penalty_is_the_initial_control_gain() {
        let p = lookup("two-action-toy").unwrap();
        let cat = enumerate_step_controls(2, 1.0, 2, 1, 100).unwrap();
        let lam = MarkIntensity::uniform(4, 2.0).unwrap();
        let xi = XiSampler::Gaussian { mean: vec![0.0], std_dev: 0.3 };
        let ctx = SimContext::new(&p, 0.0, &[0.1], &xi, &cfg()).unwrap();
        let t = JumpHistoryTree::build_in(&ctx, &lam, &cat, InitialControl::Catalog(1), 2, None, None, DEFAULT_STATE_CAP).unwrap();
        let g = ctx.run_control(cat.get(1), false).unwrap().estimate().mean;
        assert!((solve_penalized(0.0, &t).unwrap().root - g).abs() < 1e-10);
    }

    #[test]
    fn single_mark_is_penalty_independent() {
        let p = lookup("two-action-toy").unwrap();
        let cat = enumerate_step_controls(2, 1.0, 2, 1, 100).unwrap();
        let lam = MarkIntensity::new(vec![2], vec![3.0]).unwrap();
        let mut r = rcfg(2);
        r.initial = InitialControl::Catalog(2);
        let t = JumpHistoryTree::build(&p, 0.0, &[0.0], &XiSampler::dirac(&[0.0]), &lam, &cat, &r, &cfg()).unwrap();
        let y0 = solve_penalized(1.0, &t).unwrap().root;
        for n in [2.0, 16.0, 256.0] {
            assert_eq!(solve_penalized(n, &t).unwrap().root, y0);
            assert!(dual_check(n, &t).unwrap().abs < 1e-15);
        }
        assert!(minimal_solution(&t, &default_schedule(), 1e-9).unwrap().converged);
    }

    #[test]
    fn penalty_is_monotone_and_dual_agrees() {
        for name in ["two-action-toy", "mean-field-drift", "drift-only"] {
            let (t, _) = tree(name, 2);
            let m = minimal_solution(&t, &default_schedule(), 0.0).unwrap();
            assert_eq!(m.trace.len(), 9);
            for n in default_schedule() {
                let d = dual_check(n, &t).unwrap();
                assert!(d.rel <= 1e-6, "{name} n={n}: {d:?}");
            }
        }
    }

    #[test]
    fn accumulated_penalty_is_monotone_along_paths() {
        let (t, _) = tree("two-action-toy", 2);
        let s = solve_penalized(8.0, &t).unwrap();
        let l = &t.lattice;
        assert_eq!(s.k[0][l.slot(0, 0)], 0.0);
        for j in 0..l.end_step() {
            for node in 0..l.level_len(j) {
                for d in 0..=l.k_max() {
                    for c in 0..=l.n_marks() {
                        if !l.reachable(j, node, c, d) {
                            continue;
                        }
                        let k = s.k[j][node * l.stride() + l.slot(c, d)];
                        assert!(k >= 0.0);
                        let ch = l.child(j, node, c).unwrap();
                        assert!(s.k[j + 1][ch * l.stride() + l.slot(c, d)] >= k);
                    }
                }
            }
        }
        let mut buf = Vec::new();
        s.write_trace(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), l.n_states());
        assert!(text.starts_with("8,0,0,"));
    }

    #[test]
    fn single_action_catalog_gives_its_gain() {
        let p = lookup("two-action-toy").unwrap();
        let cat = ControlCatalog::from_controls(vec![StepControl::piecewise(1.0, &[1, 1]).unwrap()], 2).unwrap();
        let lam = MarkIntensity::uniform(1, 1.0).unwrap();
        let r = RandomizedConfig {
            initial: InitialControl::Catalog(0),
            ..rcfg(2)
        };
        let xi = XiSampler::dirac(&[0.0]);
        let fk = feynman_kac_check(&p, 0.0, &[0.0], &xi, &lam, &cat, &r, &default_schedule(), 1e-9, &cfg()).unwrap();
        assert!(fk.difference < 1e-10, "{fk:?}");
    }

    #[test]
    fn zero_problem_dpp_residual_vanishes() {
        let p = lookup("zero").unwrap();
        let cat = enumerate_step_controls(2, 1.0, 2, 1, 100).unwrap();
        let lam = MarkIntensity::uniform(4, 1.0).unwrap();
        let r = dpp_check(&p, 0.0, 0.5, &[0.0], &XiSampler::dirac(&[0.0]), &lam, &cat, &rcfg(1), DppInner { subsample: 2, per_start: 4 }, &cfg()).unwrap();
        assert_eq!(r.residual, 0.0);
        assert!(dpp_check(&p, 0.5, 0.5, &[0.0], &XiSampler::dirac(&[0.0]), &lam, &cat, &rcfg(1), DppInner::default(), &cfg()).is_err());
    }
}
