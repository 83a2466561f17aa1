//! Euler-Maruyama for the coupled pair (ξ-cloud, x-particles).
//!
//! The ξ-cloud carries the law argument: at every node the coefficients see the
//! empirical measure of the cloud at the left end of the step. The x-particles
//! start from prescribed points, see the same law and are driven by their own
//! rows of the Brownian sheet (the ξ rows themselves when the two families are
//! paired).

use super::brownian::{BrownianSheet, CellMap};
use super::control::StepControl;
use super::grid::TimeGrid;
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::problem::BenchmarkProblem;
use crate::stats::{mix_seed, ValueEstimate};
use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::{Arc, Mutex};

const XI_SALT: u64 = 0x5e1f_0001;

/// Source of initial ξ-particles with law π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XiSampler {
    /// Atoms drawn i.i.d. according to the weights.
    Empirical { measure: EmpiricalMeasure },
    /// Independent N(mean, std_dev²) components.
    Gaussian { mean: Vec<f64>, std_dev: f64 },
    Dirac { point: Vec<f64> },
}

impl XiSampler {
    pub fn empirical(measure: EmpiricalMeasure) -> Self {
        XiSampler::Empirical { measure }
    }

    pub fn dirac(point: &[f64]) -> Self {
        XiSampler::Dirac {
            point: point.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            XiSampler::Empirical { measure } => measure.dim(),
            XiSampler::Gaussian { mean, .. } => mean.len(),
            XiSampler::Dirac { point } => point.len(),
        }
    }

    /// The law π when it is atomic.
    pub fn atomic_law(&self) -> Option<EmpiricalMeasure> {
        match self {
            XiSampler::Empirical { measure } => Some(measure.clone()),
            XiSampler::Dirac { point } => EmpiricalMeasure::dirac(point).ok(),
            XiSampler::Gaussian { .. } => None,
        }
    }

    /// `n` draws, flat row-major; deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, XI_SALT));
        let out = match self {
            XiSampler::Empirical { measure } => {
                let w = WeightedIndex::new(measure.weights())
                    .map_err(|e| Error::DegenerateInput(e.to_string()))?;
                let mut v = Vec::with_capacity(n * measure.dim());
                for _ in 0..n {
                    v.extend_from_slice(measure.point(w.sample(&mut rng)));
                }
                v
            }
            XiSampler::Gaussian { mean, std_dev } => {
                if !(*std_dev >= 0.0) {
                    return Err(Error::DegenerateInput("negative standard deviation".into()));
                }
                let mut v = Vec::with_capacity(n * mean.len());
                for _ in 0..n {
                    for m in mean {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        v.push(m + std_dev * z);
                    }
                }
                v
            }
            XiSampler::Dirac { point } => point.repeat(n),
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite ξ sample".into()));
        }
        Ok(out)
    }
}

/// Discretization and Monte Carlo sizes of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_steps: usize,
    /// ξ-particles (N).
    pub n_xi: usize,
    /// x-particles (M).
    pub n_x: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.n_xi < 2 || self.n_x == 0 {
            return Err(Error::DegenerateInput(
                "need n_steps >= 1, N >= 2 and M >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// States of both particle families at one node, flat row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudState {
    pub xi: Vec<f64>,
    pub x: Vec<f64>,
}

/// All node states of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub dim: usize,
    pub states: Vec<CloudState>,
}

impl Trajectory {
    /// CSV with columns `step,time,particle_id,component,value,kind`, preceded by
    /// a `#` comment naming the seed and configuration hash.
    pub fn write_csv<W: Write>(&self, mut w: W, seed: u64, config_hash: &str) -> Result<()> {
        writeln!(w, "# seed={seed} config_hash={config_hash}")?;
        writeln!(w, "step,time,particle_id,component,value,kind")?;
        for (j, st) in self.states.iter().enumerate() {
            let t = self.grid.node(j);
            for (kind, buf) in [("xi", &st.xi), ("x", &st.x)] {
                for (p, chunk) in buf.chunks(self.dim).enumerate() {
                    for (c, v) in chunk.iter().enumerate() {
                        writeln!(w, "{j},{t},{p},{c},{v:e},{kind}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Result of running one control from a start node.
#[derive(Debug, Clone)]
pub struct ControlRun {
    /// Per x-particle total reward (trapezoid running reward plus terminal).
    pub rewards: Vec<f64>,
    pub trajectory: Option<Vec<CloudState>>,
}

impl ControlRun {
    pub fn estimate(&self) -> ValueEstimate {
        ValueEstimate::from_samples(&self.rewards)
    }
}

/// Shared randomness and initial data for simulations under many controls.
///
/// Every control evaluated through the same context sees the same ξ-cloud and
/// Brownian increments (common random numbers).
pub struct SimContext<'p> {
    problem: &'p BenchmarkProblem,
    grid: TimeGrid,
    sheet: Arc<BrownianSheet>,
    xi0: Vec<f64>,
    x0: Vec<f64>,
    n_xi: usize,
    n_x: usize,
    paired: bool,
    maps: Mutex<Vec<((usize, usize), Arc<CellMap>)>>,
}

impl<'p> SimContext<'p> {
    /// Context for a start `(t, x)` with ξ drawn from `xi`; pairs x-rows with
    /// ξ-rows when `M = N`.
    pub fn new(problem: &'p BenchmarkProblem, t: f64, x: &[f64], xi: &XiSampler, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let dim = problem.state_dim();
        if x.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: x.len(),
            });
        }
        if xi.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: xi.dim(),
            });
        }
        let grid = TimeGrid::new(t, problem.horizon, cfg.n_steps)?;
        let xi0 = xi.sample(cfg.n_xi, cfg.seed)?;
        let x0 = x.repeat(cfg.n_x);
        Self::from_states(problem, grid, xi0, x0, cfg.seed, cfg.n_x == cfg.n_xi)
    }

    /// Context from explicit initial clouds.
    pub fn from_states(
        problem: &'p BenchmarkProblem,
        grid: TimeGrid,
        xi0: Vec<f64>,
        x0: Vec<f64>,
        seed: u64,
        paired: bool,
    ) -> Result<Self> {
        let dim = problem.state_dim();
        if xi0.is_empty() || !xi0.len().is_multiple_of(dim) || x0.is_empty() || !x0.len().is_multiple_of(dim) {
            return Err(Error::DegenerateInput("empty or ragged initial cloud".into()));
        }
        if (grid.t_end() - problem.horizon).abs() > 1e-12 {
            return Err(Error::Domain {
                value: grid.t_end(),
                domain: format!("grid must end at T = {}", problem.horizon),
            });
        }
        let n_xi = xi0.len() / dim;
        let n_x = x0.len() / dim;
        let paired = paired && n_xi == n_x;
        let rows = if paired { n_xi } else { n_xi + n_x };
        let sheet = Arc::new(BrownianSheet::new(seed, rows, grid.n_steps(), problem.coefficients.noise_dim()));
        Ok(Self {
            problem,
            grid,
            sheet,
            xi0,
            x0,
            n_xi,
            n_x,
            paired,
            maps: Mutex::new(Vec::new()),
        })
    }

    pub fn problem(&self) -> &BenchmarkProblem {
        self.problem
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sheet(&self) -> &BrownianSheet {
        &self.sheet
    }

    pub fn n_xi(&self) -> usize {
        self.n_xi
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn initial_state(&self) -> CloudState {
        CloudState {
            xi: self.xi0.clone(),
            x: self.x0.clone(),
        }
    }

    pub fn law_of(&self, state: &CloudState) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform_flat_unchecked(self.problem.state_dim(), state.xi.clone())
    }

    #[inline]
    pub fn x_row(&self, j: usize) -> usize {
        if self.paired {
            j
        } else {
            self.n_xi + j
        }
    }

    /// Cell map for controls with `intervals` pieces and `cells` cells.
    pub fn cell_map(&self, intervals: usize, cells: usize) -> Result<Arc<CellMap>> {
        let mut maps = self.maps.lock().expect("cell map cache poisoned");
        if let Some((_, m)) = maps.iter().find(|(k, _)| *k == (intervals, cells)) {
            return Ok(m.clone());
        }
        let m = Arc::new(CellMap::new(&self.sheet, &self.grid, self.problem.horizon, intervals, cells)?);
        maps.push(((intervals, cells), m.clone()));
        Ok(m)
    }

    /// Per-particle action indices of `ctrl` on step `j`.
    pub fn control_actions(&self, ctrl: &StepControl, map: &CellMap, j: usize) -> (Vec<usize>, Vec<usize>) {
        let iv = map.interval_of_step(j);
        let xi: Vec<usize> = (0..self.n_xi).map(|r| ctrl.action(iv, map.cell(r, iv))).collect();
        let x: Vec<usize> = (0..self.n_x)
            .map(|p| ctrl.action(iv, map.cell(self.x_row(p), iv)))
            .collect();
        (xi, x)
    }

    /// One Euler step from node `j`. Returns the new state, its law and the mean
    /// over x-particles of the trapezoid running reward; per-particle rewards
    /// are added to `acc` when given.
    pub fn step(
        &self,
        j: usize,
        state: &CloudState,
        law: &EmpiricalMeasure,
        xi_act: &[usize],
        x_act: &[usize],
        acc: Option<&mut [f64]>,
    ) -> Result<(CloudState, EmpiricalMeasure, f64)> {
        let c = &self.problem.coefficients.coefficients;
        let actions = &self.problem.actions;
        let n = self.problem.state_dim();
        let d = self.sheet.noise_dim();
        let dt = self.grid.dt();
        let sq = dt.sqrt();
        let t0 = self.grid.node(j);
        let t1 = self.grid.node(j + 1);
        let mut b = vec![0.0; n];
        let mut s = vec![0.0; n * d];

        let mut advance = |src: &[f64], row: usize, a: &[f64], dst: &mut [f64]| {
            c.drift(t0, src, law, a, &mut b);
            c.diffusion(t0, src, law, a, &mut s);
            let z = self.sheet.normals(row, j);
            for k in 0..n {
                let mut v = src[k] + b[k] * dt;
                for l in 0..d {
                    v += s[k * d + l] * z[l] * sq;
                }
                dst[k] = v;
            }
        };

        let mut xi = vec![0.0; state.xi.len()];
        for i in 0..self.n_xi {
            advance(&state.xi[i * n..(i + 1) * n], i, actions.action(xi_act[i]), &mut xi[i * n..(i + 1) * n]);
        }
        let mut x = vec![0.0; state.x.len()];
        for p in 0..self.n_x {
            advance(&state.x[p * n..(p + 1) * n], self.x_row(p), actions.action(x_act[p]), &mut x[p * n..(p + 1) * n]);
        }
        if xi.iter().chain(&x).any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { step: j + 1, time: t1 });
        }
        let law1 = EmpiricalMeasure::uniform_flat_unchecked(n, xi.clone());
        let mut total = 0.0;
        let mut acc = acc;
        for p in 0..self.n_x {
            let a = actions.action(x_act[p]);
            let f0 = c.running(t0, &state.x[p * n..(p + 1) * n], law, a);
            let f1 = c.running(t1, &x[p * n..(p + 1) * n], &law1, a);
            let r = 0.5 * (f0 + f1) * dt;
            if let Some(acc) = acc.as_deref_mut() {
                acc[p] += r;
            }
            total += r;
        }
        if !total.is_finite() {
            return Err(Error::NumericalBlowup { step: j + 1, time: t1 });
        }
        Ok((CloudState { xi, x }, law1, total / self.n_x as f64))
    }

    /// Terminal reward g per x-particle.
    pub fn terminal_rewards(&self, state: &CloudState, law: &EmpiricalMeasure) -> Vec<f64> {
        let n = self.problem.state_dim();
        let c = &self.problem.coefficients.coefficients;
        state.x.chunks(n).map(|x| c.terminal(x, law)).collect()
    }

    /// Runs `ctrl` from the initial state.
    pub fn run_control(&self, ctrl: &StepControl, record: bool) -> Result<ControlRun> {
        self.run_from(0, self.initial_state(), ctrl, record)
    }

    /// Runs `ctrl` from node `j0` with the given state, replaying the sheet's
    /// increments on the remaining steps. The history cells are those of the
    /// full run, so the control process is unchanged.
    pub fn run_from(&self, j0: usize, state: CloudState, ctrl: &StepControl, record: bool) -> Result<ControlRun> {
        let map = self.cell_map(ctrl.intervals(), ctrl.cells())?;
        let mut rewards = vec![0.0; self.n_x];
        let mut traj = record.then(|| vec![state.clone()]);
        let mut law = self.law_of(&state);
        let mut st = state;
        for j in j0..self.grid.n_steps() {
            let (xa, pa) = self.control_actions(ctrl, &map, j);
            let (next, law1, _) = self.step(j, &st, &law, &xa, &pa, Some(&mut rewards))?;
            if let Some(t) = traj.as_mut() {
                t.push(next.clone());
            }
            st = next;
            law = law1;
        }
        for (r, g) in rewards.iter_mut().zip(self.terminal_rewards(&st, &law)) {
            *r += g;
        }
        Ok(ControlRun {
            rewards,
            trajectory: traj,
        })
    }
}

impl SimContext<'_> {
    /// Runs a switching control: step `j` uses `controls[schedule[j]]`.
    pub fn run_schedule(&self, controls: &[StepControl], schedule: &[usize]) -> Result<ControlRun> {
        if schedule.len() != self.grid.n_steps() {
            return Err(Error::Dimension {
                expected: self.grid.n_steps(),
                got: schedule.len(),
            });
        }
        let maps = controls
            .iter()
            .map(|c| self.cell_map(c.intervals(), c.cells()))
            .collect::<Result<Vec<_>>>()?;
        let mut rewards = vec![0.0; self.n_x];
        let mut st = self.initial_state();
        let mut law = self.law_of(&st);
        for (j, &c) in schedule.iter().enumerate() {
            let ctrl = controls
                .get(c)
                .ok_or_else(|| Error::DegenerateInput("schedule refers to a missing control".into()))?;
            let (xa, pa) = self.control_actions(ctrl, &maps[c], j);
            let (next, law1, _) = self.step(j, &st, &law, &xa, &pa, Some(&mut rewards))?;
            st = next;
            law = law1;
        }
        for (r, g) in rewards.iter_mut().zip(self.terminal_rewards(&st, &law)) {
            *r += g;
        }
        Ok(ControlRun {
            rewards,
            trajectory: None,
        })
    }
}

/// Simulates the coupled system under `ctrl` on `[t, T]` and returns every node.
pub fn simulate_coupled(
    problem: &BenchmarkProblem,
    t: f64,
    x: &[f64],
    xi: &XiSampler,
    ctrl: &StepControl,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    let ctx = SimContext::new(problem, t, x, xi, cfg)?;
    let run = ctx.run_control(ctrl, true)?;
    Ok(Trajectory {
        grid: *ctx.grid(),
        dim: problem.state_dim(),
        states: run.trajectory.unwrap_or_default(),
    })
}

/// Monte Carlo estimate of the gain J(t, x, π, α).
///
/// The standard error is the x-particle sample error conditional on the shared
/// ξ-cloud; repeat over seeds for an honest interval.
pub fn gain_estimate(
    problem: &BenchmarkProblem,
    t: f64,
    x: &[f64],
    xi: &XiSampler,
    ctrl: &StepControl,
    cfg: &SimConfig,
) -> Result<ValueEstimate> {
    let ctx = SimContext::new(problem, t, x, xi, cfg)?;
    Ok(ctx.run_control(ctrl, false)?.estimate())
}
