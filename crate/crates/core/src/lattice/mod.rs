//! Jump-history lattice shared by the randomized-control and BSDE routes.
//!
//! Jumps of the mark process are placed on the nodes of the simulation grid. A
//! lattice state at step `j` is `(path, control, depth)`: `path` is the sequence
//! of per-particle action vectors used on steps `0..j` (two jump histories that
//! produced the same actions share all particle clouds), `control` is the mark
//! in force (id 0 is the initial control) and `depth` the number of jumps so far.
//!
//! Conditional laws and rewards along every path are computed once by inner
//! particle simulation and cached; the backward recursions are then pure
//! arithmetic on the cached drivers. Every recursion treats jumps implicitly:
//! on step `j`, with `A = F + Y_{j+1}(stay)` and `Z_a` the value right after a
//! jump to mark `a` at the same node,
//!
//! * fixed intensities ν: `y = A + Δt Σ ν_a λ_a (Z_a − y)`;
//! * penalty level n:      `y = A + n Δt Σ λ_a (Z_a − y)₊`;
//! * bang-bang bounds:     best threshold policy with ν ∈ {lo, hi}.

use crate::error::{Error, Result};
use crate::forward_sim::{CloudState, SimContext, StepControl, TimeGrid};
use crate::measures::EmpiricalMeasure;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;

/// Default bound on the number of lattice states.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;

/// Terminal value at a path endpoint: receives the step index, the clouds and
/// the law there.
pub type TerminalFn<'a> =
    dyn Fn(usize, usize, &CloudState, &EmpiricalMeasure) -> Result<f64> + Sync + 'a;

#[derive(Debug, Clone)]
struct Node {
    children: Vec<(u32, u32)>,
    driver: f64,
    terminal: f64,
}

/// Cached path tree with per-edge running rewards and terminal values.
#[derive(Debug, Clone)]
pub struct Lattice {
    grid: TimeGrid,
    end_step: usize,
    n_marks: usize,
    k_max: usize,
    /// `class[j][c]`: path class chosen by control `c` on step `j`.
    class: Vec<Vec<u32>>,
    levels: Vec<Vec<Node>>,
    /// Reachable state slots per level, flat `nodes × stride`.
    reach: Vec<Vec<bool>>,
}

/// Intensity rule used by [`Lattice::solve`].
#[derive(Clone, Copy)]
pub enum Rule<'a> {
    /// Fixed multipliers `ν(step, node, control, depth, mark)`.
    Evaluate(&'a (dyn Fn(usize, usize, usize, usize, usize) -> f64 + Sync)),
    /// Penalized recursion with penalty level `n`.
    Penalized(f64),
    /// Best bang-bang intensities in `{lo, hi}`.
    BangBang { lo: f64, hi: f64 },
}

/// Values on every reachable state.
#[derive(Debug, Clone)]
pub struct LatticeSolution {
    pub root: f64,
    /// Flat `nodes × stride` per level; NaN on unreachable slots.
    pub y: Vec<Vec<f64>>,
    /// For bang-bang solves: marks run at the upper bound, per state slot.
    pub high_marks: Option<Vec<Vec<Vec<u16>>>>,
    /// For penalized solves: per-state penalty increment n Δt Σ λ (U)₊.
    pub penalty: Option<Vec<Vec<f64>>>,
    /// Largest jump component max_a (Z_a − y)₊ over all states with jumps left.
    pub max_u_plus: f64,
}

impl Lattice {
    /// Builds the path tree from step 0 of `ctx` up to `end_step` and fills its
    /// drivers. `controls[0]` is the control before the first jump; the other
    /// entries are the marks.
    pub fn build(
        ctx: &SimContext<'_>,
        controls: &[StepControl],
        k_max: usize,
        end_step: Option<usize>,
        state_cap: usize,
        terminal: Option<&TerminalFn<'_>>,
    ) -> Result<Self> {
        if controls.len() < 2 {
            return Err(Error::DegenerateInput("lattice needs an initial control and at least one mark".into()));
        }
        if controls.len() > u16::MAX as usize {
            return Err(Error::Capacity {
                what: "lattice controls",
                needed: controls.len() as u128,
                cap: u16::MAX as u128,
            });
        }
        let grid = *ctx.grid();
        let end_step = end_step.unwrap_or(grid.n_steps());
        if end_step == 0 || end_step > grid.n_steps() {
            return Err(Error::Grid { time: grid.node(end_step) });
        }
        let n_marks = controls.len() - 1;
        let n_actions = ctx.problem().actions.len();
        if controls.iter().any(|c| c.max_action() >= n_actions) {
            return Err(Error::DegenerateInput("control uses an unknown action".into()));
        }

        // Path classes: identical per-particle action vectors share a class.
        let mut class = vec![vec![0u32; controls.len()]; end_step];
        let mut class_actions: Vec<Vec<(Vec<usize>, Vec<usize>)>> = Vec::with_capacity(end_step);
        let maps = controls
            .iter()
            .map(|c| ctx.cell_map(c.intervals(), c.cells()))
            .collect::<Result<Vec<_>>>()?;
        for (j, cls_row) in class.iter_mut().enumerate() {
            let mut seen: HashMap<(Vec<usize>, Vec<usize>), u32> = HashMap::new();
            let mut acts = Vec::new();
            for (c, ctrl) in controls.iter().enumerate() {
                let key = ctx.control_actions(ctrl, &maps[c], j);
                let next = seen.len() as u32;
                let id = *seen.entry(key.clone()).or_insert_with(|| {
                    acts.push(key);
                    next
                });
                cls_row[c] = id;
            }
            class_actions.push(acts);
        }

        let stride = (n_marks + 1) * (k_max + 1);
        let slot = |c: usize, d: usize| d * (n_marks + 1) + c;
        let mut levels: Vec<Vec<Node>> = Vec::with_capacity(end_step + 1);
        let mut reach: Vec<Vec<bool>> = Vec::with_capacity(end_step + 1);
        let mut entries: Vec<Vec<bool>> = vec![{
            let mut e = vec![false; stride];
            e[slot(0, 0)] = true;
            e
        }];
        let mut states = 0usize;
        for j in 0..=end_step {
            let n_nodes = entries.len();
            let mut level_reach = vec![false; n_nodes * stride];
            let mut nodes = Vec::with_capacity(n_nodes);
            let mut next_entries: Vec<Vec<bool>> = Vec::new();
            for (i, entry) in entries.iter().enumerate() {
                let r = &mut level_reach[i * stride..(i + 1) * stride];
                r.copy_from_slice(entry);
                for d in 0..k_max {
                    if (0..=n_marks).any(|c| r[slot(c, d)]) {
                        for a in 1..=n_marks {
                            r[slot(a, d + 1)] = true;
                        }
                    }
                }
                states += r.iter().filter(|v| **v).count();
                if states > state_cap {
                    return Err(Error::Capacity {
                        what: "lattice states",
                        needed: states as u128,
                        cap: state_cap as u128,
                    });
                }
                let mut children: Vec<(u32, u32)> = Vec::new();
                if j < end_step {
                    for d in 0..=k_max {
                        for c in 0..=n_marks {
                            if !r[slot(c, d)] {
                                continue;
                            }
                            let cls = class[j][c];
                            let child = match children.iter().find(|(k, _)| *k == cls) {
                                Some((_, ch)) => *ch as usize,
                                None => {
                                    next_entries.push(vec![false; stride]);
                                    let ch = next_entries.len() - 1;
                                    children.push((cls, ch as u32));
                                    ch
                                }
                            };
                            next_entries[child][slot(c, d)] = true;
                        }
                    }
                }
                nodes.push(Node {
                    children,
                    driver: 0.0,
                    terminal: 0.0,
                });
            }
            levels.push(nodes);
            reach.push(level_reach);
            entries = next_entries;
        }

        let mut lat = Lattice {
            grid,
            end_step,
            n_marks,
            k_max,
            class,
            levels,
            reach,
        };
        lat.fill(ctx, &class_actions, terminal)?;
        Ok(lat)
    }

    fn fill(
        &mut self,
        ctx: &SimContext<'_>,
        class_actions: &[Vec<(Vec<usize>, Vec<usize>)>],
        terminal: Option<&TerminalFn<'_>>,
    ) -> Result<()> {
        let default_terminal = |_: usize, _: usize, st: &CloudState, law: &EmpiricalMeasure| -> Result<f64> {
            let g = ctx.terminal_rewards(st, law);
            Ok(g.iter().sum::<f64>() / g.len() as f64)
        };
        let term: &TerminalFn<'_> = match terminal {
            Some(t) => t,
            None => &default_terminal,
        };
        let init = ctx.initial_state();
        let law = ctx.law_of(&init);
        let mut out = Vec::new();
        if self.end_step == 0 {
            return Ok(());
        }
        self.walk(ctx, class_actions, term, 0, 0, &init, &law, &mut out)?;
        for (j, i, drv, g) in out {
            let n = &mut self.levels[j][i];
            n.driver = drv;
            n.terminal = g;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        ctx: &SimContext<'_>,
        class_actions: &[Vec<(Vec<usize>, Vec<usize>)>],
        term: &TerminalFn<'_>,
        j: usize,
        node: usize,
        state: &CloudState,
        law: &EmpiricalMeasure,
        out: &mut Vec<(usize, usize, f64, f64)>,
    ) -> Result<()> {
        let children = &self.levels[j][node].children;
        let results: Vec<Vec<(usize, usize, f64, f64)>> = children
            .par_iter()
            .map(|&(cls, child)| {
                let (xa, pa) = &class_actions[j][cls as usize];
                let (next, law1, drv) = ctx.step(j, state, law, xa, pa, None)?;
                let child = child as usize;
                let mut local = Vec::new();
                if j + 1 == self.end_step {
                    let g = term(j + 1, child, &next, &law1)?;
                    local.push((j + 1, child, drv, g));
                } else {
                    local.push((j + 1, child, drv, 0.0));
                    self.walk(ctx, class_actions, term, j + 1, child, &next, &law1, &mut local)?;
                }
                Ok(local)
            })
            .collect::<Result<_>>()?;
        for r in results {
            out.extend(r);
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn end_step(&self) -> usize {
        self.end_step
    }

    pub fn n_marks(&self) -> usize {
        self.n_marks
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn stride(&self) -> usize {
        (self.n_marks + 1) * (self.k_max + 1)
    }

    #[inline]
    pub fn slot(&self, control: usize, depth: usize) -> usize {
        depth * (self.n_marks + 1) + control
    }

    pub fn n_nodes(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn n_states(&self) -> usize {
        self.reach.iter().map(|r| r.iter().filter(|v| **v).count()).sum()
    }

    pub fn level_len(&self, j: usize) -> usize {
        self.levels[j].len()
    }

    /// Child node reached from `node` at step `j` under `control`.
    pub fn child(&self, j: usize, node: usize, control: usize) -> Option<usize> {
        let cls = self.class[j][control];
        self.levels[j][node]
            .children
            .iter()
            .find(|(k, _)| *k == cls)
            .map(|(_, c)| *c as usize)
    }

    /// Mean running reward on the edge into `node` at level `j ≥ 1`.
    pub fn driver(&self, j: usize, node: usize) -> f64 {
        self.levels[j][node].driver
    }

    pub fn terminal(&self, node: usize) -> f64 {
        self.levels[self.end_step][node].terminal
    }

    pub fn reachable(&self, j: usize, node: usize, control: usize, depth: usize) -> bool {
        self.reach[j][node * self.stride() + self.slot(control, depth)]
    }

    /// Node reached by following the given controls on steps `0..controls.len()`.
    pub fn path_node(&self, controls: &[usize]) -> Option<usize> {
        let mut node = 0;
        for (j, &c) in controls.iter().enumerate() {
            node = self.child(j, node, c)?;
        }
        Some(node)
    }

    /// Backward recursion under `rule` with jump rates `rates[a − 1]` for mark `a`.
    pub fn solve(&self, rates: &[f64], rule: Rule<'_>) -> Result<LatticeSolution> {
        if rates.len() != self.n_marks {
            return Err(Error::Dimension {
                expected: self.n_marks,
                got: rates.len(),
            });
        }
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::DegenerateInput("mark rates must be positive".into()));
        }
        if let Rule::BangBang { lo, hi } = rule {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidIntensity { value: lo, lo, hi });
            }
        }
        let dt = self.grid.dt();
        let stride = self.stride();
        let m = self.n_marks;
        let mut y: Vec<Vec<f64>> = self
            .levels
            .iter()
            .map(|l| vec![f64::NAN; l.len() * stride])
            .collect();
        let track_high = matches!(rule, Rule::BangBang { .. });
        let track_pen = matches!(rule, Rule::Penalized(_));
        let mut high: Vec<Vec<Vec<u16>>> = if track_high {
            self.levels.iter().map(|l| vec![Vec::new(); l.len() * stride]).collect()
        } else {
            Vec::new()
        };
        let mut pen: Vec<Vec<f64>> = if track_pen {
            self.levels.iter().map(|l| vec![0.0; l.len() * stride]).collect()
        } else {
            Vec::new()
        };
        let mut max_u_plus: f64 = 0.0;

        let end = self.end_step;
        for i in 0..self.levels[end].len() {
            let g = self.levels[end][i].terminal;
            for s in 0..stride {
                if self.reach[end][i * stride + s] {
                    y[end][i * stride + s] = g;
                }
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        let mut z = vec![0.0; m];
        for j in (0..end).rev() {
            let (lower, upper) = y.split_at_mut(j + 1);
            let yj = &mut lower[j];
            let ynext = &upper[0];
            for (i, node) in self.levels[j].iter().enumerate() {
                for d in (0..=self.k_max).rev() {
                    for c in 0..=m {
                        let s = self.slot(c, d);
                        if !self.reach[j][i * stride + s] {
                            continue;
                        }
                        let cls = self.class[j][c];
                        let child = node
                            .children
                            .iter()
                            .find(|(k, _)| *k == cls)
                            .map(|(_, ch)| *ch as usize)
                            .ok_or_else(|| Error::Tree(format!("missing child at step {j}")))?;
                        let cont = ynext[child * stride + s];
                        if cont.is_nan() {
                            return Err(Error::Tree(format!("unsolved continuation at step {}", j + 1)));
                        }
                        let a_val = self.levels[j + 1][child].driver + cont;
                        if d == self.k_max {
                            yj[i * stride + s] = a_val;
                            continue;
                        }
                        for a in 1..=m {
                            z[a - 1] = yj[i * stride + self.slot(a, d + 1)];
                            if z[a - 1].is_nan() {
                                return Err(Error::Tree(format!("unsolved jump target at step {j}")));
                            }
                        }
                        let val = match rule {
                            Rule::Evaluate(nu) => {
                                let mut num = a_val;
                                let mut den = 1.0;
                                for a in 1..=m {
                                    let w = dt * nu(j, i, c, d, a) * rates[a - 1];
                                    num += w * z[a - 1];
                                    den += w;
                                }
                                num / den
                            }
                            Rule::Penalized(n) => {
                                order.sort_by(|&p, &q| z[q].total_cmp(&z[p]).then(p.cmp(&q)));
                                let mut num = a_val;
                                let mut den = 1.0;
                                let mut val = a_val;
                                for &p in order.iter() {
                                    if z[p] <= val {
                                        break;
                                    }
                                    let w = n * dt * rates[p];
                                    num += w * z[p];
                                    den += w;
                                    val = num / den;
                                }
                                let mut inc = 0.0;
                                for p in 0..m {
                                    let u = (z[p] - val).max(0.0);
                                    inc += n * dt * rates[p] * u;
                                }
                                pen[j][i * stride + s] = inc;
                                val
                            }
                            Rule::BangBang { lo, hi } => {
                                order.sort_by(|&p, &q| z[q].total_cmp(&z[p]).then(p.cmp(&q)));
                                let mut num = a_val;
                                let mut den = 1.0;
                                for p in 0..m {
                                    let w = lo * dt * rates[p];
                                    num += w * z[p];
                                    den += w;
                                }
                                let mut best = num / den;
                                let mut best_k = 0;
                                for (k, &p) in order.iter().enumerate() {
                                    let w = (hi - lo) * dt * rates[p];
                                    num += w * z[p];
                                    den += w;
                                    let v = num / den;
                                    if v > best {
                                        best = v;
                                        best_k = k + 1;
                                    }
                                }
                                high[j][i * stride + s] =
                                    order[..best_k].iter().map(|p| (*p + 1) as u16).collect();
                                best
                            }
                        };
                        for p in 0..m {
                            max_u_plus = max_u_plus.max(z[p] - val);
                        }
                        yj[i * stride + s] = val;
                    }
                }
            }
        }
        let root = y[0][self.slot(0, 0)];
        Ok(LatticeSolution {
            root,
            y,
            high_marks: track_high.then_some(high),
            penalty: track_pen.then_some(pen),
            max_u_plus,
        })
    }

    /// Accumulated penalty K on every state: zero at the root, nondecreasing
    /// along stays (which add the state's increment) and unchanged by jumps. A
    /// state reached along several paths keeps the largest value.
    pub fn accumulate_penalty(&self, sol: &LatticeSolution) -> Result<Vec<Vec<f64>>> {
        let pen = sol
            .penalty
            .as_ref()
            .ok_or_else(|| Error::DegenerateInput("penalty increments need a penalized solve".into()))?;
        let stride = self.stride();
        let mut k: Vec<Vec<f64>> = self
            .levels
            .iter()
            .map(|l| vec![f64::NAN; l.len() * stride])
            .collect();
        k[0][self.slot(0, 0)] = 0.0;
        let m = self.n_marks;
        for j in 0..=self.end_step {
            for i in 0..self.levels[j].len() {
                for d in 0..=self.k_max {
                    for c in 0..=m {
                        let s = self.slot(c, d);
                        let kv = k[j][i * stride + s];
                        if !self.reach[j][i * stride + s] || kv.is_nan() {
                            continue;
                        }
                        if d < self.k_max && j < self.end_step {
                            for a in 1..=m {
                                let t = &mut k[j][i * stride + self.slot(a, d + 1)];
                                *t = if t.is_nan() { kv } else { t.max(kv) };
                            }
                        }
                        if j < self.end_step {
                            let child = self.child(j, i, c).ok_or_else(|| Error::Tree("missing child".into()))?;
                            let nv = kv + pen[j][i * stride + s];
                            let t = &mut k[j + 1][child * stride + s];
                            *t = if t.is_nan() { nv } else { t.max(nv) };
                        }
                    }
                }
            }
        }
        Ok(k)
    }

    /// Rows `(n, node_id, time, Y, K, max_U_plus)` for every reachable state;
    /// node ids enumerate `(step, node, slot)` in storage order.
    pub fn write_trace<W: Write>(&self, mut w: W, n: f64, sol: &LatticeSolution, k: &[Vec<f64>]) -> Result<()> {
        let stride = self.stride();
        let m = self.n_marks;
        let mut id = 0usize;
        for j in 0..=self.end_step {
            let t = self.grid.node(j);
            for i in 0..self.levels[j].len() {
                for d in 0..=self.k_max {
                    for c in 0..=m {
                        let s = self.slot(c, d);
                        if !self.reach[j][i * stride + s] {
                            continue;
                        }
                        let yv = sol.y[j][i * stride + s];
                        let mut u = 0.0f64;
                        if d < self.k_max && j < self.end_step {
                            for a in 1..=m {
                                u = u.max(sol.y[j][i * stride + self.slot(a, d + 1)] - yv);
                            }
                        }
                        writeln!(w, "{n},{id},{t},{yv:e},{:e},{u:e}", k[j][i * stride + s])?;
                        id += 1;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Serializable summary of a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeStats {
    pub nodes: usize,
    pub states: usize,
    pub steps: usize,
    pub marks: usize,
    pub k_max: usize,
}

impl From<&Lattice> for LatticeStats {
    fn from(l: &Lattice) -> Self {
        Self {
            nodes: l.n_nodes(),
            states: l.n_states(),
            steps: l.end_step,
            marks: l.n_marks,
            k_max: l.k_max,
        }
    }
}
