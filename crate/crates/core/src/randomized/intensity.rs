//! Intensity controls ν and the Doléans weight κ^ν.

use super::{Jump, MarkIntensity, PoissonPath};
use crate::error::{Error, Result};
use crate::forward_sim::TimeGrid;
use crate::lattice::{Lattice, LatticeSolution};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// Predictable intensity multiplier: the value on grid interval `interval` for
/// mark position `mark`, given the jumps that already happened.
pub trait IntensityPolicy: Send + Sync {
    fn bounds(&self) -> (f64, f64);
    fn intensity(&self, history: &[Jump], interval: usize, mark: usize) -> f64;
}

/// ν ≡ c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantIntensity {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ConstantIntensity {
    pub fn new(value: f64, lo: f64, hi: f64) -> Result<Self> {
        check_bounds(lo, hi)?;
        if !(value >= lo && value <= hi) {
            return Err(Error::InvalidIntensity { value, lo, hi });
        }
        Ok(Self { value, lo, hi })
    }

    /// The reference intensity ν ≡ 1.
    pub fn unit() -> Self {
        Self {
            value: 1.0,
            lo: 1.0,
            hi: 1.0,
        }
    }
}

impl IntensityPolicy for ConstantIntensity {
    fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn intensity(&self, _: &[Jump], _: usize, _: usize) -> f64 {
        self.value
    }
}

pub(crate) fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidIntensity { value: lo, lo, hi });
    }
    Ok(())
}

/// One serialized table entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuEntry {
    pub history: String,
    pub interval: usize,
    pub mark: usize,
    pub nu: f64,
}

/// Serializable ν table keyed by (history signature, interval, mark).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuTable {
    pub lo: f64,
    pub hi: f64,
    pub entries: Vec<NuEntry>,
}

/// Table-driven intensity; the history signature is the dot-separated mark
/// sequence of past jumps (empty before the first jump). Missing entries use
/// `default`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTable {
    lo: f64,
    hi: f64,
    default: f64,
    map: HashMap<(String, usize, usize), f64>,
}

impl IntensityTable {
    pub fn new(table: &NuTable, default: f64) -> Result<Self> {
        check_bounds(table.lo, table.hi)?;
        let mut map = HashMap::new();
        for e in table.entries.iter() {
            if !(e.nu >= table.lo && e.nu <= table.hi) {
                return Err(Error::InvalidIntensity {
                    value: e.nu,
                    lo: table.lo,
                    hi: table.hi,
                });
            }
            map.insert((e.history.clone(), e.interval, e.mark), e.nu);
        }
        Ok(Self {
            lo: table.lo,
            hi: table.hi,
            default,
            map,
        })
    }

    pub fn signature(history: &[Jump]) -> String {
        history.iter().map(|j| j.mark.to_string()).collect::<Vec<_>>().join(".")
    }
}

impl IntensityPolicy for IntensityTable {
    fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn intensity(&self, history: &[Jump], interval: usize, mark: usize) -> f64 {
        self.map
            .get(&(Self::signature(history), interval, mark))
            .copied()
            .unwrap_or(self.default)
    }
}

/// Bang-bang decisions of a lattice solve applied to continuous-time paths.
///
/// On interval `i` the path's lattice node is found by replaying the controls
/// in force at nodes `0..i`; the current control and depth come from all jumps
/// so far. Beyond the jump cap or outside the lattice the lower bound is used.
#[derive(Debug, Clone)]
pub struct LatticePolicy {
    lattice: Arc<Lattice>,
    high: Arc<Vec<Vec<Vec<u16>>>>,
    lo: f64,
    hi: f64,
}

impl LatticePolicy {
    pub fn new(lattice: Arc<Lattice>, sol: &LatticeSolution, lo: f64, hi: f64) -> Result<Self> {
        check_bounds(lo, hi)?;
        let high = sol
            .high_marks
            .clone()
            .ok_or_else(|| Error::DegenerateInput("lattice policy needs a bang-bang solve".into()))?;
        Ok(Self {
            lattice,
            high: Arc::new(high),
            lo,
            hi,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Marks (1-based lattice ids) run at the upper bound in a state.
    pub fn high_marks(&self, step: usize, node: usize, control: usize, depth: usize) -> &[u16] {
        let l = &self.lattice;
        &self.high[step][node * l.stride() + l.slot(control, depth)]
    }

    /// All decisions, with history signature `p{node}/c{control}/d{depth}`.
    pub fn table(&self) -> NuTable {
        let l = &self.lattice;
        let mut entries = Vec::new();
        for j in 0..l.end_step() {
            for node in 0..l.level_len(j) {
                for d in 0..l.k_max() {
                    for c in 0..=l.n_marks() {
                        if !l.reachable(j, node, c, d) {
                            continue;
                        }
                        let hm = self.high_marks(j, node, c, d);
                        for a in 1..=l.n_marks() {
                            entries.push(NuEntry {
                                history: format!("p{node}/c{c}/d{d}"),
                                interval: j,
                                mark: a - 1,
                                nu: if hm.contains(&(a as u16)) { self.hi } else { self.lo },
                            });
                        }
                    }
                }
            }
        }
        NuTable {
            lo: self.lo,
            hi: self.hi,
            entries,
        }
    }
}

impl IntensityPolicy for LatticePolicy {
    fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn intensity(&self, history: &[Jump], interval: usize, mark: usize) -> f64 {
        let l = &self.lattice;
        let depth = history.len();
        if interval >= l.end_step() || depth >= l.k_max() {
            return self.lo;
        }
        let grid = l.grid();
        let control_at = |s: f64| {
            let n = history.partition_point(|j| j.time <= s);
            if n == 0 {
                0
            } else {
                history[n - 1].mark + 1
            }
        };
        let path: Vec<usize> = (0..interval).map(|m| control_at(grid.node(m))).collect();
        let current = history.last().map_or(0, |j| j.mark + 1);
        match l.path_node(&path) {
            Some(node) if l.reachable(interval, node, current, depth) => {
                if self.high_marks(interval, node, current, depth).contains(&((mark + 1) as u16)) {
                    self.hi
                } else {
                    self.lo
                }
            }
            _ => self.lo,
        }
    }
}

/// κ^ν at `t_end`: exp(Σ_{T_n ≤ t_end} ln ν(mark_n) − ∫ Σ_a (ν − 1) λ(a) ds),
/// integrated exactly for ν piecewise constant on `grid` intervals and between
/// jumps. After the jump cap the path is frozen and contributes nothing.
pub fn girsanov_weight(
    path: &PoissonPath,
    nu: &dyn IntensityPolicy,
    lambda: &MarkIntensity,
    grid: &TimeGrid,
    t_end: f64,
) -> Result<f64> {
    if t_end > grid.t_end() + 1e-12 {
        return Err(Error::Domain {
            value: t_end,
            domain: format!("t_end ≤ {}", grid.t_end()),
        });
    }
    let (lo, hi) = nu.bounds();
    let value = |h: &[Jump], i: usize, m: usize| -> Result<f64> {
        let v = nu.intensity(h, i, m);
        if !(v >= lo && v <= hi && v > 0.0) {
            return Err(Error::InvalidIntensity { value: v, lo, hi });
        }
        Ok(v)
    };
    let jumps: Vec<Jump> = path.jumps.iter().copied().filter(|j| j.time <= t_end).collect();
    let mut log_w: f64 = 0.0;
    let mut n = 0;
    for i in 0..grid.n_steps() {
        let a = grid.node(i).max(path.start);
        let b = grid.node(i + 1).min(t_end);
        if b <= a {
            if grid.node(i) >= t_end {
                break;
            }
            continue;
        }
        let mut s = a;
        loop {
            if n >= path.k_max {
                return Ok(log_w.exp());
            }
            let next = jumps.get(n).map(|j| j.time).filter(|&tj| tj <= b);
            let seg_end = next.unwrap_or(b);
            let h = &jumps[..n];
            let mut comp = 0.0;
            for (m, r) in lambda.rates().iter().enumerate() {
                comp += (value(h, i, m)? - 1.0) * r;
            }
            log_w -= comp * (seg_end - s);
            match next {
                Some(_) => {
                    log_w += value(h, i, jumps[n].mark)?.ln();
                    n += 1;
                    s = seg_end;
                }
                None => break,
            }
        }
    }
    Ok(log_w.exp())
}
