use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform partition of `[t_start, t_end]` into `n_steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

const NODE_TOL: f64 = 1e-9;

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_start >= t_end {
            return Err(Error::Domain {
                value: t_start,
                domain: format!("t_start < t_end = {t_end}"),
            });
        }
        if n_steps == 0 {
            return Err(Error::DegenerateInput("time grid needs at least one step".into()));
        }
        Ok(Self {
            t_start,
            t_end,
            n_steps,
        })
    }

    /// Grid on `[t, t_end]` whose step is as close as possible to `dt`.
    pub fn with_step(t: f64, t_end: f64, dt: f64) -> Result<Self> {
        let n = ((t_end - t) / dt).round().max(1.0) as usize;
        Self::new(t, t_end, n)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i >= self.n_steps {
            self.t_end
        } else {
            self.t_start + i as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.node(i)).collect()
    }

    /// Index of the node equal to `s`, if any.
    pub fn node_index(&self, s: f64) -> Option<usize> {
        let scale = (self.t_end - self.t_start).abs().max(1.0);
        let r = (s - self.t_start) / self.dt();
        let i = r.round();
        if i < 0.0 || i > self.n_steps as f64 {
            return None;
        }
        let i = i as usize;
        ((self.node(i) - s).abs() <= NODE_TOL * scale).then_some(i)
    }

    pub fn require_node(&self, s: f64) -> Result<usize> {
        self.node_index(s).ok_or(Error::Grid { time: s })
    }
}
