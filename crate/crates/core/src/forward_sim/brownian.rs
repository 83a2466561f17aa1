//! Pre-drawn Gaussian increments, one independent ChaCha stream per particle row.

use super::control::{history_cell, StepControl};
use super::grid::TimeGrid;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Standard normal draws indexed by (row, step, component).
///
/// Row `r` is generated from stream `r` of the ChaCha generator keyed by
/// `seed`, so the sheet does not depend on the number of worker threads.
#[derive(Debug, Clone)]
pub struct BrownianSheet {
    seed: u64,
    rows: usize,
    steps: usize,
    noise_dim: usize,
    z: Vec<f64>,
}

impl BrownianSheet {
    pub fn new(seed: u64, rows: usize, steps: usize, noise_dim: usize) -> Self {
        let width = steps * noise_dim;
        let mut z = vec![0.0; rows * width];
        if width > 0 {
            z.par_chunks_mut(width).enumerate().for_each(|(r, row)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
            });
        }
        Self {
            seed,
            rows,
            steps,
            noise_dim,
            z,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Standard normals for `row` at `step`; scale by √Δt for increments.
    #[inline]
    pub fn normals(&self, row: usize, step: usize) -> &[f64] {
        let off = (row * self.steps + step) * self.noise_dim;
        &self.z[off..off + self.noise_dim]
    }
}

/// Maps simulation steps to the pieces of a control grid and stores the history
/// cell of every particle row on every piece.
#[derive(Debug, Clone)]
pub struct CellMap {
    intervals: usize,
    cells: usize,
    step_interval: Vec<usize>,
    cell: Vec<u32>,
}

impl CellMap {
    /// Fails with `GridError` when a piece boundary inside the simulated window
    /// is not a node of `grid`.
    pub fn new(sheet: &BrownianSheet, grid: &TimeGrid, horizon: f64, intervals: usize, cells: usize) -> Result<Self> {
        let probe = StepControl::new(horizon, intervals, cells, vec![0; intervals * cells])?;
        let h = probe.interval_length();
        for i in 1..intervals {
            let b = i as f64 * h;
            if b > grid.t_start() + 1e-12 && b < grid.t_end() - 1e-12 && grid.node_index(b).is_none() {
                return Err(Error::Grid { time: b });
            }
        }
        let n = grid.n_steps();
        let step_interval: Vec<usize> = (0..n)
            .map(|j| probe.interval_at(grid.node(j)))
            .collect::<Result<_>>()?;
        let mut cell = vec![0u32; sheet.rows() * intervals];
        if cells > 1 {
            let sq = grid.dt().sqrt();
            cell.par_chunks_mut(intervals).enumerate().for_each(|(r, out)| {
                let mut inc: Vec<Option<f64>> = vec![None; intervals];
                for (j, &iv) in step_interval.iter().enumerate() {
                    let dz = sheet.normals(r, j)[0] * sq;
                    *inc[iv].get_or_insert(0.0) += dz;
                }
                for (i, o) in out.iter_mut().enumerate() {
                    *o = history_cell(i, cells, |p| inc[p]) as u32;
                }
            });
        }
        Ok(Self {
            intervals,
            cells,
            step_interval,
            cell,
        })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Control piece active on simulation step `j`.
    #[inline]
    pub fn interval_of_step(&self, j: usize) -> usize {
        self.step_interval[j]
    }

    #[inline]
    pub fn cell(&self, row: usize, interval: usize) -> usize {
        self.cell[row * self.intervals + interval] as usize
    }
}
