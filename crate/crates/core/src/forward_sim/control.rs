//! Step controls: piecewise constant in time, constant on Brownian-history cells.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A control on `[0, T]` with `intervals` equal pieces and `cells` history cells
/// per piece. `table[i * cells + c]` is the action index used on piece `i` in
/// history cell `c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepControl {
    horizon_bits: u64,
    intervals: usize,
    cells: usize,
    table: Vec<usize>,
}

impl StepControl {
    pub fn new(horizon: f64, intervals: usize, cells: usize, table: Vec<usize>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain {
                value: horizon,
                domain: "(0, inf)".into(),
            });
        }
        if intervals == 0 || cells == 0 {
            return Err(Error::DegenerateInput("step control needs k, L >= 1".into()));
        }
        if table.len() != intervals * cells {
            return Err(Error::Dimension {
                expected: intervals * cells,
                got: table.len(),
            });
        }
        Ok(Self {
            horizon_bits: horizon.to_bits(),
            intervals,
            cells,
            table,
        })
    }

    /// The same action on all of `[0, T]`.
    pub fn constant(horizon: f64, action: usize) -> Self {
        Self::new(horizon, 1, 1, vec![action]).expect("valid constant control")
    }

    /// Deterministic control with one action per interval.
    pub fn piecewise(horizon: f64, actions: &[usize]) -> Result<Self> {
        Self::new(horizon, actions.len(), 1, actions.to_vec())
    }

    pub fn horizon(&self) -> f64 {
        f64::from_bits(self.horizon_bits)
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn interval_length(&self) -> f64 {
        self.horizon() / self.intervals as f64
    }

    pub fn interval_start(&self, i: usize) -> f64 {
        i as f64 * self.interval_length()
    }

    /// Index of the piece containing `s`; `s = T` belongs to the last piece.
    pub fn interval_at(&self, s: f64) -> Result<usize> {
        let t = self.horizon();
        let tol = 1e-9 * t.max(1.0);
        if !(s >= -tol && s <= t + tol) {
            return Err(Error::Domain {
                value: s,
                domain: format!("[0, {t}]"),
            });
        }
        let r = s / self.interval_length();
        let i = (r + 1e-9).floor().max(0.0) as usize;
        Ok(i.min(self.intervals - 1))
    }

    pub fn action(&self, interval: usize, cell: usize) -> usize {
        self.table[interval * self.cells + cell]
    }

    pub fn max_action(&self) -> usize {
        self.table.iter().copied().max().unwrap_or(0)
    }

    /// True when the action does not depend on the history cell.
    pub fn is_deterministic(&self) -> bool {
        self.table
            .chunks(self.cells)
            .all(|row| row.iter().all(|a| *a == row[0]))
    }
}

/// Number of sign bits read by the quantizer for `cells` cells: ⌈log₂ L⌉.
pub fn history_bits(cells: usize) -> usize {
    let mut b = 0;
    while (1usize << b) < cells {
        b += 1;
    }
    b
}

/// History cell of piece `interval` from the increments of earlier pieces.
///
/// Bit `b` is set when the first-component Brownian increment over piece
/// `interval − 1 − b` is nonnegative; pieces without a recorded increment give 0.
/// The cell is the bit pattern reduced modulo `cells`.
pub fn history_cell(interval: usize, cells: usize, increment: impl Fn(usize) -> Option<f64>) -> usize {
    if cells <= 1 {
        return 0;
    }
    let mut cell = 0usize;
    for b in 0..history_bits(cells) {
        if interval < b + 1 {
            break;
        }
        if let Some(inc) = increment(interval - 1 - b) {
            if inc >= 0.0 {
                cell |= 1 << b;
            }
        }
    }
    cell % cells
}

/// First-component Brownian increments over the pieces of a control grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BrownianHistory {
    /// Entry `i` is the increment over piece `i`, `None` when unobserved.
    pub increments: Vec<Option<f64>>,
}

impl BrownianHistory {
    pub fn new(increments: Vec<Option<f64>>) -> Self {
        Self { increments }
    }

    pub fn observed(increments: &[f64]) -> Self {
        Self {
            increments: increments.iter().map(|v| Some(*v)).collect(),
        }
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.increments.get(i).copied().flatten()
    }
}

/// Action index prescribed by `ctrl` at time `s` given the observed history.
pub fn evaluate_control(ctrl: &StepControl, s: f64, history: &BrownianHistory) -> Result<usize> {
    let i = ctrl.interval_at(s)?;
    let cell = history_cell(i, ctrl.cells(), |j| history.get(j));
    Ok(ctrl.action(i, cell))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_single_piece() {
        let c = StepControl::constant(1.0, 3);
        for s in [0.0, 0.4, 1.0] {
            assert_eq!(evaluate_control(&c, s, &BrownianHistory::default()).unwrap(), 3);
        }
    }

    #[test]
    fn two_pieces_switch_at_midpoint() {
        let c = StepControl::piecewise(1.0, &[0, 1]).unwrap();
        let h = BrownianHistory::default();
        assert_eq!(evaluate_control(&c, 0.0, &h).unwrap(), 0);
        assert_eq!(evaluate_control(&c, 0.499, &h).unwrap(), 0);
        assert_eq!(evaluate_control(&c, 0.5, &h).unwrap(), 1);
        assert_eq!(evaluate_control(&c, 1.0, &h).unwrap(), 1);
    }

    #[test]
    fn sign_quantizer_reads_last_increment() {
        // Piece 1 uses action 5 in cell 0 (negative last increment), 7 in cell 1.
        let c = StepControl::new(1.0, 2, 2, vec![0, 0, 5, 7]).unwrap();
        let neg = BrownianHistory::observed(&[-0.3]);
        let pos = BrownianHistory::observed(&[0.3]);
        assert_eq!(evaluate_control(&c, 0.75, &neg).unwrap(), 5);
        assert_eq!(evaluate_control(&c, 0.75, &pos).unwrap(), 7);
        // No history yet on the first piece.
        assert_eq!(evaluate_control(&c, 0.25, &pos).unwrap(), 0);
    }

    #[test]
    fn outside_horizon_is_rejected() {
        let c = StepControl::constant(1.0, 0);
        let h = BrownianHistory::default();
        assert!(matches!(evaluate_control(&c, 1.5, &h), Err(Error::Domain { .. })));
        assert!(matches!(evaluate_control(&c, -0.1, &h), Err(Error::Domain { .. })));
    }

    #[test]
    fn bits_for_cells() {
        assert_eq!(history_bits(1), 0);
        assert_eq!(history_bits(2), 1);
        assert_eq!(history_bits(3), 2);
        assert_eq!(history_bits(4), 2);
    }
}
