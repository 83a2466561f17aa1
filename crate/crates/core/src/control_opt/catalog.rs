use crate::error::{Error, Result};
use crate::forward_sim::StepControl;
use serde::{Deserialize, Serialize};

/// Default bound on the number of enumerated controls.
pub const DEFAULT_CATALOG_CAP: usize = 8192;

/// Every step control with `intervals` pieces, `cells` history cells and
/// `n_actions` actions on `[0, T]`.
///
/// Control `id` reads its table from the base-`n_actions` digits of `id`,
/// least significant first, position `i · cells + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCatalog {
    pub controls: Vec<StepControl>,
    pub intervals: usize,
    pub cells: usize,
    pub n_actions: usize,
}

impl ControlCatalog {
    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn get(&self, id: usize) -> &StepControl {
        &self.controls[id]
    }

    /// Catalog made of explicitly given controls.
    pub fn from_controls(controls: Vec<StepControl>, n_actions: usize) -> Result<Self> {
        let first = controls
            .first()
            .ok_or_else(|| Error::DegenerateInput("empty catalog".into()))?;
        let (intervals, cells, horizon) = (first.intervals(), first.cells(), first.horizon());
        for c in &controls {
            if c.horizon() != horizon {
                return Err(Error::DegenerateInput("catalog controls must share the horizon".into()));
            }
            if c.max_action() >= n_actions {
                return Err(Error::DegenerateInput("control uses an unknown action".into()));
            }
        }
        Ok(Self {
            controls,
            intervals,
            cells,
            n_actions,
        })
    }

    /// Position of `ctrl` in the catalog.
    pub fn index_of(&self, ctrl: &StepControl) -> Option<usize> {
        self.controls.iter().position(|c| c == ctrl)
    }
}

/// Full enumeration of `M^{kL}` controls; fails above `cap`.
pub fn enumerate_step_controls(
    n_actions: usize,
    horizon: f64,
    intervals: usize,
    cells: usize,
    cap: usize,
) -> Result<ControlCatalog> {
    if intervals == 0 || cells == 0 || n_actions == 0 {
        return Err(Error::DegenerateInput("need k, L, M >= 1".into()));
    }
    let positions = intervals * cells;
    let mut count: u128 = 1;
    for _ in 0..positions {
        count = count.saturating_mul(n_actions as u128);
        if count > cap as u128 {
            return Err(Error::Capacity {
                what: "step-control catalog",
                needed: (n_actions as u128).checked_pow(positions as u32).unwrap_or(u128::MAX),
                cap: cap as u128,
            });
        }
    }
    let count = count as usize;
    let mut controls = Vec::with_capacity(count);
    for id in 0..count {
        let mut rest = id;
        let table: Vec<usize> = (0..positions)
            .map(|_| {
                let d = rest % n_actions;
                rest /= n_actions;
                d
            })
            .collect();
        controls.push(StepControl::new(horizon, intervals, cells, table)?);
    }
    Ok(ControlCatalog {
        controls,
        intervals,
        cells,
        n_actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_sizes() {
        assert_eq!(enumerate_step_controls(2, 1.0, 1, 1, 4096).unwrap().len(), 2);
        assert_eq!(enumerate_step_controls(2, 1.0, 2, 1, 4096).unwrap().len(), 4);
        assert_eq!(enumerate_step_controls(3, 1.0, 3, 2, 4096).unwrap().len(), 729);
    }

    #[test]
    fn over_cap_is_an_error() {
        assert!(matches!(
            enumerate_step_controls(3, 1.0, 4, 2, 4096),
            Err(Error::Capacity { needed: 6561, .. })
        ));
    }

    #[test]
    fn digits_are_least_significant_first() {
        let c = enumerate_step_controls(2, 1.0, 2, 1, 16).unwrap();
        assert_eq!(c.get(1).table(), &[1, 0]);
        assert_eq!(c.get(2).table(), &[0, 1]);
        let all: std::collections::HashSet<_> = c.controls.iter().collect();
        assert_eq!(all.len(), 4);
    }
}
