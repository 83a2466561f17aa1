//! Poisson-randomized control: marks drawn from a finite catalog of step
//! controls, intensity controls acting on the mark process and the randomized
//! value obtained by optimizing them.

mod gain;
mod intensity;
mod value;

pub use gain::{randomized_gain, GainConfig, RandomizedGain, Sampling, TRUNCATION_WARN_FRACTION};
pub use intensity::{
    girsanov_weight, ConstantIntensity, IntensityPolicy, IntensityTable, LatticePolicy, NuEntry, NuTable,
};
pub use value::{
    randomized_lattice, value_randomized, InitialControl, RandomizedConfig, RandomizedValue,
};

use crate::control_opt::ControlCatalog;
use crate::error::{Error, Result};
use crate::forward_sim::{evaluate_control, BrownianHistory, TimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

/// Finite mark measure λ = Σ rates[i] δ_{marks[i]} on catalog entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkIntensity {
    marks: Vec<usize>,
    rates: Vec<f64>,
}

impl MarkIntensity {
    pub fn new(marks: Vec<usize>, rates: Vec<f64>) -> Result<Self> {
        if marks.is_empty() || marks.len() != rates.len() {
            return Err(Error::DegenerateInput("marks and rates must be non-empty and of equal length".into()));
        }
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::DegenerateInput("mark rates must be positive".into()));
        }
        let mut sorted = marks.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DegenerateInput("marks must be distinct".into()));
        }
        Ok(Self { marks, rates })
    }

    /// Every catalog entry with the same rate.
    pub fn uniform(catalog_len: usize, rate: f64) -> Result<Self> {
        Self::new((0..catalog_len).collect(), vec![rate; catalog_len])
    }

    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    /// λ(A).
    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Catalog index of mark position `pos`.
    pub fn catalog_index(&self, pos: usize) -> usize {
        self.marks[pos]
    }

    pub(crate) fn check_catalog(&self, catalog: &ControlCatalog) -> Result<()> {
        if self.marks.iter().any(|m| *m >= catalog.len()) {
            return Err(Error::DegenerateInput("mark outside the catalog".into()));
        }
        Ok(())
    }
}

/// One jump of the mark process; `mark` is a position in the [`MarkIntensity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub mark: usize,
}

/// Jumps on `[start, horizon]`, at most `k_max` of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonPath {
    pub start: f64,
    pub horizon: f64,
    /// Catalog index of the control in force before the first jump.
    pub initial: usize,
    pub k_max: usize,
    pub jumps: Vec<Jump>,
    /// A further jump would have occurred before the horizon.
    pub truncated: bool,
}

impl PoissonPath {
    /// Jumps with time ≤ s.
    pub fn jumps_until(&self, s: f64) -> &[Jump] {
        let n = self.jumps.partition_point(|j| j.time <= s);
        &self.jumps[..n]
    }

    /// Catalog index of the control in force at `s` (right-continuous).
    pub fn control_at(&self, lambda: &MarkIntensity, s: f64) -> usize {
        match self.jumps_until(s).last() {
            Some(j) => lambda.catalog_index(j.mark),
            None => self.initial,
        }
    }
}

/// Poisson path under the reference intensity λ: exponential inter-arrivals at
/// λ(A), marks i.i.d. with probabilities proportional to the rates.
pub fn sample_poisson_path(
    lambda: &MarkIntensity,
    start: f64,
    horizon: f64,
    k_max: usize,
    initial: usize,
    seed: u64,
) -> PoissonPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_reference(lambda, start, horizon, k_max, initial, &mut rng)
}

pub(crate) fn sample_reference<R: Rng>(
    lambda: &MarkIntensity,
    start: f64,
    horizon: f64,
    k_max: usize,
    initial: usize,
    rng: &mut R,
) -> PoissonPath {
    let total = lambda.total_rate();
    let exp = Exp::new(total).expect("positive total rate");
    let mut jumps = Vec::new();
    let mut time = start;
    let mut truncated = false;
    loop {
        time += exp.sample(rng);
        if time > horizon {
            break;
        }
        if jumps.len() == k_max {
            truncated = true;
            break;
        }
        jumps.push(Jump {
            time,
            mark: pick_mark(lambda.rates().iter().copied(), total, rng),
        });
    }
    PoissonPath {
        start,
        horizon,
        initial,
        k_max,
        jumps,
        truncated,
    }
}

pub(crate) fn pick_mark<R: Rng>(weights: impl Iterator<Item = f64>, total: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Path under the intensity ν·λ, exact for ν piecewise constant on `grid`
/// intervals and between jumps.
pub fn sample_poisson_path_under(
    policy: &dyn IntensityPolicy,
    lambda: &MarkIntensity,
    grid: &TimeGrid,
    k_max: usize,
    initial: usize,
    seed: u64,
) -> Result<PoissonPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = policy.bounds();
    let mut jumps: Vec<Jump> = Vec::new();
    let mut truncated = false;
    let mut rates = vec![0.0; lambda.len()];
    'outer: for i in 0..grid.n_steps() {
        let end = grid.node(i + 1);
        let mut time = grid.node(i);
        loop {
            let mut total = 0.0;
            for (m, r) in rates.iter_mut().enumerate() {
                let nu = policy.intensity(&jumps, i, m);
                if !(nu >= lo && nu <= hi) {
                    return Err(Error::InvalidIntensity { value: nu, lo, hi });
                }
                *r = nu * lambda.rates()[m];
                total += *r;
            }
            if total <= 0.0 {
                break;
            }
            time += Exp::new(total).expect("positive rate").sample(&mut rng);
            if time > end {
                break;
            }
            if jumps.len() == k_max {
                truncated = true;
                break 'outer;
            }
            let mark = pick_mark(rates.iter().copied(), total, &mut rng);
            jumps.push(Jump { time, mark });
        }
    }
    Ok(PoissonPath {
        start: grid.t_start(),
        horizon: grid.t_end(),
        initial,
        k_max,
        jumps,
        truncated,
    })
}

/// Action of the randomized control Ī at time `s`: the control in force at
/// `s` evaluated on the Brownian history.
pub fn build_randomized_control(
    path: &PoissonPath,
    lambda: &MarkIntensity,
    catalog: &ControlCatalog,
    s: f64,
    history: &BrownianHistory,
) -> Result<usize> {
    if s < 0.0 {
        return Err(Error::Domain {
            value: s,
            domain: "s ≥ 0".into(),
        });
    }
    let c = path.control_at(lambda, s);
    evaluate_control(catalog.get(c), s.min(path.horizon), history)
}

/// Action of the shifted control Ī^{t,a₀} at time `s ≥ t`: the constant action
/// `a0` until the first jump at or after `t`, the current mark afterwards.
pub fn build_shifted_control(
    path: &PoissonPath,
    lambda: &MarkIntensity,
    catalog: &ControlCatalog,
    t: f64,
    a0: usize,
    s: f64,
    history: &BrownianHistory,
) -> Result<usize> {
    if s < t {
        return Err(Error::Domain {
            value: s,
            domain: format!("s ≥ t = {t}"),
        });
    }
    match path.jumps_until(s).last() {
        Some(j) if j.time >= t => evaluate_control(catalog.get(lambda.catalog_index(j.mark)), s.min(path.horizon), history),
        _ => Ok(a0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_opt::enumerate_step_controls;
    use crate::forward_sim::StepControl;

    fn cat() -> ControlCatalog {
        enumerate_step_controls(2, 1.0, 2, 1, 100).unwrap()
    }

    #[test]
    fn no_jump_frequency_matches_poisson() {
        let lam = MarkIntensity::new(vec![0, 1], vec![0.3, 0.2]).unwrap();
        let n = 10_000;
        let none = (0..n)
            .filter(|i| sample_poisson_path(&lam, 0.0, 1.0, 10, 0, *i as u64).jumps.is_empty())
            .count() as f64
            / n as f64;
        let p = (-0.5f64).exp();
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((none - p).abs() < 3.0 * sd, "{none} vs {p}");
    }

    #[test]
    fn mean_jump_count_is_rate_times_horizon() {
        let lam = MarkIntensity::new(vec![2], vec![3.0]).unwrap();
        let n = 10_000;
        let counts: Vec<f64> = (0..n)
            .map(|i| sample_poisson_path(&lam, 0.0, 1.0, 1000, 0, i as u64).jumps.len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 3.0 * (3.0f64 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn zero_cap_gives_no_jumps() {
        let lam = MarkIntensity::uniform(4, 5.0).unwrap();
        let p = sample_poisson_path(&lam, 0.0, 1.0, 0, 3, 9);
        assert!(p.jumps.is_empty());
        assert!(p.truncated);
        let h = BrownianHistory::observed(&[0.1, -0.2]);
        for s in [0.0, 0.3, 0.7, 1.0] {
            let a = build_randomized_control(&p, &lam, &cat(), s, &h).unwrap();
            assert_eq!(a, evaluate_control(cat().get(3), s, &h).unwrap());
        }
    }

    #[test]
    fn jump_times_increase_and_respect_cap() {
        let lam = MarkIntensity::uniform(4, 10.0).unwrap();
        for seed in 0..50 {
            let p = sample_poisson_path(&lam, 0.2, 1.0, 5, 0, seed);
            assert!(p.jumps.len() <= 5);
            assert!(p.jumps.windows(2).all(|w| w[0].time < w[1].time));
            assert!(p.jumps.iter().all(|j| j.time > 0.2 && j.time <= 1.0));
        }
    }

    fn path_with(times: &[(f64, usize)]) -> PoissonPath {
        PoissonPath {
            start: 0.0,
            horizon: 1.0,
            initial: 0,
            k_max: 10,
            jumps: times.iter().map(|&(time, mark)| Jump { time, mark }).collect(),
            truncated: false,
        }
    }

    #[test]
    fn control_switches_at_the_jump_time() {
        let lam = MarkIntensity::uniform(4, 1.0).unwrap();
        let p = path_with(&[(0.4, 3)]);
        let h = BrownianHistory::observed(&[0.0, 0.0]);
        assert_eq!(build_randomized_control(&p, &lam, &cat(), 0.39, &h).unwrap(), 0);
        assert_eq!(build_randomized_control(&p, &lam, &cat(), 0.4, &h).unwrap(), 1);
        assert_eq!(build_randomized_control(&p, &lam, &cat(), 0.9, &h).unwrap(), 1);
    }

    #[test]
    fn shifted_control_uses_a0_until_the_next_jump() {
        let lam = MarkIntensity::uniform(4, 1.0).unwrap();
        let p = path_with(&[(0.2, 3), (0.6, 2)]);
        let h = BrownianHistory::observed(&[0.0, 0.0]);
        let c = cat();
        assert_eq!(build_shifted_control(&p, &lam, &c, 0.3, 1, 0.3, &h).unwrap(), 1);
        assert_eq!(build_shifted_control(&p, &lam, &c, 0.3, 1, 0.59, &h).unwrap(), 1);
        // Mark 2 = catalog entry (−,+) → action 1 on the second half.
        assert_eq!(build_shifted_control(&p, &lam, &c, 0.3, 0, 0.7, &h).unwrap(), 1);
        assert!(matches!(
            build_shifted_control(&p, &lam, &c, 0.3, 1, 0.1, &h),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn shift_at_zero_matches_plain_randomization() {
        let lam = MarkIntensity::uniform(4, 3.0).unwrap();
        let cat = cat();
        let h = BrownianHistory::observed(&[0.2, -0.1]);
        // ᾱ = constant a₀ lives at catalog entries 0 (a₀ = 0) and 3 (a₀ = 1).
        for (a0, init) in [(0usize, 0usize), (1, 3)] {
            assert_eq!(cat.get(init), &StepControl::piecewise(1.0, &[a0, a0]).unwrap());
            for seed in 0..30 {
                let p = sample_poisson_path(&lam, 0.0, 1.0, 10, init, seed);
                for s in [0.0, 0.25, 0.5, 0.9] {
                    assert_eq!(
                        build_shifted_control(&p, &lam, &cat, 0.0, a0, s, &h).unwrap(),
                        build_randomized_control(&p, &lam, &cat, s, &h).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn mark_measure_validation() {
        assert!(MarkIntensity::new(vec![0, 0], vec![1.0, 1.0]).is_err());
        assert!(MarkIntensity::new(vec![0], vec![0.0]).is_err());
        assert!(MarkIntensity::new(vec![], vec![]).is_err());
        assert_eq!(MarkIntensity::uniform(3, 0.5).unwrap().total_rate(), 1.5);
    }
}
