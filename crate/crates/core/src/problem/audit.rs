//! Numerical spot-check of the declared Lipschitz and growth constants.

use super::{ActionSpace, CoefficientSet};
use crate::measures::{wasserstein2, EmpiricalMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_probes: usize,
    /// max |b(x,π) − b(x',π')| / (|x − x'| + W₂(π, π')).
    pub drift_lipschitz: f64,
    /// Same ratio for σ in Frobenius norm.
    pub diffusion_lipschitz: f64,
    /// max |f| / (h(‖π‖₂)(1 + |x|^p)).
    pub running_growth: f64,
    /// max |g| / (h(‖π‖₂)(1 + |x|^p)).
    pub terminal_growth: f64,
    /// Observed moduli of f and g over the same probe pairs (no threshold).
    pub running_modulus: f64,
    pub terminal_modulus: f64,
    pub lipschitz_violated: bool,
    pub growth_violated: bool,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        !self.lipschitz_violated && !self.growth_violated
    }
}

fn random_measure(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> EmpiricalMeasure {
    let n = rng.random_range(1..=6);
    let pts: Vec<f64> = (0..n * dim)
        .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    EmpiricalMeasure::uniform_flat_unchecked(dim, pts)
}

/// Probes random pairs `(t, x, π), (t, x', π')` with a shared action.
pub fn assumption_audit(
    coeffs: &CoefficientSet,
    space: &ActionSpace,
    horizon: f64,
    n_probes: usize,
    seed: u64,
) -> AuditReport {
    let c = &coeffs.coefficients;
    let n = c.state_dim();
    let d = c.noise_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = AuditReport {
        n_probes: n_probes.max(1),
        drift_lipschitz: 0.0,
        diffusion_lipschitz: 0.0,
        running_growth: 0.0,
        terminal_growth: 0.0,
        running_modulus: 0.0,
        terminal_modulus: 0.0,
        lipschitz_violated: false,
        growth_violated: false,
    };
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    let mut s1 = vec![0.0; n * d];
    let mut s2 = vec![0.0; n * d];
    for _ in 0..rep.n_probes {
        let t = horizon * rng.random::<f64>();
        let scale = 0.1 + 3.0 * rng.random::<f64>();
        let x1: Vec<f64> = (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let p1 = random_measure(&mut rng, n, scale);
        let p2 = random_measure(&mut rng, n, scale);
        let a = space.action(rng.random_range(0..space.len()));
        let dx: f64 = x1.iter().zip(&x2).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        let dist = dx + wasserstein2(&p1, &p2).unwrap_or(f64::INFINITY);
        c.drift(t, &x1, &p1, a, &mut b1);
        c.drift(t, &x2, &p2, a, &mut b2);
        c.diffusion(t, &x1, &p1, a, &mut s1);
        c.diffusion(t, &x2, &p2, a, &mut s2);
        let db = norm_diff(&b1, &b2);
        let ds = norm_diff(&s1, &s2);
        let f1 = c.running(t, &x1, &p1, a);
        let f2 = c.running(t, &x2, &p2, a);
        let g1 = c.terminal(&x1, &p1);
        let g2 = c.terminal(&x2, &p2);
        if dist > 1e-12 && dist.is_finite() {
            rep.drift_lipschitz = rep.drift_lipschitz.max(db / dist);
            rep.diffusion_lipschitz = rep.diffusion_lipschitz.max(ds / dist);
            rep.running_modulus = rep.running_modulus.max((f1 - f2).abs() / dist);
            rep.terminal_modulus = rep.terminal_modulus.max((g1 - g2).abs() / dist);
        }
        let bound = coeffs.growth_bound(&x1, &p1);
        if bound > 0.0 {
            rep.running_growth = rep.running_growth.max(f1.abs() / bound);
            rep.terminal_growth = rep.terminal_growth.max(g1.abs() / bound);
        } else if f1 != 0.0 || g1 != 0.0 {
            rep.running_growth = f64::INFINITY;
        }
    }
    let tol = 1e-9;
    rep.lipschitz_violated = rep.drift_lipschitz > coeffs.lipschitz + tol
        || rep.diffusion_lipschitz > coeffs.lipschitz + tol;
    rep.growth_violated = rep.running_growth > 1.0 + tol || rep.terminal_growth > 1.0 + tol;
    rep
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}
