//! Riccati reduction of the linear-quadratic mean-field benchmark.
//!
//! Split the control into its mean and a zero-mean fluctuation. The expected
//! gap ȳ(s) = E[X_s] − m̄_s decays like e^{−κ(s−t)} whatever the control, the
//! best mean control is −q ȳ and the fluctuation problem is a scalar LQ problem
//! whose Riccati coefficient η solves
//!
//!   η' = η² + 2(κ + q) η + q² − ε,   η(T) = c.
//!
//! The value is ½(q² − ε)∫ȳ² − (c/2) ȳ_T² − ½σ² ∫η.

use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use serde::{Deserialize, Serialize};

/// Number of RK4 steps per horizon.
pub const RICCATI_STEPS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqParams {
    pub kappa: f64,
    pub q: f64,
    pub eps: f64,
    pub c: f64,
    pub sigma: f64,
    pub horizon: f64,
}

impl Default for LqParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            q: 1.0,
            eps: 2.0,
            c: 1.0,
            sigma: 0.1,
            horizon: 1.0,
        }
    }
}

impl LqParams {
    fn riccati_rhs(&self, eta: f64) -> f64 {
        eta * eta + 2.0 * (self.kappa + self.q) * eta + self.q * self.q - self.eps
    }

    /// ∫_t^T η(s) ds by classical RK4 on the pair (η, ∫η), stepping backward
    /// from T with step at most T / `RICCATI_STEPS`.
    pub fn integrated_riccati(&self, t: f64) -> f64 {
        let span = self.horizon - t;
        if span <= 0.0 {
            return 0.0;
        }
        let h_max = self.horizon / RICCATI_STEPS as f64;
        let n = (span / h_max).ceil().max(1.0) as usize;
        let h = span / n as f64;
        // Reverse time r = T − s: dη/dr = −rhs(η), d(∫η)/dr = η.
        let f = |eta: f64| -self.riccati_rhs(eta);
        let mut eta = self.c;
        let mut acc = 0.0;
        for _ in 0..n {
            let k1 = f(eta);
            let k2 = f(eta + 0.5 * h * k1);
            let k3 = f(eta + 0.5 * h * k2);
            let k4 = f(eta + h * k3);
            let e2 = eta + 0.5 * h * k1;
            let e3 = eta + 0.5 * h * k2;
            let e4 = eta + h * k3;
            acc += h / 6.0 * (eta + 2.0 * e2 + 2.0 * e3 + e4);
            eta += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        acc
    }
}

/// Value of the LQ benchmark at `(t, x, π)`; depends on π only through its mean.
pub fn lq_riccati_value(params: &LqParams, t: f64, x: &[f64], pi: &EmpiricalMeasure) -> Result<f64> {
    if x.len() != 1 || pi.dim() != 1 {
        return Err(Error::UnsupportedBenchmark(
            "the LQ oracle covers scalar states only".into(),
        ));
    }
    let span = params.horizon - t;
    if span < 0.0 {
        return Err(Error::Domain {
            value: t,
            domain: format!("[0, {}]", params.horizon),
        });
    }
    let y0 = x[0] - pi.mean()[0];
    let k = params.kappa;
    let int_y2 = if k.abs() < 1e-12 {
        y0 * y0 * span
    } else {
        y0 * y0 * (1.0 - (-2.0 * k * span).exp()) / (2.0 * k)
    };
    let y_t = y0 * (-k * span).exp();
    let mean_part = 0.5 * (params.q * params.q - params.eps) * int_y2 - 0.5 * params.c * y_t * y_t;
    let noise_part = if span == 0.0 {
        0.0
    } else {
        -0.5 * params.sigma * params.sigma * params.integrated_riccati(t)
    };
    Ok(mean_part + noise_part)
}
