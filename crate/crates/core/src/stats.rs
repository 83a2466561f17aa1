//! Small statistics helpers shared by the value routes.

use serde::{Deserialize, Serialize};

/// Normal quantile used for the reported 95% intervals.
pub const Z95: f64 = 1.96;

/// Monte Carlo estimate with the standard error of the sample mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl ValueEstimate {
    pub fn exact(mean: f64) -> Self {
        Self {
            mean,
            std_error: 0.0,
        }
    }

    /// Mean and standard error of `samples`.
    pub fn from_samples(samples: &[f64]) -> Self {
        let (mean, var) = mean_var(samples);
        let std_error = if samples.len() > 1 {
            (var / samples.len() as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error }
    }
}

/// Mean and unbiased variance. The variance is 0 for fewer than two samples.
pub fn mean_var(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

/// Summary of one quantity repeated over independent outer seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub mean: f64,
    pub std_dev: f64,
    /// Half-width of the 95% interval for the mean: `1.96 * sd / sqrt(R)`.
    pub ci: f64,
    pub values: Vec<f64>,
}

impl SeedSummary {
    pub fn new(values: Vec<f64>) -> Self {
        let (mean, var) = mean_var(&values);
        let std_dev = var.sqrt();
        let ci = if values.is_empty() {
            0.0
        } else {
            Z95 * std_dev / (values.len() as f64).sqrt()
        };
        Self {
            mean,
            std_dev,
            ci,
            values,
        }
    }
}

/// Half-width for the difference of two independent summaries.
pub fn combined_ci(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// Deterministic 64-bit mix used to derive sub-seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_constant_values_has_zero_ci() {
        let s = SeedSummary::new(vec![2.0; 8]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.ci, 0.0);
    }

    #[test]
    fn standard_error_matches_hand_computation() {
        let e = ValueEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert!((e.mean - 2.5).abs() < 1e-15);
        let var = 5.0 / 3.0;
        assert!((e.std_error - (var / 4.0_f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mixed_seeds_differ() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(2, 0));
    }
}
