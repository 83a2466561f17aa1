//! Atomic probability measures on ℝⁿ with finite second moment.
//!
//! Every law that enters a coefficient evaluation is an [`EmpiricalMeasure`]:
//! particle clouds, user supplied initial laws and Dirac masses alike.

mod transport;

pub use transport::{transport_lp, wasserstein2, wasserstein2_with_cap, DEFAULT_SUPPORT_CAP};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

const WEIGHT_TOL: f64 = 1e-12;

/// Weighted point cloud. Points are stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    mean: Vec<f64>,
    second_moment: f64,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<MeasureRepr> for EmpiricalMeasure {
    type Error = Error;
    fn try_from(r: MeasureRepr) -> Result<Self> {
        EmpiricalMeasure::new(r.points, r.weights)
    }
}

impl From<EmpiricalMeasure> for MeasureRepr {
    fn from(m: EmpiricalMeasure) -> Self {
        MeasureRepr {
            points: m.points.chunks(m.dim).map(|p| p.to_vec()).collect(),
            weights: m.weights,
        }
    }
}

impl EmpiricalMeasure {
    /// Builds a measure from explicit atoms and weights.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::DegenerateInput("measure has no atoms".into()))?;
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: p.len(),
                });
            }
            flat.extend_from_slice(p);
        }
        Self::from_flat(dim, flat, weights)
    }

    /// Builds a measure from a flat row-major buffer of `weights.len()` points.
    pub fn from_flat(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DegenerateInput("zero-dimensional points".into()));
        }
        if weights.is_empty() {
            return Err(Error::DegenerateInput("measure has no atoms".into()));
        }
        if points.len() != weights.len() * dim {
            return Err(Error::Dimension {
                expected: weights.len() * dim,
                got: points.len(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite atom coordinate".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::DegenerateInput("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::DegenerateInput(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self::assemble(dim, points, weights))
    }

    /// Uniformly weighted cloud from a flat buffer; the caller guarantees finiteness.
    pub(crate) fn uniform_flat_unchecked(dim: usize, points: Vec<f64>) -> Self {
        let n = points.len() / dim;
        let weights = vec![1.0 / n as f64; n];
        Self::assemble(dim, points, weights)
    }

    /// Uniformly weighted cloud from a flat buffer.
    pub fn uniform_flat(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::DegenerateInput("bad flat point buffer".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite atom coordinate".into()));
        }
        Ok(Self::uniform_flat_unchecked(dim, points))
    }

    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::uniform_flat(x.len(), x.to_vec())
    }

    fn assemble(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Self {
        let mut mean = vec![0.0; dim];
        let mut second_moment = 0.0;
        for (p, w) in points.chunks(dim).zip(&weights) {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += w * v;
                second_moment += w * v * v;
            }
        }
        Self {
            dim,
            points,
            weights,
            mean,
            second_moment,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Σ wᵢ|xᵢ|².
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// Weighted variance summed over components.
    pub fn variance(&self) -> f64 {
        let m2: f64 = self.mean.iter().map(|m| m * m).sum();
        (self.second_moment - m2).max(0.0)
    }

    /// Writes one atom per row with the weight in the last column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for (p, wt) in self.points().zip(&self.weights) {
            let mut row: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{wt:e}"));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_reader(r);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Io(e.to_string()))?;
            let (w, p) = vals
                .split_last()
                .ok_or_else(|| Error::DegenerateInput("empty csv row".into()))?;
            points.push(p.to_vec());
            weights.push(*w);
        }
        Self::new(points, weights)
    }
}

/// Uniformly weighted measure over the given samples, in input order.
pub fn empirical_from_samples(samples: &[Vec<f64>]) -> Result<EmpiricalMeasure> {
    if samples.is_empty() {
        return Err(Error::DegenerateInput("no samples".into()));
    }
    let n = samples.len();
    EmpiricalMeasure::new(samples.to_vec(), vec![1.0 / n as f64; n]).map_err(|e| match e {
        Error::DegenerateInput(_) if samples.iter().flatten().any(|v| !v.is_finite()) => {
            Error::DegenerateInput("non-finite sample".into())
        }
        other => other,
    })
}

/// (Σ wᵢ|xᵢ|²)^{1/2}, the W₂ distance to the Dirac mass at the origin.
pub fn moment_norm(mu: &EmpiricalMeasure) -> f64 {
    mu.second_moment().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_from_samples() {
        let m = empirical_from_samples(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert_eq!(m.point(0), &[1.0, 0.0]);
        assert_eq!(m.point(1), &[0.0, 1.0]);
    }

    #[test]
    fn single_sample_is_dirac() {
        let m = empirical_from_samples(&[vec![3.0]]).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        assert_eq!(m.point(0), &[3.0]);
    }

    #[test]
    fn rejects_nan_and_empty() {
        assert!(matches!(
            empirical_from_samples(&[vec![f64::NAN]]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            empirical_from_samples(&[]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn rejects_ragged_points_and_bad_weights() {
        assert!(matches!(
            EmpiricalMeasure::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.5, 0.5]),
            Err(Error::Dimension { .. })
        ));
        assert!(EmpiricalMeasure::new(vec![vec![1.0]], vec![0.9]).is_err());
    }

    #[test]
    fn moment_norm_examples() {
        assert_eq!(moment_norm(&EmpiricalMeasure::dirac(&[0.0]).unwrap()), 0.0);
        let m = empirical_from_samples(&[vec![-1.0], vec![1.0]]).unwrap();
        assert!((moment_norm(&m) - 1.0).abs() < 1e-15);
        let m = empirical_from_samples(&[vec![0.0], vec![2.0]]).unwrap();
        assert!((moment_norm(&m) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let m = EmpiricalMeasure::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![0.25, 0.75])
            .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"points":[[1.0,2.0],[3.0,4.0]],"weights":[0.25,0.75]}"#);
        let back: EmpiricalMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<EmpiricalMeasure>(r#"{"points":[],"weights":[]}"#).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = EmpiricalMeasure::new(vec![vec![1.5], vec![-2.0]], vec![0.5, 0.5]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = EmpiricalMeasure::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }
}
