use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_SCALE: f64 = 1e-8;
/// Smallest scale relative to the widest dimension used for dynamics inputs.
/// Standardizing a nearly constant feature to unit variance would multiply
/// any sensitivity the model picks up along it by the inverse of a tiny
/// spread, and raw-unit Jacobians would report that amplification.
pub const RELATIVE_SCALE_FLOOR: f64 = 0.1;

/// Per-dimension affine standardization `z = (x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean and population standard deviation of `rows`. Dimensions with
    /// (near) zero spread get scale 1 so the map stays invertible.
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        Self::fit_floored(rows, 0.0)
    }

    /// Like [`Standardizer::fit`], but every scale is at least
    /// `relative_floor` times the largest one.
    pub fn fit_floored<'a, I>(rows: I, relative_floor: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        for row in rows {
            if count == 0 {
                sum = vec![0.0; row.len()];
                sum_sq = vec![0.0; row.len()];
            } else if row.len() != sum.len() {
                return Err(Error::Input("rows of differing dimension".into()));
            }
            for (i, v) in row.iter().enumerate() {
                sum[i] += v;
                sum_sq[i] += v * v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::Input("cannot standardize an empty set".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let sd: Vec<f64> = sum_sq.iter().zip(&mean).map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt()).collect();
        let widest = sd.iter().copied().fold(0.0, f64::max);
        let scale = sd
            .iter()
            .map(|&s| {
                let s = s.max(relative_floor * widest);
                if s < MIN_SCALE {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    /// Per-dimension means with one common scale, the largest standard
    /// deviation, so relative magnitudes between dimensions are preserved.
    pub fn fit_shared<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut s = Self::fit_floored(rows, RELATIVE_SCALE_FLOOR)?;
        let widest = s.scale.iter().copied().fold(0.0, f64::max);
        s.scale.iter_mut().for_each(|v| *v = widest);
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}
