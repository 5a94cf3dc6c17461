use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Z-score statistics fitted on the training slice only (population
/// standard deviation, divide by n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    /// `[start, end)` indices of the slice the stats came from.
    pub source_range: (usize, usize),
}

const MIN_STD: f64 = 1e-12;

pub fn fit_norm(train: &[f64], source_range: (usize, usize)) -> Result<NormStats> {
    if train.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 points to fit normalization, got {}",
            train.len()
        )));
    }
    let n = train.len() as f64;
    let mean = train.iter().sum::<f64>() / n;
    let var = train.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < MIN_STD {
        return Err(Error::DegenerateSeries(format!(
            "training slice std {std:e} below {MIN_STD:e}"
        )));
    }
    Ok(NormStats { mean, std, source_range })
}

impl NormStats {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn apply_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_slice(&self, zs: &[f64]) -> Vec<f64> {
        zs.iter().map(|&z| self.invert(z)).collect()
    }
}
