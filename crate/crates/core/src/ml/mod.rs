//! Small self-contained learners: polynomial ridge regression, a
//! feedforward network trained by backpropagation, and a bounded
//! derivative-free minimizer.

mod nelder_mead;
mod nn;
mod poly;

pub use nelder_mead::{lsq_minimize, LsqFitResult, LsqOptions};
pub use nn::{
    nn_forward, nn_train, Activation, FeedforwardNet, Loss, TrainConfig, TrainReport,
    MCPIC_HIDDEN,
};
pub use poly::{fit_poly_ridge, PolyRidgeModel};

use serde::{Deserialize, Serialize};

/// Affine map to zero mean and unit variance, one entry per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits column statistics; constant columns keep unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *v += (x - m).powi(2) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-300 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Scalar version of [`Standardizer`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub mean: f64,
    pub std: f64,
}

impl Scale {
    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    pub fn fit(values: &[f64]) -> Self {
        let s = Standardizer::fit(values.chunks(1));
        Self {
            mean: s.mean.first().copied().unwrap_or(0.0),
            std: s.std.first().copied().unwrap_or(1.0),
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Format tag written into persisted models.
pub const MODEL_FORMAT: &str = "crackrom-model/1";
