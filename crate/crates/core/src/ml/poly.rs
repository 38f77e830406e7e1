use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Scale;
use crate::error::{Error, Result};

/// Ridge-regularized polynomial in a standardized input, predicting a
/// standardized output. The intercept is not penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyRidgeModel {
    pub degree: usize,
    pub lambda: f64,
    /// Coefficients of `z^0 .. z^degree` for `z` the standardized input.
    pub coefficients: Vec<f64>,
    pub x_scale: Scale,
    pub y_scale: Scale,
}

impl PolyRidgeModel {
    pub fn predict(&self, x: f64) -> f64 {
        let z = self.x_scale.forward(x);
        // Horner
        let y = self.coefficients.iter().rev().fold(0.0, |acc, c| acc * z + c);
        self.y_scale.inverse(y)
    }

    /// Euclidean norm of the non-intercept coefficients.
    pub fn slope_norm(&self) -> f64 {
        self.coefficients[1..].iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Minimizes `Σ (y - p(x))² + λ‖c₁..c_n‖²` over the standardized
/// Vandermonde system by solving the normal equations.
pub fn fit_poly_ridge(samples: &[(f64, f64)], degree: usize, lambda: f64) -> Result<PolyRidgeModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge strength must be ≥ 0, got {lambda}")));
    }
    if samples.len() < degree + 1 {
        return Err(Error::InsufficientData(format!(
            "degree {degree} needs at least {} samples, got {}",
            degree + 1,
            samples.len()
        )));
    }
    if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let x_scale = Scale::fit(&xs);
    let y_scale = Scale::fit(&ys);
    if lambda == 0.0 {
        let mut distinct = xs.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < degree + 1 {
            return Err(Error::RankDeficient);
        }
    }
    let cols = degree + 1;
    let vander = DMatrix::from_fn(samples.len(), cols, |i, j| x_scale.forward(xs[i]).powi(j as i32));
    let target = DVector::from_iterator(ys.len(), ys.iter().map(|y| y_scale.forward(*y)));
    let mut gram = vander.transpose() * &vander;
    for j in 1..cols {
        gram[(j, j)] += lambda;
    }
    let rhs = vander.transpose() * target;
    let solution = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or(Error::RankDeficient)?;
    if solution.iter().any(|c| !c.is_finite()) {
        return Err(Error::RankDeficient);
    }
    Ok(PolyRidgeModel {
        degree,
        lambda,
        coefficients: solution.iter().copied().collect(),
        x_scale,
        y_scale,
    })
}
