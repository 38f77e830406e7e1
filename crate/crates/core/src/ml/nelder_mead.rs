use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings for [`lsq_minimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsqOptions {
    /// Maximum objective evaluations.
    pub max_evals: usize,
    /// Spread of objective values across the simplex below which the search
    /// stops.
    pub f_tol: f64,
    /// Simplex diameter below which the search stops.
    pub x_tol: f64,
    /// Initial simplex edge per coordinate; `None` picks 5% of the bounded
    /// range (or of the magnitude of the start).
    pub initial_step: Option<Vec<f64>>,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            f_tol: 1e-12,
            x_tol: 1e-10,
            initial_step: None,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsqFitResult {
    pub best: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective after each iteration.
    pub history: Vec<f64>,
}

struct Counted<'a, F> {
    f: &'a mut F,
    lower: &'a [f64],
    upper: &'a [f64],
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<'_, F> {
    fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(self.lower).zip(self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn eval(&mut self, x: &mut [f64]) -> f64 {
        self.project(x);
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Bounded Nelder-Mead simplex search. Trial points are projected onto the
/// box `bounds`; the returned objective never exceeds the one at `initial`.
pub fn lsq_minimize<F>(
    mut objective: F,
    initial: &[f64],
    bounds: &[(f64, f64)],
    options: &LsqOptions,
) -> Result<LsqFitResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = initial.len();
    if n == 0 || bounds.len() != n {
        return Err(Error::InvalidArgument(format!(
            "need one bound per parameter ({} parameters, {} bounds)",
            n,
            bounds.len()
        )));
    }
    if bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::InvalidArgument("lower bound above upper bound".into()));
    }
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let mut f = Counted {
        f: &mut objective,
        lower: &lower,
        upper: &upper,
        evals: 0,
    };
    let mut x0 = initial.to_vec();
    let f0 = f.eval(&mut x0);
    if !f0.is_finite() {
        return Err(Error::InvalidArgument("objective is not finite at the initial point".into()));
    }
    let steps: Vec<f64> = match &options.initial_step {
        Some(s) if s.len() == n => s.clone(),
        _ => (0..n)
            .map(|i| {
                let (lo, hi) = bounds[i];
                if lo.is_finite() && hi.is_finite() && hi > lo {
                    0.05 * (hi - lo)
                } else if x0[i] != 0.0 {
                    0.05 * x0[i].abs()
                } else {
                    0.00025
                }
            })
            .collect(),
    };

    let mut best = (x0.clone(), f0);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for round in 0..=options.restarts {
        let start = best.0.clone();
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), best.1)];
        for i in 0..n {
            let mut v = start.clone();
            // step inward when the start sits on the upper bound
            v[i] = if start[i] + steps[i] <= upper[i] {
                start[i] + steps[i]
            } else {
                start[i] - steps[i]
            };
            let fv = f.eval(&mut v);
            simplex.push((v, fv));
        }
        converged = false;
        while f.evals < options.max_evals {
            iterations += 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if simplex[0].1 < best.1 {
                best = simplex[0].clone();
            }
            history.push(best.1);
            let f_spread = simplex[n].1 - simplex[0].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(v, _)| {
                    v.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if f_spread.abs() <= options.f_tol && diameter <= options.x_tol
                || (f_spread.abs() <= options.f_tol * best.1.abs().max(1e-300) && diameter <= options.x_tol.sqrt())
            {
                converged = true;
                break;
            }
            let mut centroid = vec![0.0; n];
            for (v, _) in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }
            let worst = simplex[n].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let mut xr = along(1.0);
            let fr = f.eval(&mut xr);
            if fr < simplex[0].1 {
                let mut xe = along(2.0);
                let fe = f.eval(&mut xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (mut xc, outside) = if fr < worst.1 {
                    (along(0.5), true)
                } else {
                    (along(-0.5), false)
                };
                let fc = f.eval(&mut xc);
                if (outside && fc <= fr) || (!outside && fc < worst.1) {
                    simplex[n] = (xc, fc);
                } else {
                    let anchor = simplex[0].0.clone();
                    for entry in simplex.iter_mut().skip(1) {
                        let mut v: Vec<f64> = anchor
                            .iter()
                            .zip(&entry.0)
                            .map(|(a, x)| a + 0.5 * (x - a))
                            .collect();
                        let fv = f.eval(&mut v);
                        *entry = (v, fv);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best.1 {
            best = simplex[0].clone();
        }
        if !converged || round == options.restarts || f.evals >= options.max_evals {
            break;
        }
    }
    if history.last().is_none_or(|h| *h != best.1) {
        history.push(best.1);
    }
    Ok(LsqFitResult {
        best: best.0,
        objective: best.1,
        iterations,
        evaluations: f.evals,
        converged,
        history,
    })
}
