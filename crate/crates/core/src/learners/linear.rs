//! Weighted least squares and logistic regression.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numeric::expit;

/// Coefficients of a linear index `intercept + coef . x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    #[inline]
    pub fn index(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

fn design_row(x: &[f64], intercept: bool, out: &mut Vec<f64>) {
    out.clear();
    if intercept {
        out.push(1.0);
    }
    out.extend_from_slice(x);
}

fn split_coefficients(beta: &[f64], intercept: bool) -> LinearModel {
    if intercept {
        LinearModel { intercept: beta[0], coef: beta[1..].to_vec() }
    } else {
        LinearModel { intercept: 0.0, coef: beta.to_vec() }
    }
}

/// Solves the weighted normal equations through a QR factorization of
/// `sqrt(W) X`. A column whose pivot is negligible relative to its own norm
/// signals rank deficiency.
pub fn fit_wls(x: &Matrix, y: &[f64], weights: &[f64], intercept: bool) -> Result<LinearModel> {
    let n = x.rows();
    let q = x.cols() + usize::from(intercept);
    if n < q {
        return Err(Error::Singular(format!("{n} rows cannot determine {q} coefficients")));
    }
    let mut a = DMatrix::<f64>::zeros(n, q);
    let mut b = DVector::<f64>::zeros(n);
    let mut row = Vec::with_capacity(q);
    for i in 0..n {
        let sw = weights[i].sqrt();
        design_row(x.row(i), intercept, &mut row);
        for j in 0..q {
            a[(i, j)] = sw * row[j];
        }
        b[i] = sw * y[i];
    }
    let norms: Vec<f64> = (0..q).map(|j| a.column(j).norm()).collect();
    let qr = a.qr();
    let r = qr.r();
    for j in 0..q {
        if r[(j, j)].abs() <= 1e-10 * norms[j].max(f64::MIN_POSITIVE) {
            return Err(Error::Singular(format!("design column {j} is linearly dependent on the others")));
        }
    }
    let qtb = qr.q().transpose() * b;
    let beta = r.solve_upper_triangular(&qtb).ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    Ok(split_coefficients(beta.as_slice(), intercept))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub model: LinearModel,
    pub converged: bool,
    pub iterations: usize,
}

/// Weighted Bernoulli maximum likelihood by Newton-Raphson (IRLS) with step
/// halving. Weights are rescaled to mean one, which leaves the maximizer
/// unchanged and makes `tol` a bound on the mean score.
pub fn fit_logistic(
    x: &Matrix,
    r: &[f64],
    weights: &[f64],
    intercept: bool,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticFit> {
    let n = x.rows();
    let (has0, has1) = r.iter().fold((false, false), |(a, b), &v| (a || v == 0.0, b || v == 1.0));
    if !(has0 && has1) {
        return Err(Error::InsufficientData("logistic regression needs both responses and nonresponses".into()));
    }
    if r.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("logistic targets must be 0 or 1"));
    }
    let q = x.cols() + usize::from(intercept);
    let wsum: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|v| v * n as f64 / wsum).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(q);
            design_row(x.row(i), intercept, &mut row);
            row
        })
        .collect();

    let loglik = |beta: &[f64]| -> f64 {
        let mut ll = 0.0;
        for i in 0..n {
            let eta: f64 = rows[i].iter().zip(beta).map(|(a, b)| a * b).sum();
            // log(1 + e^eta) computed stably
            let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            ll += w[i] * (r[i] * eta - softplus);
        }
        ll
    };

    let mut beta = vec![0.0; q];
    if intercept {
        let rate = r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        beta[0] = (rate / (1.0 - rate)).ln();
    }
    let mut ll = loglik(&beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    for it in 0..max_iter {
        iterations = it + 1;
        let mut grad = DVector::<f64>::zeros(q);
        let mut hess = DMatrix::<f64>::zeros(q, q);
        for i in 0..n {
            let eta: f64 = rows[i].iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = expit(eta);
            let g = w[i] * (r[i] - p);
            let h = w[i] * p * (1.0 - p);
            for a in 0..q {
                grad[a] += g * rows[i][a];
                for b in 0..=a {
                    hess[(a, b)] += h * rows[i][a] * rows[i][b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        grad_norm = grad.norm() / n as f64;
        if grad_norm <= tol {
            converged = true;
            break;
        }
        let Some(chol) = hess.clone().cholesky() else {
            log::warn!("logistic fit: information matrix not positive definite at iteration {iterations}");
            break;
        };
        let step = chol.solve(&grad);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let cll = loglik(&cand);
            // Near the optimum the gain drops below the rounding error of the
            // log-likelihood, so ties within that error are accepted.
            if cll >= ll - 1e-12 * (1.0 + ll.abs()) {
                beta = cand;
                ll = cll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        if beta.iter().any(|b| b.abs() > 1e3) {
            log::warn!("logistic fit: coefficients diverging, data look separable");
            break;
        }
    }
    if !converged {
        log::warn!(
            "logistic fit stopped at gradient norm {grad_norm:e} (tolerance {tol:e}) after {iterations} iterations"
        );
    }
    Ok(LogisticFit { model: split_coefficients(&beta, intercept), converged, iterations })
}
