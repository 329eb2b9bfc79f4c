//! L2-regularized, class-weighted logistic regression trained with L-BFGS.
//!
//! The objective is the class-weighted negative log-likelihood plus
//! `‖w‖² / (2C)` (bias unregularized); the optimizer is a standard two-loop
//! L-BFGS with Armijo backtracking, which makes the loss sequence
//! monotonically non-increasing.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{sigmoid, LabeledMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogregConfig {
    /// Inverse regularization strength.
    pub c: f64,
    /// Convergence: `max|∇f| <= tol · max(1, |f|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for LogregConfig {
    fn default() -> Self {
        LogregConfig {
            c: 1.0,
            tol: 1e-6,
            max_iter: 500,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogregModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: LogregConfig,
    /// Objective value after each accepted iteration.
    pub loss_history: Vec<f64>,
    pub final_grad_norm: f64,
}

impl LogregModel {
    /// Sigmoid of the linear form: attack probability.
    pub fn scores(&self, x: &Array2<f64>) -> Vec<f64> {
        let w = Array1::from_vec(self.weights.clone());
        x.dot(&w).iter().map(|z| sigmoid(z + self.bias)).collect()
    }
}

/// Class-weighted negative log-likelihood plus `‖w‖²/(2C)` at `(w, b)`.
pub fn logreg_objective(w: &[f64], b: f64, data: &LabeledMatrix, c: f64) -> f64 {
    let wv = Array1::from_vec(w.to_vec());
    let z = data.x.dot(&wv);
    let mut loss = 0.0;
    for i in 0..data.y.len() {
        let zi = z[i] + b;
        // softplus(-y~ z): stable in both tails.
        let t = if data.y[i] { -zi } else { zi };
        let softplus = if t > 0.0 {
            t + (-t).exp().ln_1p()
        } else {
            t.exp().ln_1p()
        };
        loss += data.sample_weight(i) * softplus;
    }
    loss + w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c)
}

fn objective_and_grad(theta: &Array1<f64>, data: &LabeledMatrix, c: f64) -> (f64, Array1<f64>) {
    let p = data.dim();
    let w = theta.slice(ndarray::s![..p]).to_owned();
    let b = theta[p];
    let z = data.x.dot(&w);
    let mut loss = 0.0;
    let mut residual = Array1::zeros(data.y.len());
    let mut grad_b = 0.0;
    for i in 0..data.y.len() {
        let zi = z[i] + b;
        let yi = if data.y[i] { 1.0 } else { 0.0 };
        let cw = data.sample_weight(i);
        let t = if data.y[i] { -zi } else { zi };
        let softplus = if t > 0.0 {
            t + (-t).exp().ln_1p()
        } else {
            t.exp().ln_1p()
        };
        loss += cw * softplus;
        let r = cw * (sigmoid(zi) - yi);
        residual[i] = r;
        grad_b += r;
    }
    loss += w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c);
    let mut grad = Array1::zeros(p + 1);
    let grad_w = data.x.t().dot(&residual) + &w / c;
    grad.slice_mut(ndarray::s![..p]).assign(&grad_w);
    grad[p] = grad_b;
    (loss, grad)
}

/// Train by L-BFGS until `max|∇f|` falls below the scaled tolerance.
pub fn train_logreg(data: &LabeledMatrix, config: &LogregConfig) -> Result<LogregModel> {
    let p = data.dim();
    let mut theta: Array1<f64> = Array1::zeros(p + 1);
    let (mut f, mut g) = objective_and_grad(&theta, data, config.c);
    let mut history: Vec<(Array1<f64>, Array1<f64>)> = Vec::new(); // (s, y)
    let mut loss_history = vec![f];

    let grad_inf = |g: &Array1<f64>| g.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    for _ in 0..config.max_iter {
        if grad_inf(&g) <= config.tol * f.abs().max(1.0) {
            break;
        }
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y) in history.iter().rev() {
            let rho = 1.0 / y.dot(s);
            let alpha = rho * s.dot(&q);
            q = q - y * alpha;
            alphas.push((alpha, rho));
        }
        if let Some((s, y)) = history.last() {
            q *= s.dot(y) / y.dot(y);
        }
        for ((s, y), (alpha, rho)) in history.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * y.dot(&q);
            q = q + s * (alpha - beta);
        }
        let mut direction = -q;
        let mut descent = g.dot(&direction);
        if descent >= 0.0 {
            // Fall back to steepest descent if curvature info is stale.
            direction = -g.clone();
            descent = g.dot(&direction);
        }

        // Armijo backtracking from a unit step.
        let mut step = if history.is_empty() {
            1.0 / grad_inf(&g).max(1.0)
        } else {
            1.0
        };
        let c1 = 1e-4;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &theta + &(&direction * step);
            let (f_new, g_new) = objective_and_grad(&candidate, data, config.c);
            if f_new <= f + c1 * step * descent {
                accepted = Some((candidate, f_new, g_new));
                break;
            }
            step *= 0.5;
        }
        let Some((theta_new, f_new, g_new)) = accepted else {
            break; // step underflow: cannot improve further
        };
        let s = &theta_new - &theta;
        let y = &g_new - &g;
        if y.dot(&s) > 1e-10 {
            if history.len() == config.memory {
                history.remove(0);
            }
            history.push((s, y));
        }
        theta = theta_new;
        f = f_new;
        g = g_new;
        loss_history.push(f);
    }

    let final_grad_norm = grad_inf(&g);
    if final_grad_norm > config.tol * f.abs().max(1.0) {
        return Err(Error::NonConvergence {
            grad_norm: final_grad_norm,
        });
    }
    Ok(LogregModel {
        weights: theta.slice(ndarray::s![..p]).to_vec(),
        bias: theta[p],
        config: config.clone(),
        loss_history,
        final_grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::testutil::{gaussian_clusters, split_rows};
    use crate::eval::metrics::auroc;
    use ndarray::Array2;

    #[test]
    fn separable_clusters_reach_high_auroc() {
        let (x_all, y_all) = gaussian_clusters(400, 8, 3.0, 0.5, 7);
        let (x, y, xt, yt) = split_rows(&x_all, &y_all, 200);
        let data = LabeledMatrix::new(x, y).unwrap();
        let model = train_logreg(&data, &LogregConfig::default()).unwrap();
        let scores = model.scores(&xt);
        assert!(auroc(&scores, &yt).unwrap() >= 0.99);
    }

    #[test]
    fn zero_features_give_constant_scores() {
        let x = Array2::zeros((10, 4));
        let y = vec![true, false, true, false, true, false, true, false, true, false];
        let data = LabeledMatrix::new(x.clone(), y).unwrap();
        let model = train_logreg(&data, &LogregConfig::default()).unwrap();
        let scores = model.scores(&x);
        assert!(scores.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn doubling_c_halves_the_regularization_term() {
        let (x, y) = gaussian_clusters(40, 4, 1.0, 0.5, 9);
        let data = LabeledMatrix::new(x, y).unwrap();
        let w = vec![0.3, -0.2, 0.9, 0.1];
        let b = 0.05;
        let f1 = logreg_objective(&w, b, &data, 1.0);
        let f2 = logreg_objective(&w, b, &data, 2.0);
        let reg1 = w.iter().map(|v| v * v).sum::<f64>() / 2.0;
        assert!((f1 - f2 - reg1 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn loss_history_is_monotone() {
        let (x, y) = gaussian_clusters(120, 6, 1.5, 0.4, 10);
        let data = LabeledMatrix::new(x, y).unwrap();
        let model = train_logreg(&data, &LogregConfig::default()).unwrap();
        for pair in model.loss_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-8, "{pair:?}");
        }
    }

    #[test]
    fn weighting_lifts_minority_recall() {
        // 1:9 imbalance with overlap; average recall over 10 seeds.
        let mut with_w = 0.0;
        let mut without_w = 0.0;
        for seed in 0..10 {
            let (x_all, y_all) = gaussian_clusters(600, 6, 1.0, 0.1, 100 + seed);
            let (x, y, xt, yt) = split_rows(&x_all, &y_all, 300);
            let weighted = LabeledMatrix::new(x.clone(), y.clone()).unwrap();
            let flat = LabeledMatrix::with_weights(x, y, [1.0, 1.0]).unwrap();
            let mw = train_logreg(&weighted, &LogregConfig::default()).unwrap();
            let mf = train_logreg(&flat, &LogregConfig::default()).unwrap();
            let recall = |scores: &[f64]| {
                let tp = scores
                    .iter()
                    .zip(&yt)
                    .filter(|&(&s, &l)| l && s >= 0.5)
                    .count();
                let pos = yt.iter().filter(|&&l| l).count();
                tp as f64 / pos as f64
            };
            with_w += recall(&mw.scores(&xt));
            without_w += recall(&mf.scores(&xt));
        }
        assert!(
            with_w >= without_w,
            "weighted recall {with_w} < unweighted {without_w}"
        );
    }

    #[test]
    fn scores_are_deterministic_and_serializable() {
        let (x, y) = gaussian_clusters(60, 5, 2.0, 0.5, 11);
        let data = LabeledMatrix::new(x.clone(), y).unwrap();
        let model = train_logreg(&data, &LogregConfig::default()).unwrap();
        let s1 = model.scores(&x);
        let s2 = model.scores(&x);
        assert_eq!(s1, s2);
        let json = serde_json::to_string(&model).unwrap();
        let reloaded: LogregModel = serde_json::from_str(&json).unwrap();
        assert_eq!(reloaded.scores(&x), s1);
    }
}
