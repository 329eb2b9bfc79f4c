//! Linear SVM: class-weighted hinge loss plus `α‖w‖²`, trained by
//! epoch-based SGD with a decaying step size.
//!
//! The per-sample step is `η_t = η₀ / (1 + η₀ · α · t)` with `t` the global
//! sample counter. After each epoch the full objective is evaluated and the
//! best iterate is retained; an epoch that worsens the objective is rolled
//! back and the step scale halved before the next pass, so the retained
//! loss sequence is monotonically non-increasing. Scores are the raw
//! decision-function value (signed distance surrogate), not a calibrated
//! probability.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LabeledMatrix;
use crate::error::Result;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// L2 regularization strength.
    pub alpha: f64,
    pub epochs: usize,
    pub eta0: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            alpha: 1e-4,
            epochs: 30,
            eta0: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: SvmConfig,
    /// Objective of the retained parameters after each epoch.
    pub loss_history: Vec<f64>,
}

impl SvmModel {
    /// Raw decision-function value per row.
    pub fn scores(&self, x: &Array2<f64>) -> Vec<f64> {
        let w = Array1::from_vec(self.weights.clone());
        x.dot(&w).iter().map(|z| z + self.bias).collect()
    }
}

/// Mean class-weighted hinge loss plus `α‖w‖²`.
pub fn svm_objective(w: &[f64], b: f64, data: &LabeledMatrix, alpha: f64) -> f64 {
    let wv = Array1::from_vec(w.to_vec());
    let z = data.x.dot(&wv);
    let m = data.y.len() as f64;
    let mut hinge = 0.0;
    for i in 0..data.y.len() {
        let sign = if data.y[i] { 1.0 } else { -1.0 };
        hinge += data.sample_weight(i) * (1.0 - sign * (z[i] + b)).max(0.0);
    }
    hinge / m + alpha * w.iter().map(|v| v * v).sum::<f64>()
}

/// Train by epoch SGD, keeping the best-objective iterate.
pub fn train_linear_svm(data: &LabeledMatrix, config: &SvmConfig) -> Result<SvmModel> {
    let p = data.dim();
    let mut w = Array1::<f64>::zeros(p);
    let mut b = 0.0;
    let mut best_w = w.clone();
    let mut best_b = b;
    let mut best_f = svm_objective(w.as_slice().unwrap(), b, data, config.alpha);
    let mut loss_history = vec![best_f];

    let mut rng = substream(config.seed, "svm-shuffle");
    let mut order: Vec<usize> = (0..data.y.len()).collect();
    let mut t: u64 = 0;
    let mut scale = 1.0;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = scale * config.eta0 / (1.0 + config.eta0 * config.alpha * t as f64);
            let sign = if data.y[i] { 1.0 } else { -1.0 };
            let row = data.x.row(i);
            let margin = sign * (row.dot(&w) + b);
            // Regularization gradient 2αw applies on every step.
            w *= 1.0 - eta * 2.0 * config.alpha;
            if margin < 1.0 {
                let cw = data.sample_weight(i);
                w.scaled_add(eta * cw * sign, &row);
                b += eta * cw * sign;
            }
        }
        let f = svm_objective(w.as_slice().unwrap(), b, data, config.alpha);
        if f <= best_f {
            best_f = f;
            best_w.assign(&w);
            best_b = b;
        } else {
            // Roll back and take smaller steps from the best iterate.
            w.assign(&best_w);
            b = best_b;
            scale *= 0.5;
        }
        loss_history.push(best_f);
    }

    Ok(SvmModel {
        weights: best_w.to_vec(),
        bias: best_b,
        config: config.clone(),
        loss_history,
    })
}
