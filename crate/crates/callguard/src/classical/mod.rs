//! Classical baselines over pooled session features: logistic regression,
//! linear SVM, and random forest, all with inverse-frequency class weights
//! and fixed hyperparameters (no tuning).

mod forest;
mod logreg;
mod svm;

pub use forest::{train_random_forest, FeatureSubsample, ForestConfig, ForestModel};
pub use logreg::{logreg_objective, train_logreg, LogregConfig, LogregModel};
pub use svm::{svm_objective, train_linear_svm, SvmConfig, SvmModel};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inverse-frequency class weights: `w_c = m / (2 · count_c)`, indexed
/// `[benign, attack]`.
pub fn class_weights(y: &[bool]) -> Result<[f64; 2]> {
    let m = y.len();
    let attacks = y.iter().filter(|&&l| l).count();
    let benign = m - attacks;
    if attacks == 0 || benign == 0 {
        return Err(Error::Validation(
            "class_weights needs both classes present".into(),
        ));
    }
    Ok([
        m as f64 / (2.0 * benign as f64),
        m as f64 / (2.0 * attacks as f64),
    ])
}

/// A design matrix with binary labels (true = attack) and per-class weights.
#[derive(Debug, Clone)]
pub struct LabeledMatrix {
    pub x: Array2<f64>,
    pub y: Vec<bool>,
    /// `[benign_weight, attack_weight]`.
    pub weights: [f64; 2],
}

impl LabeledMatrix {
    /// Build with balanced (inverse-frequency) weights.
    pub fn new(x: Array2<f64>, y: Vec<bool>) -> Result<Self> {
        let weights = class_weights(&y)?;
        Self::with_weights(x, y, weights)
    }

    /// Build with explicit per-class weights (e.g. `[1.0, 1.0]` to disable
    /// weighting).
    pub fn with_weights(x: Array2<f64>, y: Vec<bool>, weights: [f64; 2]) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Validation(format!(
                "{} rows vs {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::Validation("training needs at least 2 samples".into()));
        }
        if weights[0] <= 0.0 || weights[1] <= 0.0 {
            return Err(Error::Validation("class weights must be positive".into()));
        }
        Ok(LabeledMatrix { x, y, weights })
    }

    pub fn sample_weight(&self, i: usize) -> f64 {
        if self.y[i] {
            self.weights[1]
        } else {
            self.weights[0]
        }
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// A trained classical classifier; scores are higher for more attack-like
/// inputs (probability for logreg, raw decision function for the SVM, mean
/// leaf attack-fraction for the forest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClassicalModel {
    Logreg(LogregModel),
    LinearSvm(SvmModel),
    RandomForest(ForestModel),
}

impl ClassicalModel {
    pub fn kind(&self) -> &'static str {
        match self {
            ClassicalModel::Logreg(_) => "logreg",
            ClassicalModel::LinearSvm(_) => "linear_svm",
            ClassicalModel::RandomForest(_) => "random_forest",
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            ClassicalModel::Logreg(m) => m.weights.len(),
            ClassicalModel::LinearSvm(m) => m.weights.len(),
            ClassicalModel::RandomForest(m) => m.feature_dim,
        }
    }

    /// Deterministic, finite scores for each row of `x`.
    pub fn predict_score(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        if x.ncols() != self.feature_dim() {
            return Err(Error::Validation(format!(
                "input dim {} does not match model dim {}",
                x.ncols(),
                self.feature_dim()
            )));
        }
        let scores = match self {
            ClassicalModel::Logreg(m) => m.scores(x),
            ClassicalModel::LinearSvm(m) => m.scores(x),
            ClassicalModel::RandomForest(m) => m.scores(x),
        };
        debug_assert!(scores.iter().all(|s| s.is_finite()));
        Ok(scores)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
