//! Random forest: bootstrap-sampled decision trees with class-weighted Gini
//! impurity. Defaults follow the conventional setup for this family: 200
//! trees, √p candidate features per split, minimum leaf size 1. The score
//! is the mean over trees of the leaf attack-fraction.

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LabeledMatrix;
use crate::error::Result;
use crate::rng::substream;

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    /// `max(1, floor(√p))` features sampled per node (the default).
    Sqrt,
    /// Every feature; split choice then commutes with column permutation.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_features: FeatureSubsample,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            min_leaf: 1,
            max_features: FeatureSubsample::Sqrt,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        attack_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { attack_fraction } => return *attack_fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub feature_dim: usize,
    pub config: ForestConfig,
    trees: Vec<Tree>,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn scores(&self, x: &Array2<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
                    / self.trees.len() as f64
            })
            .collect()
    }
}

struct TreeBuilder<'a> {
    data: &'a LabeledMatrix,
    nodes: Vec<Node>,
    n_candidates: usize,
    min_leaf: usize,
    all_features: bool,
}

impl<'a> TreeBuilder<'a> {
    /// Weighted Gini impurity times total weight: `W · (1 − Σ (W_c/W)²)`.
    fn weighted_gini(w_benign: f64, w_attack: f64) -> f64 {
        let total = w_benign + w_attack;
        if total <= 0.0 {
            return 0.0;
        }
        total * (1.0 - (w_benign / total).powi(2) - (w_attack / total).powi(2))
    }

    fn grow(&mut self, samples: &mut Vec<usize>, rng: &mut rand_chacha::ChaCha8Rng) -> usize {
        let (mut w_benign, mut w_attack) = (0.0, 0.0);
        let mut attacks = 0usize;
        for &i in samples.iter() {
            if self.data.y[i] {
                w_attack += self.data.sample_weight(i);
                attacks += 1;
            } else {
                w_benign += self.data.sample_weight(i);
            }
        }
        let make_leaf = |nodes: &mut Vec<Node>| {
            nodes.push(Node::Leaf {
                attack_fraction: attacks as f64 / samples.len() as f64,
            });
            nodes.len() - 1
        };
        if attacks == 0 || attacks == samples.len() || samples.len() < 2 * self.min_leaf.max(1) {
            return make_leaf(&mut self.nodes);
        }

        // Walk a shuffled feature order; features that are constant on this
        // node's samples do not count against the candidate budget.
        let p = self.data.dim();
        let mut order: Vec<usize> = (0..p).collect();
        if !self.all_features {
            order.shuffle(rng);
        }
        let budget = if self.all_features { p } else { self.n_candidates };

        let parent_impurity = Self::weighted_gini(w_benign, w_attack);
        let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
        let mut examined = 0usize;
        let mut sortable: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
        for &feature in &order {
            if examined >= budget {
                break;
            }
            sortable.clear();
            sortable.extend(samples.iter().map(|&i| (self.data.x[[i, feature]], i)));
            sortable.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            if sortable[0].0 == sortable[sortable.len() - 1].0 {
                continue; // constant on this node
            }
            examined += 1;
            let (mut lb, mut la) = (0.0f64, 0.0f64);
            let (mut count_left, total) = (0usize, samples.len());
            for k in 0..total - 1 {
                let (value, i) = sortable[k];
                let wi = self.data.sample_weight(i);
                if self.data.y[i] {
                    la += wi;
                } else {
                    lb += wi;
                }
                count_left += 1;
                let next_value = sortable[k + 1].0;
                if next_value == value {
                    continue;
                }
                if count_left < self.min_leaf || total - count_left < self.min_leaf {
                    continue;
                }
                let impurity = Self::weighted_gini(lb, la)
                    + Self::weighted_gini(w_benign - lb, w_attack - la);
                if impurity + 1e-12 < parent_impurity
                    && best.map_or(true, |(b, _, _)| impurity < b)
                {
                    best = Some((impurity, feature, (value + next_value) / 2.0));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            return make_leaf(&mut self.nodes);
        };
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = (Vec::new(), Vec::new());
        for &i in samples.iter() {
            if self.data.x[[i, feature]] <= threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        // Reserve this node's slot before growing children.
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { attack_fraction: 0.0 });
        let left_id = self.grow(&mut left, rng);
        let right_id = self.grow(&mut right, rng);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left: left_id,
            right: right_id,
        };
        slot
    }
}

/// Fit `config.n_trees` trees on bootstrap samples; deterministic given the
/// seed (tree `i` draws from its own substream).
pub fn train_random_forest(data: &LabeledMatrix, config: &ForestConfig) -> Result<ForestModel> {
    let p = data.dim();
    let m = data.y.len();
    let n_candidates = ((p as f64).sqrt().floor() as usize).max(1);
    let mut trees = Vec::with_capacity(config.n_trees);
    for t in 0..config.n_trees {
        let mut rng = substream(config.seed, &format!("tree-{t}"));
        let mut samples: Vec<usize> = (0..m).map(|_| rng.gen_range(0..m)).collect();
        let mut builder = TreeBuilder {
            data,
            nodes: Vec::new(),
            n_candidates,
            min_leaf: config.min_leaf.max(1),
            all_features: config.max_features == FeatureSubsample::All,
        };
        builder.grow(&mut samples, &mut rng);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    Ok(ForestModel {
        feature_dim: p,
        config: config.clone(),
        trees,
    })
}
