//! Label-efficiency sweep: supervised training from scratch versus
//! contrastive pre-training plus fine-tuning at varying label fractions,
//! under k-fold cross-validation (task-disjoint folds when every session
//! has a task id, label-stratified otherwise).
//!
//! Within each fold, 1/8 of the training part is carved out as a validation
//! set for early stopping (stratified by label), the encoder is pre-trained
//! once per fold on all benign training graphs, and the labeled subset per
//! fraction is drawn by a seeded stream shared across methods so both see
//! identical labels.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::eval::metrics::{auroc, mean_sd};
use crate::eval::split::{kfold_split, Protocol};
use crate::features::{featurize_sessions, FeatureConfig, FeatureMode};
use crate::graph::{GraphConfig, SessionGraph};
use crate::nn::train::train_sage;
use crate::nn::TrainConfig;
use crate::rng::substream;
use crate::session::{Session, ToolVocab};
use crate::ssl::{finetune, pretrain_encoder, AugmentConfig, SslConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    Supervised,
    SslFinetune,
}

impl SweepMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepMethod::Supervised => "supervised",
            SweepMethod::SslFinetune => "ssl_ft",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Label fractions in (0, 1].
    pub fractions: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub mode: FeatureMode,
    pub embedding_dim: usize,
    pub train: TrainConfig,
    pub ssl: SslConfig,
    pub augment: AugmentConfig,
    pub graph: GraphConfig,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            fractions: vec![0.01, 0.05, 0.10, 0.25, 0.50, 1.00],
            folds: 5,
            seed: 7,
            mode: FeatureMode::Content,
            embedding_dim: crate::embed::DEFAULT_DIM,
            train: TrainConfig::default(),
            ssl: SslConfig::default(),
            augment: AugmentConfig::default(),
            graph: GraphConfig::default(),
        }
    }
}

/// One (fraction, method) cell of the sweep table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub fraction: f64,
    pub method: String,
    /// Test AUROC per fold; `None` where the fold was flagged.
    pub fold_aurocs: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub flags: Vec<String>,
}

fn carve_validation<'a>(
    pool: &[&'a SessionGraph],
    seed: u64,
    fold: usize,
) -> (Vec<&'a SessionGraph>, Vec<&'a SessionGraph>) {
    let mut rng = substream(seed, &format!("val-carve-{fold}"));
    let mut train = Vec::new();
    let mut val = Vec::new();
    for attack in [false, true] {
        let mut side: Vec<&SessionGraph> = pool
            .iter()
            .filter(|g| g.is_attack() == attack)
            .copied()
            .collect();
        side.shuffle(&mut rng);
        let n_val = side.len() / 8;
        for (i, g) in side.into_iter().enumerate() {
            if i < n_val {
                val.push(g);
            } else {
                train.push(g);
            }
        }
    }
    (train, val)
}

/// Run the sweep. Returns one cell per (fraction, method), fractions in the
/// given order, each aggregated over folds as mean ± sd.
pub fn label_efficiency_sweep(
    sessions: &[Session],
    provider: Option<&EmbeddingProvider>,
    opts: &SweepOptions,
    methods: &[SweepMethod],
) -> Result<Vec<SweepCell>> {
    for &f in &opts.fractions {
        if !(0.0 < f && f <= 1.0) {
            return Err(Error::Config(format!("label fraction {f} outside (0,1]")));
        }
    }
    let protocol = if sessions.iter().all(|s| s.task_id.is_some()) {
        Protocol::KfoldTask
    } else {
        Protocol::KfoldLabel
    };
    let folds = kfold_split(sessions, opts.folds, protocol, opts.seed)?;

    // Per (method, fraction) accumulation across folds.
    let mut cells: Vec<SweepCell> = Vec::new();
    for &method in methods {
        for &fraction in &opts.fractions {
            cells.push(SweepCell {
                fraction,
                method: method.as_str().to_string(),
                fold_aurocs: Vec::new(),
                mean: None,
                sd: None,
                flags: Vec::new(),
            });
        }
    }
    let cell_index = |method: SweepMethod, fraction: f64, opts: &SweepOptions| -> usize {
        let mi = methods.iter().position(|&m| m == method).expect("known");
        let fi = opts
            .fractions
            .iter()
            .position(|&f| f == fraction)
            .expect("known");
        mi * opts.fractions.len() + fi
    };

    for (fold_idx, test_ids) in folds.folds.iter().enumerate() {
        let train_pool_sessions: Vec<&Session> = sessions
            .iter()
            .filter(|s| !test_ids.contains(&s.session_id))
            .collect();
        // Vocabulary from this fold's training part only.
        let vocab = ToolVocab::build_iter(train_pool_sessions.iter().copied())?;
        let mut feature = FeatureConfig::new(opts.mode, vocab);
        feature.embedding_dim = opts.embedding_dim;
        let graphs = featurize_sessions(sessions, &feature, provider, &opts.graph)?;

        let test: Vec<&SessionGraph> = graphs
            .iter()
            .filter(|g| test_ids.contains(&g.session_id))
            .collect();
        let pool: Vec<&SessionGraph> = graphs
            .iter()
            .filter(|g| !test_ids.contains(&g.session_id))
            .collect();
        let (train_part, val_part) = carve_validation(&pool, opts.seed, fold_idx);

        let test_labels: Vec<bool> = test.iter().map(|g| g.is_attack()).collect();
        let test_single_class =
            !test_labels.contains(&true) || !test_labels.contains(&false);
        let val_single_class = {
            let v: Vec<bool> = val_part.iter().map(|g| g.is_attack()).collect();
            !v.contains(&true) || !v.contains(&false)
        };

        // Pre-train once per fold on all benign training graphs; every
        // fraction reuses the same encoder.
        let pretrained = if methods.contains(&SweepMethod::SslFinetune) && !val_single_class {
            let benign: Vec<&SessionGraph> = train_part
                .iter()
                .filter(|g| !g.is_attack())
                .copied()
                .collect();
            if benign.is_empty() {
                None
            } else {
                let cfg = TrainConfig {
                    seed: opts.seed ^ (fold_idx as u64).wrapping_mul(0x9e37_79b9),
                    ..opts.train.clone()
                };
                Some(pretrain_encoder(&benign, &opts.ssl, &opts.augment, &cfg)?)
            }
        } else {
            None
        };

        for &fraction in &opts.fractions {
            // Shared subsample across methods.
            let mut rng = substream(
                opts.seed,
                &format!("subsample-{fold_idx}-{fraction:.4}"),
            );
            let mut indices: Vec<usize> = (0..train_part.len()).collect();
            indices.shuffle(&mut rng);
            let n_labeled = ((fraction * train_part.len() as f64).round() as usize)
                .clamp(1, train_part.len());
            let labeled: Vec<&SessionGraph> = indices[..n_labeled]
                .iter()
                .map(|&i| train_part[i])
                .collect();
            let labels: Vec<bool> = labeled.iter().map(|g| g.is_attack()).collect();
            let single_class_train =
                !labels.contains(&true) || !labels.contains(&false);

            for &method in methods {
                let idx = cell_index(method, fraction, opts);
                let cell = &mut cells[idx];
                if test_single_class {
                    cell.fold_aurocs.push(None);
                    cell.flags.push(format!("fold {fold_idx}: single-class test"));
                    continue;
                }
                if val_single_class {
                    cell.fold_aurocs.push(None);
                    cell.flags
                        .push(format!("fold {fold_idx}: single-class validation"));
                    continue;
                }
                if single_class_train {
                    cell.fold_aurocs.push(None);
                    cell.flags.push(format!(
                        "fold {fold_idx}: single-class training set at fraction {fraction}"
                    ));
                    continue;
                }
                let cfg = TrainConfig {
                    seed: opts.seed ^ (fold_idx as u64).wrapping_mul(0x9e37_79b9),
                    ..opts.train.clone()
                };
                let weights = crate::classical::class_weights(&labels)?;
                let trained = match method {
                    SweepMethod::Supervised => {
                        train_sage(&labeled, &val_part, &cfg, weights, None)?
                    }
                    SweepMethod::SslFinetune => {
                        let Some(pre) = &pretrained else {
                            cell.fold_aurocs.push(None);
                            cell.flags
                                .push(format!("fold {fold_idx}: no benign graphs to pre-train on"));
                            continue;
                        };
                        finetune(pre.encoder.clone(), &labeled, &val_part, &opts.ssl, &cfg)?
                    }
                };
                let scores = crate::nn::score_graphs(&trained.model, &test)?;
                cell.fold_aurocs.push(Some(auroc(&scores, &test_labels)?));
            }
        }
    }

    for cell in &mut cells {
        let valid: Vec<f64> = cell.fold_aurocs.iter().flatten().copied().collect();
        if !valid.is_empty() {
            let (mean, sd) = mean_sd(&valid);
            cell.mean = Some(mean);
            cell.sd = Some(sd);
        }
    }
    Ok(cells)
}
