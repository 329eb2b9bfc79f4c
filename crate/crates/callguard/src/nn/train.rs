//! Supervised training loop shared by the MLP and GraphSAGE paths: Adam
//! with weight decay, global-norm gradient clipping, class-weighted
//! cross-entropy, and early stopping on validation AUROC evaluated every
//! `eval_every` epochs with the best checkpoint retained.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layers::{
    attack_probabilities, clip_global_norm, slot_sizes_of, weighted_cross_entropy, Adam,
    GraphBatch,
};
use super::model::{MlpModel, NeuralModel, Pass, SageModel};
use crate::classical::class_weights;
use crate::error::{Error, Result};
use crate::eval::metrics::auroc;
use crate::features::pooled_matrix;
use crate::graph::SessionGraph;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Mlp,
    Sage,
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Architecture::Mlp),
            "sage" => Ok(Architecture::Sage),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Optimization hyperparameters; defaults follow the shared setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub max_epochs: usize,
    /// Validation AUROC is evaluated every this many epochs.
    pub eval_every: usize,
    /// Stop after this many consecutive non-improving evaluations.
    pub patience: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 128,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 1e-4,
            grad_clip: 1.0,
            max_epochs: 200,
            eval_every: 10,
            patience: 5,
            dropout: 0.3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0
            || self.batch_size == 0
            || self.eval_every == 0
            || self.patience == 0
            || self.lr <= 0.0
            || self.grad_clip <= 0.0
            || !(0.0..1.0).contains(&self.dropout)
        {
            return Err(Error::Config("train config values must be positive".into()));
        }
        Ok(())
    }
}

/// A trained network plus training diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedNeural {
    pub model: NeuralModel,
    pub best_val_auroc: f64,
    pub epochs_run: usize,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Largest post-clip gradient norm over steps where clipping engaged
    /// (0 when it never did).
    pub max_postclip_norm: f64,
}

fn check_partitions(train: &[&SessionGraph], val: &[&SessionGraph]) -> Result<()> {
    let has = |set: &[&SessionGraph], attack: bool| set.iter().any(|g| g.is_attack() == attack);
    if train.is_empty() || !has(train, true) || !has(train, false) {
        return Err(Error::Validation(
            "training partition needs both classes present".into(),
        ));
    }
    if val.is_empty() || !has(val, true) || !has(val, false) {
        return Err(Error::Config(
            "validation partition is single-class; validation AUROC is undefined".into(),
        ));
    }
    Ok(())
}

/// Train the chosen architecture on featurized graphs. The MLP path pools
/// raw node features per graph; the SAGE path batches graphs as one
/// block-diagonal disjoint union. Deterministic given config and seed.
pub fn train_supervised(
    train: &[&SessionGraph],
    val: &[&SessionGraph],
    config: &TrainConfig,
    arch: Architecture,
) -> Result<TrainedNeural> {
    config.validate()?;
    check_partitions(train, val)?;
    let labels: Vec<bool> = train.iter().map(|g| g.is_attack()).collect();
    let weights = class_weights(&labels)?;
    match arch {
        Architecture::Sage => train_sage(train, val, config, weights, None),
        Architecture::Mlp => train_mlp(train, val, config, weights),
    }
}

/// SAGE training; `warm_encoder` starts from pre-trained encoder weights
/// (fresh head) and `lr_scales` allows per-slot learning-rate scaling.
pub(crate) fn train_sage(
    train: &[&SessionGraph],
    val: &[&SessionGraph],
    config: &TrainConfig,
    weights: [f64; 2],
    warm: Option<(super::model::SageEncoder, Option<Vec<f64>>)>,
) -> Result<TrainedNeural> {
    let input_dim = train[0].node_features.ncols();
    let mut init_rng = substream(config.seed, "init");
    let (mut model, lr_scales) = match warm {
        Some((encoder, scales)) => {
            if encoder.input_dim != input_dim {
                return Err(Error::Config(format!(
                    "pre-trained encoder input dim {} does not match features {}",
                    encoder.input_dim, input_dim
                )));
            }
            let head =
                super::model::Head::new(encoder.embedding_dim(), encoder.hidden, &mut init_rng);
            (SageModel { encoder, head }, scales)
        }
        None => (
            SageModel::new(input_dim, config.hidden_dim, &mut init_rng),
            None,
        ),
    };

    let val_labels: Vec<bool> = val.iter().map(|g| g.is_attack()).collect();
    let score_val = |m: &SageModel| -> Result<f64> {
        let scores = sage_scores(m, val)?;
        auroc(&scores, &val_labels)
    };

    let sizes = slot_sizes_of(&model.param_slices());
    let mut adam = Adam::new(config.lr, config.weight_decay, &sizes);
    let mut shuffle_rng = substream(config.seed, "shuffle");
    let mut dropout_rng = substream(config.seed, "dropout");

    let mut best_auroc = score_val(&model)?;
    let mut best_model = model.clone();
    let mut strikes = 0;
    let mut epoch_losses = Vec::new();
    let mut max_postclip: f64 = 0.0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs_run = 0;

    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let graphs: Vec<&SessionGraph> = chunk.iter().map(|&i| train[i]).collect();
            let batch = GraphBatch::from_graphs(&graphs)?;
            let mut pass = Pass::Train {
                rng: &mut dropout_rng,
                dropout: config.dropout,
            };
            let (enc_trace, head_trace) = model.forward(&batch, &mut pass);
            let (loss, grad_logits) =
                weighted_cross_entropy(&head_trace.logits, &batch.labels, weights);
            loss_sum += loss * chunk.len() as f64;
            let mut grads = model.zeros_like();
            model.backward(&batch, &enc_trace, &head_trace, &grad_logits, &mut grads);
            max_postclip = apply_step_sage(
                &mut model,
                &mut grads,
                &mut adam,
                config.grad_clip,
                lr_scales.as_deref(),
                max_postclip,
            );
        }
        epoch_losses.push(loss_sum / train.len() as f64);

        if epoch % config.eval_every == 0 {
            let auc = score_val(&model)?;
            if auc > best_auroc {
                best_auroc = auc;
                best_model = model.clone();
                strikes = 0;
            } else {
                strikes += 1;
                if strikes >= config.patience {
                    break;
                }
            }
        }
    }

    Ok(TrainedNeural {
        model: NeuralModel::Sage(best_model),
        best_val_auroc: best_auroc,
        epochs_run,
        epoch_losses,
        max_postclip_norm: max_postclip,
    })
}

fn apply_step_sage(
    model: &mut SageModel,
    grads: &mut SageModel,
    adam: &mut Adam,
    clip: f64,
    lr_scales: Option<&[f64]>,
    max_postclip: f64,
) -> f64 {
    let mut gslices = grads.param_slices_mut();
    let pre = clip_global_norm(&mut gslices, clip);
    drop(gslices);
    let mut tracked = max_postclip;
    if pre > clip {
        let post: f64 = grads
            .param_slices()
            .iter()
            .map(|s| s.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        tracked = tracked.max(post);
    }
    let gslices = grads.param_slices();
    let mut pslices = model.param_slices_mut();
    adam.step(&mut pslices, &gslices, lr_scales);
    tracked
}

fn train_mlp(
    train: &[&SessionGraph],
    val: &[&SessionGraph],
    config: &TrainConfig,
    weights: [f64; 2],
) -> Result<TrainedNeural> {
    let owned_train: Vec<SessionGraph> = train.iter().map(|&g| g.clone()).collect();
    let owned_val: Vec<SessionGraph> = val.iter().map(|&g| g.clone()).collect();
    let x_train = pooled_matrix(&owned_train)?;
    let y_train: Vec<bool> = train.iter().map(|g| g.is_attack()).collect();
    let x_val = pooled_matrix(&owned_val)?;
    let y_val: Vec<bool> = val.iter().map(|g| g.is_attack()).collect();
    train_mlp_on_rows(&x_train, &y_train, &x_val, &y_val, config, weights)
}

/// MLP training directly on pooled rows.
pub fn train_mlp_on_rows(
    x_train: &Array2<f64>,
    y_train: &[bool],
    x_val: &Array2<f64>,
    y_val: &[bool],
    config: &TrainConfig,
    weights: [f64; 2],
) -> Result<TrainedNeural> {
    config.validate()?;
    let mut init_rng = substream(config.seed, "init");
    let mut model = MlpModel::new(x_train.ncols(), config.hidden_dim, &mut init_rng);
    let sizes = slot_sizes_of(&model.param_slices());
    let mut adam = Adam::new(config.lr, config.weight_decay, &sizes);
    let mut shuffle_rng = substream(config.seed, "shuffle");
    let mut dropout_rng = substream(config.seed, "dropout");

    let score_val = |m: &MlpModel| -> Result<f64> {
        let logits = m.forward(x_val.to_owned(), &mut Pass::Eval).logits;
        auroc(&attack_probabilities(&logits), y_val)
    };

    let mut best_auroc = score_val(&model)?;
    let mut best_model = model.clone();
    let mut strikes = 0;
    let mut epoch_losses = Vec::new();
    let mut max_postclip: f64 = 0.0;
    let mut order: Vec<usize> = (0..y_train.len()).collect();
    let mut epochs_run = 0;

    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut rows = Array2::zeros((chunk.len(), x_train.ncols()));
            let mut labels = Vec::with_capacity(chunk.len());
            for (k, &i) in chunk.iter().enumerate() {
                rows.row_mut(k).assign(&x_train.row(i));
                labels.push(y_train[i]);
            }
            let mut pass = Pass::Train {
                rng: &mut dropout_rng,
                dropout: config.dropout,
            };
            let trace = model.forward(rows, &mut pass);
            let (loss, grad_logits) = weighted_cross_entropy(&trace.logits, &labels, weights);
            loss_sum += loss * chunk.len() as f64;
            let mut grads = model.zeros_like();
            model.backward(&trace, &grad_logits, &mut grads);

            let mut gslices = grads.param_slices_mut();
            let pre = clip_global_norm(&mut gslices, config.grad_clip);
            drop(gslices);
            if pre > config.grad_clip {
                let post: f64 = grads
                    .param_slices()
                    .iter()
                    .map(|s| s.iter().map(|v| v * v).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                max_postclip = max_postclip.max(post);
            }
            let gslices = grads.param_slices();
            let mut pslices = model.param_slices_mut();
            adam.step(&mut pslices, &gslices, None);
        }
        epoch_losses.push(loss_sum / y_train.len() as f64);

        if epoch % config.eval_every == 0 {
            let auc = score_val(&model)?;
            if auc > best_auroc {
                best_auroc = auc;
                best_model = model.clone();
                strikes = 0;
            } else {
                strikes += 1;
                if strikes >= config.patience {
                    break;
                }
            }
        }
    }

    Ok(TrainedNeural {
        model: NeuralModel::Mlp(best_model),
        best_val_auroc: best_auroc,
        epochs_run,
        epoch_losses,
        max_postclip_norm: max_postclip,
    })
}

/// Attack probability per graph in evaluation mode.
pub fn score_graphs(model: &NeuralModel, graphs: &[&SessionGraph]) -> Result<Vec<f64>> {
    match model {
        NeuralModel::Sage(m) => sage_scores(m, graphs),
        NeuralModel::Mlp(m) => {
            let owned: Vec<SessionGraph> = graphs.iter().map(|&g| g.clone()).collect();
            let rows = pooled_matrix(&owned)?;
            let logits = m.forward(rows, &mut Pass::Eval).logits;
            Ok(attack_probabilities(&logits))
        }
    }
}

fn sage_scores(model: &SageModel, graphs: &[&SessionGraph]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(graphs.len());
    for chunk in graphs.chunks(256) {
        let batch = GraphBatch::from_graphs(chunk)?;
        let (_, head) = model.forward(&batch, &mut Pass::Eval);
        out.extend(attack_probabilities(&head.logits));
    }
    Ok(out)
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Max relative error between analytic gradients and central finite
/// differences (step 1e-5), dropout disabled, for the SAGE model.
pub fn gradient_check_sage(
    model: &mut SageModel,
    graphs: &[&SessionGraph],
    weights: [f64; 2],
) -> Result<f64> {
    let batch = GraphBatch::from_graphs(graphs)?;
    let loss_of = |m: &SageModel| -> f64 {
        let (_, head) = m.forward(&batch, &mut Pass::Eval);
        weighted_cross_entropy(&head.logits, &batch.labels, weights).0
    };
    let mut grads = model.zeros_like();
    {
        let (enc, head) = model.forward(&batch, &mut Pass::Eval);
        let (_, grad_logits) = weighted_cross_entropy(&head.logits, &batch.labels, weights);
        model.backward(&batch, &enc, &head, &grad_logits, &mut grads);
    }
    let analytic: Vec<Vec<f64>> = grads.param_slices().iter().map(|s| s.to_vec()).collect();
    let h = 1e-5;
    let mut max_err: f64 = 0.0;
    let n_slots = analytic.len();
    for slot in 0..n_slots {
        for k in 0..analytic[slot].len() {
            let original = model.param_slices_mut()[slot][k];
            model.param_slices_mut()[slot][k] = original + h;
            let up = loss_of(model);
            model.param_slices_mut()[slot][k] = original - h;
            let down = loss_of(model);
            model.param_slices_mut()[slot][k] = original;
            let numeric = (up - down) / (2.0 * h);
            max_err = max_err.max(relative_error(analytic[slot][k], numeric));
        }
    }
    Ok(max_err)
}

/// Max relative error of the MLP gradients on a small pooled batch.
pub fn gradient_check_mlp(
    model: &mut MlpModel,
    rows: &Array2<f64>,
    labels: &[bool],
    weights: [f64; 2],
) -> Result<f64> {
    let loss_of = |m: &MlpModel| -> f64 {
        let trace = m.forward(rows.to_owned(), &mut Pass::Eval);
        weighted_cross_entropy(&trace.logits, labels, weights).0
    };
    let mut grads = model.zeros_like();
    {
        let trace = model.forward(rows.to_owned(), &mut Pass::Eval);
        let (_, grad_logits) = weighted_cross_entropy(&trace.logits, labels, weights);
        model.backward(&trace, &grad_logits, &mut grads);
    }
    let analytic: Vec<Vec<f64>> = grads.param_slices().iter().map(|s| s.to_vec()).collect();
    let h = 1e-5;
    let mut max_err: f64 = 0.0;
    for slot in 0..analytic.len() {
        for k in 0..analytic[slot].len() {
            let original = model.param_slices_mut()[slot][k];
            model.param_slices_mut()[slot][k] = original + h;
            let up = loss_of(model);
            model.param_slices_mut()[slot][k] = original - h;
            let down = loss_of(model);
            model.param_slices_mut()[slot][k] = original;
            let numeric = (up - down) / (2.0 * h);
            max_err = max_err.max(relative_error(analytic[slot][k], numeric));
        }
    }
    Ok(max_err)
}

/// Global analytic gradient norm of the MLP loss on a batch.
pub fn mlp_gradient_norm(
    model: &MlpModel,
    rows: &Array2<f64>,
    labels: &[bool],
    weights: [f64; 2],
) -> f64 {
    let mut grads = model.zeros_like();
    let trace = model.forward(rows.to_owned(), &mut Pass::Eval);
    let (_, grad_logits) = weighted_cross_entropy(&trace.logits, labels, weights);
    model.backward(&trace, &grad_logits, &mut grads);
    grads
        .param_slices()
        .iter()
        .map(|s| s.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}
