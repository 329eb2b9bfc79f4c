//! Contrastive pre-training on benign sessions and supervised fine-tuning.
//!
//! Pre-training generates two augmented views of each graph — per-entry
//! node-feature masking and undirected edge dropping — and pulls the two
//! views' graph embeddings together under the NT-Xent loss while pushing
//! apart everything else in the batch. The loss operates directly on the
//! encoder's dual-readout embedding (no projection head) with cosine
//! similarity. Fine-tuning attaches a fresh classification head, unfreezes
//! the encoder, and trains everything at a reduced learning rate.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeKind, SessionGraph};
use crate::nn::layers::{clip_global_norm, slot_sizes_of, Adam, GraphBatch};
use crate::nn::model::{Pass, SageEncoder};
use crate::nn::train::{train_sage, TrainConfig, TrainedNeural};
use crate::rng::substream;

/// View-generation rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub feature_mask_rate: f64,
    pub edge_drop_rate: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            feature_mask_rate: 0.2,
            edge_drop_rate: 0.2,
        }
    }
}

impl AugmentConfig {
    fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.feature_mask_rate) || !unit(self.edge_drop_rate) {
            return Err(Error::Config("augmentation rates must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// Contrastive-phase hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SslConfig {
    pub temperature: f64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig {
            temperature: 0.5,
            pretrain_epochs: 100,
            finetune_epochs: 50,
            finetune_lr: 1e-4,
        }
    }
}

/// One augmented view: each feature entry independently zeroed with the mask
/// rate; each undirected non-self-loop edge (both directed entries) dropped
/// with the drop rate; self-loops are never dropped, and any node left with
/// degree zero gets a self-loop so the degree invariant holds.
pub fn augment_graph(
    graph: &SessionGraph,
    config: &AugmentConfig,
    rng: &mut ChaCha8Rng,
) -> SessionGraph {
    let mut view = graph.clone();
    if config.feature_mask_rate > 0.0 {
        view.node_features.mapv_inplace(|v| {
            if rng.gen::<f64>() < config.feature_mask_rate {
                0.0
            } else {
                v
            }
        });
    }

    // Group directed entries into undirected pairs; drop pairs together.
    let mut kept: Vec<Edge> = Vec::with_capacity(view.edges.len());
    let mut undirected: Vec<(usize, usize, EdgeKind)> = Vec::new();
    for e in &view.edges {
        if e.kind == EdgeKind::SelfLoop || e.src == e.dst {
            kept.push(*e);
        } else if e.src < e.dst {
            undirected.push((e.src, e.dst, e.kind));
        }
    }
    for (src, dst, kind) in undirected {
        if config.edge_drop_rate > 0.0 && rng.gen::<f64>() < config.edge_drop_rate {
            continue;
        }
        kept.push(Edge::new(src, dst, kind));
        kept.push(Edge::new(dst, src, kind));
    }
    let mut degree = vec![0usize; view.n_nodes];
    for e in &kept {
        degree[e.dst] += 1;
    }
    for (i, &d) in degree.iter().enumerate() {
        if d == 0 {
            kept.push(Edge::new(i, i, EdgeKind::SelfLoop));
        }
    }
    kept.sort_unstable();
    view.edges = kept;
    view
}

/// NT-Xent loss over `2N` view embeddings: for view `a` with partner
/// `p(a)`, `ℓ_a = −log( exp(cos(a,p(a))/τ) / Σ_{c≠a} exp(cos(a,c)/τ) )`;
/// the loss is the mean over all views.
pub fn nt_xent_loss(embeddings: &Array2<f64>, partner: &[usize], tau: f64) -> Result<f64> {
    nt_xent_loss_and_grad(embeddings, partner, tau).map(|(loss, _)| loss)
}

/// Loss plus its gradient with respect to the raw embeddings.
pub fn nt_xent_loss_and_grad(
    embeddings: &Array2<f64>,
    partner: &[usize],
    tau: f64,
) -> Result<(f64, Array2<f64>)> {
    let n_views = embeddings.nrows();
    if n_views < 2 || n_views % 2 != 0 {
        return Err(Error::Validation(format!(
            "nt_xent needs an even number of views >= 2, got {n_views}"
        )));
    }
    if partner.len() != n_views {
        return Err(Error::Validation("partner map length mismatch".into()));
    }
    for (a, &b) in partner.iter().enumerate() {
        if b >= n_views || b == a || partner[b] != a {
            return Err(Error::Validation(format!(
                "invalid positive-pair map at view {a}"
            )));
        }
    }
    if tau <= 0.0 {
        return Err(Error::Config("temperature must be positive".into()));
    }

    // Normalize rows; guard zero norms.
    let mut norms = Array1::zeros(n_views);
    for (i, row) in embeddings.rows().into_iter().enumerate() {
        let r = row.dot(&row).sqrt();
        if r == 0.0 || !r.is_finite() {
            return Err(Error::Numeric(format!(
                "view {i} has zero or non-finite norm; cosine similarity undefined"
            )));
        }
        norms[i] = r;
    }
    let mut unit = embeddings.to_owned();
    for (i, mut row) in unit.rows_mut().into_iter().enumerate() {
        row /= norms[i];
    }

    // Similarity logits s[a,c] = cos(a,c)/tau, diagonal excluded.
    let sims = unit.dot(&unit.t()) / tau;
    let mut loss = 0.0;
    // g[a,c] = dL/ds[a,c].
    let mut g = Array2::zeros((n_views, n_views));
    let inv = 1.0 / n_views as f64;
    for a in 0..n_views {
        let mut max = f64::NEG_INFINITY;
        for c in 0..n_views {
            if c != a {
                max = max.max(sims[[a, c]]);
            }
        }
        let mut denom = 0.0;
        for c in 0..n_views {
            if c != a {
                denom += (sims[[a, c]] - max).exp();
            }
        }
        loss += inv * (-(sims[[a, partner[a]]] - max) + denom.ln());
        for c in 0..n_views {
            if c == a {
                continue;
            }
            let softmax = (sims[[a, c]] - max).exp() / denom;
            let target = if c == partner[a] { 1.0 } else { 0.0 };
            g[[a, c]] = inv * (softmax - target);
        }
    }

    // dL/dU = (G + Gᵀ)·U / tau, then through the normalization.
    let gsym = &g + &g.t();
    let grad_unit = gsym.dot(&unit) / tau;
    let mut grad = Array2::zeros(embeddings.dim());
    for a in 0..n_views {
        let u = unit.row(a);
        let gu = grad_unit.row(a);
        let radial = gu.dot(&u);
        let mut out = grad.row_mut(a);
        for c in 0..embeddings.ncols() {
            out[c] = (gu[c] - radial * u[c]) / norms[a];
        }
    }
    Ok((loss, grad))
}

/// Pre-trained encoder artifact, loadable by [`finetune`] and usable as a
/// warm start for supervised training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainedEncoder {
    pub encoder: SageEncoder,
    pub ssl: SslConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Mean NT-Xent loss per pre-training epoch.
    pub loss_history: Vec<f64>,
}

impl PretrainedEncoder {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Phase 1: contrastive pre-training on benign graphs only.
pub fn pretrain_encoder(
    benign: &[&SessionGraph],
    ssl: &SslConfig,
    augment: &AugmentConfig,
    train: &TrainConfig,
) -> Result<PretrainedEncoder> {
    augment.validate()?;
    if benign.is_empty() {
        return Err(Error::Validation("pre-training corpus is empty".into()));
    }
    if let Some(bad) = benign.iter().find(|g| g.is_attack()) {
        return Err(Error::Validation(format!(
            "pre-training corpus must be benign-only; {} is an attack session",
            bad.session_id
        )));
    }
    let input_dim = benign[0].node_features.ncols();
    let mut init_rng = substream(train.seed, "init");
    let mut encoder = SageEncoder::new(input_dim, train.hidden_dim, &mut init_rng);
    let sizes = slot_sizes_of(&encoder_slices(&encoder));
    let mut adam = Adam::new(train.lr, train.weight_decay, &sizes);
    let mut shuffle_rng = substream(train.seed, "shuffle");
    let mut dropout_rng = substream(train.seed, "dropout");
    let mut augment_rng = substream(train.seed, "augment");

    let mut order: Vec<usize> = (0..benign.len()).collect();
    let mut loss_history = Vec::with_capacity(ssl.pretrain_epochs);

    for _ in 0..ssl.pretrain_epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(train.batch_size) {
            let b = chunk.len();
            let mut view1 = Vec::with_capacity(b);
            let mut view2 = Vec::with_capacity(b);
            for &i in chunk {
                view1.push(augment_graph(benign[i], augment, &mut augment_rng));
                view2.push(augment_graph(benign[i], augment, &mut augment_rng));
            }
            let refs1: Vec<&SessionGraph> = view1.iter().collect();
            let refs2: Vec<&SessionGraph> = view2.iter().collect();
            let batch1 = GraphBatch::from_graphs(&refs1)?;
            let batch2 = GraphBatch::from_graphs(&refs2)?;
            let mut pass = Pass::Train {
                rng: &mut dropout_rng,
                dropout: train.dropout,
            };
            let trace1 = encoder.forward(&batch1, &mut pass);
            let mut pass = Pass::Train {
                rng: &mut dropout_rng,
                dropout: train.dropout,
            };
            let trace2 = encoder.forward(&batch2, &mut pass);

            // Stack views: rows 0..b are view 1, rows b..2b view 2.
            let dim = trace1.z_g.ncols();
            let mut z = Array2::zeros((2 * b, dim));
            z.slice_mut(ndarray::s![..b, ..]).assign(&trace1.z_g);
            z.slice_mut(ndarray::s![b.., ..]).assign(&trace2.z_g);
            let partner: Vec<usize> = (0..2 * b)
                .map(|i| if i < b { i + b } else { i - b })
                .collect();
            let (loss, grad_z) = nt_xent_loss_and_grad(&z, &partner, ssl.temperature)?;
            epoch_loss += loss * b as f64;

            let mut grads = encoder.zeros_like();
            let g1 = grad_z.slice(ndarray::s![..b, ..]).to_owned();
            let g2 = grad_z.slice(ndarray::s![b.., ..]).to_owned();
            encoder.backward(&batch1, &trace1, &g1, &mut grads);
            encoder.backward(&batch2, &trace2, &g2, &mut grads);

            let mut gslices = encoder_slices_mut(&mut grads);
            clip_global_norm(&mut gslices, train.grad_clip);
            drop(gslices);
            let gslices = encoder_slices(&grads);
            let mut pslices = encoder_slices_mut(&mut encoder);
            adam.step(&mut pslices, &gslices, None);
        }
        loss_history.push(epoch_loss / benign.len() as f64);
    }

    Ok(PretrainedEncoder {
        encoder,
        ssl: ssl.clone(),
        augment: augment.clone(),
        seed: train.seed,
        loss_history,
    })
}

fn encoder_slices(e: &SageEncoder) -> Vec<&[f64]> {
    vec![
        e.l1.w_self.as_slice().expect("standard layout"),
        e.l1.w_neigh.as_slice().expect("standard layout"),
        e.l1.b.as_slice().expect("standard layout"),
        e.l2.w_self.as_slice().expect("standard layout"),
        e.l2.w_neigh.as_slice().expect("standard layout"),
        e.l2.b.as_slice().expect("standard layout"),
    ]
}

fn encoder_slices_mut(e: &mut SageEncoder) -> Vec<&mut [f64]> {
    vec![
        e.l1.w_self.as_slice_mut().expect("standard layout"),
        e.l1.w_neigh.as_slice_mut().expect("standard layout"),
        e.l1.b.as_slice_mut().expect("standard layout"),
        e.l2.w_self.as_slice_mut().expect("standard layout"),
        e.l2.w_neigh.as_slice_mut().expect("standard layout"),
        e.l2.b.as_slice_mut().expect("standard layout"),
    ]
}

/// Phase 2: attach a fresh head and train every parameter at the reduced
/// fine-tuning rate with the usual early-stopping rule.
pub fn finetune(
    encoder: SageEncoder,
    train_graphs: &[&SessionGraph],
    val_graphs: &[&SessionGraph],
    ssl: &SslConfig,
    train_config: &TrainConfig,
) -> Result<TrainedNeural> {
    let config = TrainConfig {
        lr: ssl.finetune_lr,
        max_epochs: ssl.finetune_epochs,
        ..train_config.clone()
    };
    let labels: Vec<bool> = train_graphs.iter().map(|g| g.is_attack()).collect();
    let weights = crate::classical::class_weights(&labels)?;
    train_sage(
        train_graphs,
        val_graphs,
        &config,
        weights,
        Some((encoder, None)),
    )
}

/// Diagnostic fine-tuning with a separate encoder learning rate (0 freezes
/// the encoder so only the head moves).
pub fn finetune_with_encoder_lr(
    encoder: SageEncoder,
    train_graphs: &[&SessionGraph],
    val_graphs: &[&SessionGraph],
    ssl: &SslConfig,
    train_config: &TrainConfig,
    encoder_lr: f64,
) -> Result<TrainedNeural> {
    let config = TrainConfig {
        lr: ssl.finetune_lr,
        max_epochs: ssl.finetune_epochs,
        ..train_config.clone()
    };
    let labels: Vec<bool> = train_graphs.iter().map(|g| g.is_attack()).collect();
    let weights = crate::classical::class_weights(&labels)?;
    let encoder_scale = encoder_lr / ssl.finetune_lr;
    let mut scales = vec![encoder_scale; crate::nn::model::SageModel::ENCODER_SLOTS];
    scales.extend(vec![1.0; 4]);
    train_sage(
        train_graphs,
        val_graphs,
        &config,
        weights,
        Some((encoder, Some(scales))),
    )
}
