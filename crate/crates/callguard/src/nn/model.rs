//! The two network architectures: a two-layer GraphSAGE encoder with dual
//! readout plus a two-layer classifier head, and the no-graph MLP that
//! applies the same head directly to pooled raw node features.
//!
//! Dropout sits after the first GNN layer's activation and after the head's
//! hidden activation, active only in training mode. Edge kinds are ignored
//! by message passing; all edges aggregate alike.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    dropout_mask, elu, elu_prime, readout_backward, readout_forward, GraphBatch, Linear,
    Neighborhood, ReadoutCache, SageLayer,
};
use crate::error::{Error, Result};
use crate::graph::{Edge, SessionGraph};

/// Forward-pass mode: training (dropout active) or evaluation.
pub enum Pass<'a> {
    Train {
        rng: &'a mut ChaCha8Rng,
        dropout: f64,
    },
    Eval,
}

impl Pass<'_> {
    fn mask(&mut self, dim: (usize, usize)) -> Option<Array2<f64>> {
        match self {
            Pass::Train { rng, dropout } if *dropout > 0.0 => {
                Some(dropout_mask(dim, *dropout, rng))
            }
            _ => None,
        }
    }
}

/// Two-layer classifier head: `in → hidden → 2` with ELU between and
/// dropout after the hidden activation (training mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub l1: Linear,
    pub l2: Linear,
}

impl Head {
    pub fn new(in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        // The output layer starts at zero: both logits are equal until the
        // first update, which makes the two-class objective exactly
        // symmetric under label flips at matched seeds.
        let l1 = Linear::new(in_dim, hidden, rng);
        let mut l2 = Linear::new(hidden, 2, rng);
        l2.w.fill(0.0);
        l2.b.fill(0.0);
        Head { l1, l2 }
    }

    pub fn zeros_like(&self) -> Self {
        Head {
            l1: self.l1.zeros_like(),
            l2: self.l2.zeros_like(),
        }
    }
}

pub struct HeadTrace {
    input: Array2<f64>,
    z1: Array2<f64>,
    a1_dropped: Array2<f64>,
    mask: Option<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl Head {
    pub fn forward(&self, input: Array2<f64>, pass: &mut Pass<'_>) -> HeadTrace {
        let z1 = self.l1.forward(&input);
        let a1 = z1.mapv(elu);
        let mask = pass.mask(a1.dim());
        let a1_dropped = match &mask {
            Some(m) => &a1 * m,
            None => a1,
        };
        let logits = self.l2.forward(&a1_dropped);
        HeadTrace {
            input,
            z1,
            a1_dropped,
            mask,
            logits,
        }
    }

    /// Accumulates parameter grads; returns grad wrt the head input.
    pub fn backward(
        &self,
        trace: &HeadTrace,
        grad_logits: &Array2<f64>,
        grad: &mut Head,
    ) -> Array2<f64> {
        let mut grad_a1 = self.l2.backward(&trace.a1_dropped, grad_logits, &mut grad.l2);
        if let Some(mask) = &trace.mask {
            grad_a1 *= mask;
        }
        let grad_z1 = &grad_a1 * &trace.z1.mapv(elu_prime);
        self.l1.backward(&trace.input, &grad_z1, &mut grad.l1)
    }
}

/// Two GraphSAGE layers; the contrastive objective trains this encoder
/// alone, supervision adds a head on the readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageEncoder {
    pub l1: SageLayer,
    pub l2: SageLayer,
    pub input_dim: usize,
    pub hidden: usize,
}

impl SageEncoder {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        SageEncoder {
            l1: SageLayer::new(input_dim, hidden, rng),
            l2: SageLayer::new(hidden, hidden, rng),
            input_dim,
            hidden,
        }
    }

    pub fn zeros_like(&self) -> Self {
        SageEncoder {
            l1: self.l1.zeros_like(),
            l2: self.l2.zeros_like(),
            input_dim: self.input_dim,
            hidden: self.hidden,
        }
    }

    /// Readout width: `2 × hidden`.
    pub fn embedding_dim(&self) -> usize {
        2 * self.hidden
    }
}

pub struct EncoderTrace {
    m1: Array2<f64>,
    z1: Array2<f64>,
    a1_dropped: Array2<f64>,
    mask: Option<Array2<f64>>,
    m2: Array2<f64>,
    z2: Array2<f64>,
    readout: ReadoutCache,
    /// Graph-level embeddings, `n_graphs × 2·hidden`.
    pub z_g: Array2<f64>,
}

fn sage_forward_raw(layer: &SageLayer, h: &Array2<f64>, nbr: &Neighborhood) -> (Array2<f64>, Array2<f64>) {
    let m = nbr.mean_aggregate(h);
    let z = h.dot(&layer.w_self) + m.dot(&layer.w_neigh) + &layer.b;
    (m, z)
}

fn sage_backward_raw(
    layer: &SageLayer,
    h: &Array2<f64>,
    m: &Array2<f64>,
    grad_z: &Array2<f64>,
    nbr: &Neighborhood,
    grad: &mut SageLayer,
) -> Array2<f64> {
    grad.w_self += &h.t().dot(grad_z);
    grad.w_neigh += &m.t().dot(grad_z);
    grad.b += &grad_z.sum_axis(ndarray::Axis(0));
    let grad_m = grad_z.dot(&layer.w_neigh.t());
    grad_z.dot(&layer.w_self.t()) + nbr.mean_aggregate_backward(&grad_m)
}

impl SageEncoder {
    pub fn forward(&self, batch: &GraphBatch, pass: &mut Pass<'_>) -> EncoderTrace {
        let (m1, z1) = sage_forward_raw(&self.l1, &batch.feats, &batch.nbr);
        let a1 = z1.mapv(elu);
        let mask = pass.mask(a1.dim());
        let a1_dropped = match &mask {
            Some(m) => &a1 * m,
            None => a1,
        };
        let (m2, z2) = sage_forward_raw(&self.l2, &a1_dropped, &batch.nbr);
        let a2 = z2.mapv(elu);
        let (z_g, readout) = readout_forward(&a2, &batch.graph_of_node, batch.n_graphs);
        EncoderTrace {
            m1,
            z1,
            a1_dropped,
            mask,
            m2,
            z2,
            readout,
            z_g,
        }
    }

    /// Backward from a gradient on the graph embeddings.
    pub fn backward(
        &self,
        batch: &GraphBatch,
        trace: &EncoderTrace,
        grad_zg: &Array2<f64>,
        grad: &mut SageEncoder,
    ) {
        let grad_a2 = readout_backward(grad_zg, &batch.graph_of_node, &trace.readout);
        let grad_z2 = &grad_a2 * &trace.z2.mapv(elu_prime);
        let mut grad_a1 = sage_backward_raw(
            &self.l2,
            &trace.a1_dropped,
            &trace.m2,
            &grad_z2,
            &batch.nbr,
            &mut grad.l2,
        );
        if let Some(mask) = &trace.mask {
            grad_a1 *= mask;
        }
        let grad_z1 = &grad_a1 * &trace.z1.mapv(elu_prime);
        sage_backward_raw(
            &self.l1,
            &batch.feats,
            &trace.m1,
            &grad_z1,
            &batch.nbr,
            &mut grad.l1,
        );
    }
}

/// Supervised GraphSAGE classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageModel {
    pub encoder: SageEncoder,
    pub head: Head,
}

impl SageModel {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let encoder = SageEncoder::new(input_dim, hidden, rng);
        let head = Head::new(encoder.embedding_dim(), hidden, rng);
        SageModel { encoder, head }
    }

    pub fn zeros_like(&self) -> Self {
        SageModel {
            encoder: self.encoder.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    pub fn forward(&self, batch: &GraphBatch, pass: &mut Pass<'_>) -> (EncoderTrace, HeadTrace) {
        let enc = self.encoder.forward(batch, pass);
        let head = self.head.forward(enc.z_g.clone(), pass);
        (enc, head)
    }

    pub fn backward(
        &self,
        batch: &GraphBatch,
        enc_trace: &EncoderTrace,
        head_trace: &HeadTrace,
        grad_logits: &Array2<f64>,
        grad: &mut SageModel,
    ) {
        let grad_zg = self.head.backward(head_trace, grad_logits, &mut grad.head);
        self.encoder
            .backward(batch, enc_trace, &grad_zg, &mut grad.encoder);
    }

    /// Mutable views of every parameter, in a fixed slot order shared with
    /// the gradient holder.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.encoder.l1.w_self.as_slice_mut().expect("standard layout"),
            self.encoder.l1.w_neigh.as_slice_mut().expect("standard layout"),
            self.encoder.l1.b.as_slice_mut().expect("standard layout"),
            self.encoder.l2.w_self.as_slice_mut().expect("standard layout"),
            self.encoder.l2.w_neigh.as_slice_mut().expect("standard layout"),
            self.encoder.l2.b.as_slice_mut().expect("standard layout"),
            self.head.l1.w.as_slice_mut().expect("standard layout"),
            self.head.l1.b.as_slice_mut().expect("standard layout"),
            self.head.l2.w.as_slice_mut().expect("standard layout"),
            self.head.l2.b.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            self.encoder.l1.w_self.as_slice().expect("standard layout"),
            self.encoder.l1.w_neigh.as_slice().expect("standard layout"),
            self.encoder.l1.b.as_slice().expect("standard layout"),
            self.encoder.l2.w_self.as_slice().expect("standard layout"),
            self.encoder.l2.w_neigh.as_slice().expect("standard layout"),
            self.encoder.l2.b.as_slice().expect("standard layout"),
            self.head.l1.w.as_slice().expect("standard layout"),
            self.head.l1.b.as_slice().expect("standard layout"),
            self.head.l2.w.as_slice().expect("standard layout"),
            self.head.l2.b.as_slice().expect("standard layout"),
        ]
    }

    /// Number of encoder slots at the front of the slot order.
    pub const ENCODER_SLOTS: usize = 6;
}

/// No-graph baseline: the head applied to pooled raw node features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub head: Head,
    pub input_dim: usize,
}

impl MlpModel {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        MlpModel {
            head: Head::new(input_dim, hidden, rng),
            input_dim,
        }
    }

    pub fn zeros_like(&self) -> Self {
        MlpModel {
            head: self.head.zeros_like(),
            input_dim: self.input_dim,
        }
    }

    pub fn forward(&self, rows: Array2<f64>, pass: &mut Pass<'_>) -> HeadTrace {
        self.head.forward(rows, pass)
    }

    pub fn backward(&self, trace: &HeadTrace, grad_logits: &Array2<f64>, grad: &mut MlpModel) {
        self.head.backward(trace, grad_logits, &mut grad.head);
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.head.l1.w.as_slice_mut().expect("standard layout"),
            self.head.l1.b.as_slice_mut().expect("standard layout"),
            self.head.l2.w.as_slice_mut().expect("standard layout"),
            self.head.l2.b.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            self.head.l1.w.as_slice().expect("standard layout"),
            self.head.l1.b.as_slice().expect("standard layout"),
            self.head.l2.w.as_slice().expect("standard layout"),
            self.head.l2.b.as_slice().expect("standard layout"),
        ]
    }
}

/// A trained network of either architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NeuralModel {
    Mlp(MlpModel),
    Sage(SageModel),
}

impl NeuralModel {
    pub fn kind(&self) -> &'static str {
        match self {
            NeuralModel::Mlp(_) => "mlp",
            NeuralModel::Sage(_) => "sage",
        }
    }
}

/// One GraphSAGE layer application over an explicit edge list:
/// `out_i = ELU(W_self·h_i + W_neigh·mean_{j∈N(i)} h_j + b)`.
pub fn sage_layer(h: &Array2<f64>, edges: &[Edge], layer: &SageLayer) -> Result<Array2<f64>> {
    let nbr = Neighborhood::from_edges(h.nrows(), edges.iter().map(|e| (e.src, e.dst)))?;
    let (_, z) = sage_forward_raw(layer, h, &nbr);
    Ok(z.mapv(elu))
}

/// Evaluation-mode graph embedding `z_G` (mean ‖ max of the final node
/// representations) for a single featurized graph.
pub fn encode_graph(graph: &SessionGraph, encoder: &SageEncoder) -> Result<Vec<f64>> {
    if graph.node_features.ncols() != encoder.input_dim {
        return Err(Error::Validation(format!(
            "graph feature dim {} does not match encoder input dim {}",
            graph.node_features.ncols(),
            encoder.input_dim
        )));
    }
    let batch = GraphBatch::from_graphs(&[graph])?;
    let trace = encoder.forward(&batch, &mut Pass::Eval);
    Ok(trace.z_g.row(0).to_vec())
}

pub fn rows_to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut out = Array2::zeros((n, d));
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&Array1::from_vec(r.clone()));
    }
    out
}
