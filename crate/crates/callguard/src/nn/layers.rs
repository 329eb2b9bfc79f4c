//! Building blocks for the hand-rolled networks: affine and GraphSAGE
//! layers, ELU, inverted dropout, the dual mean‖max readout, and the Adam
//! optimizer with global-norm gradient clipping. All forward passes cache
//! what their backward passes need; gradients are exact (verified against
//! central finite differences in `train::gradient_check_*`).

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SessionGraph;

pub(crate) fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp() - 1.0
    }
}

pub(crate) fn elu_prime(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

/// Uniform fan-in initialization: `U(−1/√fan_in, 1/√fan_in)`.
fn init_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

/// Affine layer with weights stored `(in, out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: init_matrix(in_dim, out_dim, rng),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Linear {
            w: Array2::zeros(self.w.dim()),
            b: Array1::zeros(self.b.len()),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Returns grad wrt input; accumulates parameter grads into `grad`.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        grad_out: &Array2<f64>,
        grad: &mut Linear,
    ) -> Array2<f64> {
        grad.w += &x.t().dot(grad_out);
        grad.b += &grad_out.sum_axis(Axis(0));
        grad_out.dot(&self.w.t())
    }
}

/// GraphSAGE-mean layer: separate self and neighbor transforms,
/// `out_i = ELU(W_self·h_i + W_neigh·mean_{j∈N(i)} h_j + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageLayer {
    pub w_self: Array2<f64>,
    pub w_neigh: Array2<f64>,
    pub b: Array1<f64>,
}

impl SageLayer {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        SageLayer {
            w_self: init_matrix(in_dim, out_dim, rng),
            w_neigh: init_matrix(in_dim, out_dim, rng),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        SageLayer {
            w_self: Array2::zeros(self.w_self.dim()),
            w_neigh: Array2::zeros(self.w_neigh.dim()),
            b: Array1::zeros(self.b.len()),
        }
    }
}

/// CSR neighborhood over the nodes of one batch; neighbors come from the
/// bidirectional edge list, deduplicated, self-loops included.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Neighborhood {
    /// Neighbor lists for `n` nodes from directed entries `(src, dst)`:
    /// `N(dst)` contains `src`. Every node must have at least one neighbor.
    pub fn from_edges(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Result<Self> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (src, dst) in edges {
            lists[dst].push(src);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for (i, mut list) in lists.into_iter().enumerate() {
            list.sort_unstable();
            list.dedup();
            if list.is_empty() {
                return Err(Error::Validation(format!(
                    "node {i} is isolated; graphs must guarantee degree >= 1"
                )));
            }
            indices.extend_from_slice(&list);
            offsets.push(indices.len());
        }
        Ok(Neighborhood { offsets, indices })
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `out[i] = mean_{j∈N(i)} h[j]`.
    pub fn mean_aggregate(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_nodes(), h.ncols()));
        for i in 0..self.n_nodes() {
            let nbrs = self.neighbors(i);
            let inv = 1.0 / nbrs.len() as f64;
            let mut row = out.row_mut(i);
            for &j in nbrs {
                row.scaled_add(inv, &h.row(j));
            }
        }
        out
    }

    /// Adjoint of `mean_aggregate`: scatter `grad_m` back to the inputs.
    pub fn mean_aggregate_backward(&self, grad_m: &Array2<f64>) -> Array2<f64> {
        let mut grad_h = Array2::zeros(grad_m.dim());
        for i in 0..self.n_nodes() {
            let nbrs = self.neighbors(i);
            let inv = 1.0 / nbrs.len() as f64;
            let src = grad_m.row(i);
            for &j in nbrs {
                grad_h.row_mut(j).scaled_add(inv, &src);
            }
        }
        grad_h
    }
}

/// Several graphs packed as one block-diagonal disjoint union with a
/// per-node graph-id map for the readout.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub feats: Array2<f64>,
    pub nbr: Neighborhood,
    pub graph_of_node: Vec<usize>,
    pub n_graphs: usize,
    pub labels: Vec<bool>,
}

impl GraphBatch {
    pub fn from_graphs(graphs: &[&SessionGraph]) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Validation("empty graph batch".into()));
        }
        let d = graphs[0].node_features.ncols();
        let total: usize = graphs.iter().map(|g| g.n_nodes).sum();
        let mut feats = Array2::zeros((total, d));
        let mut graph_of_node = Vec::with_capacity(total);
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut labels = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            if g.node_features.ncols() != d {
                return Err(Error::Validation(format!(
                    "graph {} has feature dim {}, batch has {}",
                    g.session_id,
                    g.node_features.ncols(),
                    d
                )));
            }
            if g.node_features.nrows() != g.n_nodes {
                return Err(Error::Validation(format!(
                    "graph {} has no node features yet",
                    g.session_id
                )));
            }
            feats
                .slice_mut(ndarray::s![offset..offset + g.n_nodes, ..])
                .assign(&g.node_features);
            graph_of_node.extend(std::iter::repeat(gi).take(g.n_nodes));
            edges.extend(g.edges.iter().map(|e| (e.src + offset, e.dst + offset)));
            labels.push(g.is_attack());
            offset += g.n_nodes;
        }
        Ok(GraphBatch {
            feats,
            nbr: Neighborhood::from_edges(total, edges.into_iter())?,
            graph_of_node,
            n_graphs: graphs.len(),
            labels,
        })
    }
}

/// Dual readout over a node-embedding matrix: per graph, coordinatewise
/// mean concatenated with coordinatewise max.
pub struct ReadoutCache {
    counts: Vec<usize>,
    /// Row index of the (first) maximum for each (graph, column).
    argmax: Vec<usize>,
    dim: usize,
}

pub fn readout_forward(
    h: &Array2<f64>,
    graph_of_node: &[usize],
    n_graphs: usize,
) -> (Array2<f64>, ReadoutCache) {
    let d = h.ncols();
    let mut z = Array2::zeros((n_graphs, 2 * d));
    let mut counts = vec![0usize; n_graphs];
    let mut argmax = vec![usize::MAX; n_graphs * d];
    let mut best = vec![f64::NEG_INFINITY; n_graphs * d];
    for (i, &g) in graph_of_node.iter().enumerate() {
        counts[g] += 1;
        for c in 0..d {
            let v = h[[i, c]];
            z[[g, c]] += v;
            let slot = g * d + c;
            if v > best[slot] {
                best[slot] = v;
                argmax[slot] = i;
            }
        }
    }
    for g in 0..n_graphs {
        let inv = 1.0 / counts[g] as f64;
        for c in 0..d {
            z[[g, c]] *= inv;
            z[[g, d + c]] = best[g * d + c];
        }
    }
    (
        z,
        ReadoutCache {
            counts,
            argmax,
            dim: d,
        },
    )
}

pub fn readout_backward(
    grad_z: &Array2<f64>,
    graph_of_node: &[usize],
    cache: &ReadoutCache,
) -> Array2<f64> {
    let d = cache.dim;
    let mut grad_h = Array2::zeros((graph_of_node.len(), d));
    for (i, &g) in graph_of_node.iter().enumerate() {
        let inv = 1.0 / cache.counts[g] as f64;
        for c in 0..d {
            grad_h[[i, c]] += grad_z[[g, c]] * inv;
        }
    }
    for (slot, &i) in cache.argmax.iter().enumerate() {
        let g = slot / d;
        let c = slot % d;
        grad_h[[i, c]] += grad_z[[g, d + c]];
    }
    grad_h
}

/// Inverted dropout mask: entries zeroed with probability `rate`, survivors
/// scaled by `1/(1-rate)`.
pub fn dropout_mask(dim: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_fn(dim, |_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
}

/// Class-weighted softmax cross-entropy over 2-logit rows; returns the loss
/// and its gradient wrt the logits. Weighted-mean convention:
/// `L = Σ w_i · CE_i / Σ w_i`.
pub fn weighted_cross_entropy(
    logits: &Array2<f64>,
    labels: &[bool],
    class_weights: [f64; 2],
) -> (f64, Array2<f64>) {
    assert_eq!(logits.nrows(), labels.len());
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    let mut weight_sum = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let y = usize::from(label);
        let w = class_weights[y];
        weight_sum += w;
        let max = logits[[i, 0]].max(logits[[i, 1]]);
        let e0 = (logits[[i, 0]] - max).exp();
        let e1 = (logits[[i, 1]] - max).exp();
        let denom = e0 + e1;
        let p = [e0 / denom, e1 / denom];
        loss -= w * p[y].max(f64::MIN_POSITIVE).ln();
        grad[[i, 0]] = w * (p[0] - if y == 0 { 1.0 } else { 0.0 });
        grad[[i, 1]] = w * (p[1] - if y == 1 { 1.0 } else { 0.0 });
    }
    grad /= weight_sum;
    (loss / weight_sum, grad)
}

/// Softmax attack probability per row of 2-logit output.
pub fn attack_probabilities(logits: &Array2<f64>) -> Vec<f64> {
    (0..logits.nrows())
        .map(|i| {
            let max = logits[[i, 0]].max(logits[[i, 1]]);
            let e0 = (logits[[i, 0]] - max).exp();
            let e1 = (logits[[i, 1]] - max).exp();
            e1 / (e0 + e1)
        })
        .collect()
}

/// Element counts per parameter slot, for optimizer state allocation.
pub fn slot_sizes_of(slices: &[&[f64]]) -> Vec<usize> {
    slices.iter().map(|s| s.len()).collect()
}

/// Scale gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm: f64 = grads
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Adam with L2 weight decay added to the gradient (coupled convention).
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64, slot_sizes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: slot_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: slot_sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    /// One update. `lr_scales`, when given, multiplies the base rate per
    /// slot (used to fine-tune encoder and head at different rates).
    pub fn step(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        lr_scales: Option<&[f64]>,
    ) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (slot, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let lr = self.lr * lr_scales.map_or(1.0, |s| s[slot]);
            if lr == 0.0 {
                continue;
            }
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for k in 0..param.len() {
                let g = grad[k] + self.weight_decay * param[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                param[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
