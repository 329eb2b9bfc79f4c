//! Neural detectors: the no-graph MLP baseline and the two-layer GraphSAGE
//! classifier, with hand-derived gradients, Adam, and early stopping on
//! validation AUROC. Everything runs in double precision on the CPU and is
//! bit-deterministic given a seed.

pub mod layers;
pub mod model;
pub mod train;

pub use layers::{
    attack_probabilities, clip_global_norm, weighted_cross_entropy, Adam, GraphBatch, Linear,
    Neighborhood, SageLayer,
};
pub use model::{
    encode_graph, sage_layer, Head, MlpModel, NeuralModel, Pass, SageEncoder, SageModel,
};
pub use train::{
    gradient_check_mlp, gradient_check_sage, mlp_gradient_norm, score_graphs, train_mlp_on_rows,
    train_supervised, Architecture, TrainConfig, TrainedNeural,
};
