//! Evaluation protocol: splits, metrics, synthetic corpora, label-efficiency
//! sweeps, and the leakage-gap experiment.

pub mod metrics;
pub mod split;
pub mod synthetic;
pub mod sweep;

pub use metrics::{
    auprc, auroc, classification_metrics, mean_sd, per_mode_breakdown, pr_points, roc_points,
    ConfusionCounts, MetricsReport, ModeRow,
};
pub use split::{
    has_both_labels, kfold_split, label_stratified_split, task_stratified_split, FoldSpec,
    Protocol, SplitSpec,
};
pub use synthetic::{generate_synthetic_corpus, SyntheticSpec};
pub use sweep::{label_efficiency_sweep, SweepCell, SweepMethod, SweepOptions};
