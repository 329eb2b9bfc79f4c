//! The evaluation-protocol experiment: random (label-stratified) splits let
//! a model memorize task-specific tool signatures, inflating AUROC over
//! task-disjoint splits. The gap is large for metadata features and small
//! for content features.
//!
//! ```bash
//! cargo run --example leakage_gap
//! ```

use callguard::embed::EmbeddingProvider;
use callguard::eval::{generate_synthetic_corpus, Protocol, SyntheticSpec};
use callguard::features::FeatureMode;
use callguard::pipeline::{leakage_gap, ModelSpec, RunSpec};

fn main() -> callguard::Result<()> {
    // Leakage-prone corpus: per-task attack prevalence alternates between
    // 0.9 and 0.1, so task identity predicts the label.
    let corpus = generate_synthetic_corpus(&SyntheticSpec::leakage_prone(), 7)?;
    let provider = EmbeddingProvider::deterministic(384);
    let seeds = [7u64, 42, 123];

    println!(
        "{:<10} {:>14} {:>10} {:>8}",
        "features", "task_disjoint", "random", "gap"
    );
    for mode in [FeatureMode::Metadata, FeatureMode::Content] {
        let base = RunSpec::new(ModelSpec::Sage, mode, Protocol::TaskStratified, 7);
        let prov = (mode != FeatureMode::Metadata).then_some(&provider);
        let report = leakage_gap(&corpus, prov, &base, &seeds)?;
        println!(
            "{:<10} {:>14.3} {:>10.3} {:>8.3}",
            mode.to_string(),
            report.mean_task_disjoint,
            report.mean_random,
            report.gap
        );
    }
    println!(
        "\nRandom splits share task definitions between train and test, so a\n\
         metadata model scores tasks it has memorized instead of detecting\n\
         attacks. Task-disjoint splits are the honest protocol."
    );
    Ok(())
}
