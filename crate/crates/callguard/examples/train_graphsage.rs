//! Supervised GraphSAGE versus the no-graph MLP, metadata versus content
//! features — the core detection comparison, on the synthetic corpus under
//! task-disjoint splits.
//!
//! ```bash
//! cargo run --example train_graphsage
//! ```

use callguard::embed::EmbeddingProvider;
use callguard::eval::{generate_synthetic_corpus, mean_sd, Protocol, SyntheticSpec};
use callguard::features::FeatureMode;
use callguard::pipeline::{execute_run, ModelSpec, RunSpec};

fn main() -> callguard::Result<()> {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::default(), 7)?;
    let provider = EmbeddingProvider::deterministic(384);
    let seeds = [7u64, 42, 123];

    println!("{:<10} {:<10} {:>8} {:>8}", "model", "features", "auroc", "sd");
    for (model, mode) in [
        (ModelSpec::Sage, FeatureMode::Content),
        (ModelSpec::Sage, FeatureMode::Metadata),
        (ModelSpec::Mlp, FeatureMode::Content),
        (ModelSpec::Sage, FeatureMode::Combined),
    ] {
        let mut aurocs = Vec::new();
        for &seed in &seeds {
            let spec = RunSpec::new(model, mode, Protocol::TaskStratified, seed);
            let result = execute_run(&corpus, Some(&provider), &spec)?;
            aurocs.push(result.metrics.auroc.unwrap());
        }
        let (mean, sd) = mean_sd(&aurocs);
        println!("{:<10} {:<10} {:>8.3} {:>8.3}", model.as_str(), mode.to_string(), mean, sd);
    }
    println!(
        "\nContent embeddings carry the detection signal; metadata-only\n\
         detection stays near chance on unseen tasks regardless of the\n\
         architecture, and the no-graph MLP sits close to the GNN."
    );
    Ok(())
}
