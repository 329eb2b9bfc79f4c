//! Detection difficulty by attack mode: combined input+output manipulation
//! is the most detectable, falsified outputs follow, and input-only
//! argument substitution is the hardest because a plausible-looking wrong
//! value can fall within normal variation.
//!
//! ```bash
//! cargo run --example per_mode_breakdown
//! ```

use std::collections::BTreeMap;

use callguard::embed::EmbeddingProvider;
use callguard::eval::{generate_synthetic_corpus, mean_sd, Protocol, SyntheticSpec};
use callguard::features::FeatureMode;
use callguard::pipeline::{execute_run, ModelSpec, RunSpec};

fn main() -> callguard::Result<()> {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::default(), 7)?;
    let provider = EmbeddingProvider::deterministic(384);

    let mut recalls: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for seed in [7u64, 42, 123] {
        let spec = RunSpec::new(ModelSpec::Sage, FeatureMode::Content, Protocol::TaskStratified, seed);
        let result = execute_run(&corpus, Some(&provider), &spec)?;
        for row in &result.metrics.per_mode {
            if let Some(recall) = row.recall {
                recalls.entry(row.mode.clone()).or_default().push(recall);
                *counts.entry(row.mode.clone()).or_default() += row.n;
            }
        }
    }

    println!("{:<14} {:>6} {:>10}", "attack_mode", "N", "recall");
    for mode in ["both", "tool_output", "tool_input"] {
        if let Some(values) = recalls.get(mode) {
            println!(
                "{:<14} {:>6} {:>10.3}",
                mode,
                counts[mode],
                mean_sd(values).0
            );
        }
    }
    println!("\n(GraphSAGE, content features, recall at threshold 0.5, 3-seed means;\n N sums the test-fold attacks across seeds)");
    Ok(())
}
