//! The whole pipeline through the file-driven command layer: write a
//! normalized corpus, train per-seed artifacts, evaluate them on their
//! recomputed test splits, and read back the aggregate table — exactly what
//! the `callguard` binary does.
//!
//! ```bash
//! cargo run --example end_to_end_pipeline
//! ```

use callguard::cli::{cmd_evaluate, cmd_ingest, cmd_train, DatasetEntry, RunConfig};
use callguard::embed::{BackendKind, ProviderConfig};
use callguard::eval::{generate_synthetic_corpus, SyntheticSpec};
use callguard::session::write_corpus;

fn main() -> callguard::Result<()> {
    let dir = std::env::temp_dir().join("callguard-e2e-demo");
    std::fs::create_dir_all(&dir)?;

    // A corpus on disk, one normalized session per line.
    let raw_path = dir.join("sessions.jsonl");
    let corpus = generate_synthetic_corpus(
        &SyntheticSpec {
            n_tasks: 12,
            sessions_per_task: 8,
            ..SyntheticSpec::default()
        },
        7,
    )?;
    write_corpus(&raw_path, &corpus)?;

    // Ingest validates every record and reports corpus statistics.
    let normalized = dir.join("normalized.jsonl");
    let outcome = cmd_ingest(&raw_path, "normalized", &normalized, false)?;
    println!(
        "ingested {} sessions ({} benign / {} attack, {} tasks, {} tools)",
        outcome.written,
        outcome.stats.benign,
        outcome.stats.attack,
        outcome.stats.distinct_tasks,
        outcome.stats.distinct_tools
    );

    let config = RunConfig {
        datasets: vec![DatasetEntry {
            path: normalized,
            source: "normalized".into(),
        }],
        feature_mode: "content".into(),
        model: "logreg".into(),
        protocol: "task_stratified".into(),
        seeds: vec![7, 42, 123],
        out_dir: dir.join("run"),
        provider: Some(ProviderConfig {
            backend: BackendKind::DeterministicTest,
            model_id: "deterministic-test".into(),
            dim: 384,
            endpoint: None,
            cache_path: Some(dir.join("embeddings.cache")),
        }),
        ..RunConfig::default()
    };
    // The same configuration as a TOML file drives the binary:
    let config_path = dir.join("run.toml");
    config.save(&config_path)?;
    println!("config written to {}", config_path.display());

    let manifest = cmd_train(&config)?;
    println!(
        "trained {} artifacts (config digest {}...)",
        manifest.artifacts.len(),
        &manifest.config_digest[..12]
    );

    let evaluation = cmd_evaluate(&config, false)?;
    println!("\n{:<12} {:>8} {:>8}", "metric", "mean", "sd");
    for row in &evaluation.aggregate {
        println!("{:<12} {:>8.4} {:>8.4}", row.metric, row.mean, row.sd);
    }
    println!("\nartifacts and metric files live under {}", config.out_dir.display());
    Ok(())
}
