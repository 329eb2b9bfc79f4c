//! The deterministic synthetic corpus: distinctive tool subsets per task,
//! benign text pools that cluster per task under the deterministic
//! embedder, three calibrated attack modes, and an optional leakage-prone
//! variant where task identity predicts the label.
//!
//! ```bash
//! cargo run --example synthetic_corpus
//! ```

use callguard::eval::{generate_synthetic_corpus, SyntheticSpec};
use callguard::graph::{build_graph, EdgeKind};
use callguard::session::corpus_stats;

fn main() -> callguard::Result<()> {
    let spec = SyntheticSpec::default();
    let corpus = generate_synthetic_corpus(&spec, 7)?;
    let stats = corpus_stats(&corpus);
    println!(
        "default corpus: {} sessions, {} benign / {} attack, {} tasks, {} tools",
        stats.total, stats.benign, stats.attack, stats.distinct_tasks, stats.distinct_tools
    );
    println!("attack modes: {:?}", stats.by_attack_mode);

    // Same seed, same corpus — everything downstream is reproducible.
    let again = generate_synthetic_corpus(&spec, 7)?;
    println!("same seed reproduces the corpus: {}", corpus == again);

    // Data-flow edges appear where responses feed later arguments.
    let with_flow = corpus
        .iter()
        .filter(|s| {
            build_graph(s)
                .map(|g| g.edges.iter().any(|e| e.kind == EdgeKind::DataFlow))
                .unwrap_or(false)
        })
        .count();
    println!("sessions with data-flow edges: {with_flow}/{}", corpus.len());

    let sample = corpus.iter().find(|s| s.is_attack()).unwrap();
    println!(
        "\nsample attack session {} (mode {:?}):",
        sample.session_id,
        sample.attack_mode.as_ref().unwrap()
    );
    for call in &sample.calls {
        println!("  {} args={} resp={:?}", call.tool_name, call.args_text, call.response_text);
    }

    // The leakage-prone variant alternates per-task attack prevalence
    // between 0.9 and 0.1.
    let leaky = generate_synthetic_corpus(&SyntheticSpec::leakage_prone(), 7)?;
    let mut hi = 0;
    let mut lo = 0;
    for task in 0..2 {
        let rate = leaky
            .iter()
            .filter(|s| s.task_id.as_deref() == Some(&format!("task{task:03}")))
            .filter(|s| s.is_attack())
            .count() as f64
            / 16.0;
        if task % 2 == 0 {
            hi = (rate * 100.0) as usize;
        } else {
            lo = (rate * 100.0) as usize;
        }
    }
    println!("\nleakage-prone corpus: task000 attack rate ~{hi}%, task001 ~{lo}%");
    Ok(())
}
