//! The three node-feature modes and the pooled session representation.
//!
//! ```bash
//! cargo run --example feature_modes
//! ```

use callguard::embed::EmbeddingProvider;
use callguard::features::{
    featurize_graph, metadata_features, node_features, param_hash, pooled_readout, FeatureConfig,
    FeatureMode,
};
use callguard::graph::build_graph;
use callguard::session::{parse_session_line, ToolVocab};

fn main() -> callguard::Result<()> {
    let line = r#"{"session_id":"f-1","source":"demo","task_id":null,"label":"benign","attack_mode":null,"calls":[{"tool":"search","arguments":{"q":"rust graphs"},"response":"found 3 results"},{"tool":"fetch","arguments":{"url":"https://example.com/1"},"response":"<html>..."}]}"#;
    let session = parse_session_line(line)?;
    let vocab = ToolVocab::build(std::slice::from_ref(&session))?;
    println!("vocabulary ({} tools): {:?}", vocab.n_tools(), vocab.names());

    // The parameter hash is MD5 of the canonical arguments, mod 10,000,
    // scaled to [0, 1).
    for call in &session.calls {
        println!("param_hash({}) = {}", call.args_text, param_hash(&call.args_text));
    }

    let call = &session.calls[0];
    let metadata = metadata_features(call, &vocab);
    println!("\nmetadata features (n_tools + 2 = {}): {metadata:?}", metadata.len());

    let provider = EmbeddingProvider::deterministic(384);
    for mode in [FeatureMode::Metadata, FeatureMode::Content, FeatureMode::Combined] {
        let config = FeatureConfig::new(mode, vocab.clone());
        let vector = node_features(call, &config, Some(&provider))?;
        println!("{mode:<9} node dim = {:>4}, pooled dim = {:>4}", vector.len(), config.pooled_dim());
    }

    // Featurize the whole graph and pool it: mean ‖ max over nodes — the
    // input for classical baselines and the no-graph MLP.
    let config = FeatureConfig::new(FeatureMode::Content, vocab);
    let mut graph = build_graph(&session)?;
    featurize_graph(&mut graph, &session, &config, Some(&provider))?;
    let pooled = pooled_readout(&graph.node_features)?;
    println!(
        "\npooled session vector: {} values (first 4: {:?})",
        pooled.values.len(),
        &pooled.values[..4]
    );
    Ok(())
}
