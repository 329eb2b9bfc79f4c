//! Embedding providers: the deterministic test backend, the persistent
//! append-only cache, and how a remote HTTP backend is configured.
//!
//! ```bash
//! cargo run --example embedding_cache
//! ```

use callguard::embed::{BackendKind, EmbeddingProvider, ProviderConfig};

fn main() -> callguard::Result<()> {
    let dir = std::env::temp_dir().join("callguard-embed-demo");
    std::fs::create_dir_all(&dir)?;
    let cache_path = dir.join("embeddings.cache");
    let _ = std::fs::remove_file(&cache_path);

    let config = ProviderConfig {
        backend: BackendKind::DeterministicTest,
        model_id: "deterministic-test".into(),
        dim: 384,
        endpoint: None,
        cache_path: Some(cache_path.clone()),
    };

    let provider = EmbeddingProvider::from_config(&config)?;
    let texts = ["list files in /tmp", "send report to ops", "list files in /tmp"];
    let vectors = provider.embed(&texts)?;
    println!("embedded {} texts at dim {}", vectors.len(), vectors[0].dim());
    println!("identical inputs share a vector: {}", vectors[0] == vectors[2]);
    println!("backend invocations so far: {}", provider.backend_invocations());

    // Same texts again: served from memory, no backend call.
    provider.embed(&texts)?;
    println!("after a repeat batch: {}", provider.backend_invocations());

    // A fresh provider replays the on-disk cache; the backend stays cold.
    drop(provider);
    let reopened = EmbeddingProvider::from_config(&config)?;
    let again = reopened.embed(&texts)?;
    println!(
        "reopened from {}: {} backend invocations, vectors identical: {}",
        cache_path.display(),
        reopened.backend_invocations(),
        again == vectors
    );

    // Inputs are truncated to 512 characters before embedding, so a long
    // text and its own 512-char prefix share one cache entry.
    let long = "x".repeat(10_000);
    let prefix: String = long.chars().take(512).collect();
    let pair = reopened.embed(&[&long, &prefix])?;
    println!("long text equals its 512-char prefix: {}", pair[0] == pair[1]);

    // A remote backend speaks POST {model_id, texts[]} -> {embeddings[][]};
    // the endpoint can also come from CALLGUARD_EMBED_ENDPOINT.
    let remote = ProviderConfig {
        backend: BackendKind::RemoteService,
        model_id: "all-MiniLM-L6-v2".into(),
        dim: 384,
        endpoint: Some("http://localhost:8080/embed".into()),
        cache_path: Some(cache_path),
    };
    println!(
        "\nremote config (not contacted here): endpoint {:?}, model {}",
        remote.endpoint, remote.model_id
    );
    Ok(())
}
