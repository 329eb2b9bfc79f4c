//! The remote embedding backend against a minimal in-process HTTP server
//! speaking the `POST {model_id, texts[]} -> {embeddings[][]}` contract.

use std::io::{Read, Write};
use std::net::TcpListener;

use callguard::embed::{embed_deterministic, BackendKind, EmbeddingProvider, ProviderConfig};
use callguard::error::Error;

/// Serve `n_requests` embedding requests, answering with the deterministic
/// embedder so responses are verifiable, then stop.
fn spawn_embedding_server(
    dim: usize,
    n_requests: usize,
) -> (String, std::thread::JoinHandle<usize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut served = 0;
        for _ in 0..n_requests {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // Read until the header terminator, note the body offset.
            let body_start = loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    break pos + 4;
                }
            };
            let headers = String::from_utf8_lossy(&buf[..body_start]).to_string();
            let content_length: usize = headers
                .lines()
                .find(|l| l.to_ascii_lowercase().starts_with("content-length"))
                .and_then(|l| l.split(':').nth(1))
                .and_then(|v| v.trim().parse().ok())
                .unwrap_or(0);
            while buf.len() < body_start + content_length {
                let n = stream.read(&mut chunk).unwrap();
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&chunk[..n]);
            }
            let request: serde_json::Value = serde_json::from_slice(&buf[body_start..]).unwrap();
            let texts: Vec<String> = request["texts"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| t.as_str().unwrap().to_string())
                .collect();
            let embeddings: Vec<Vec<f64>> = texts
                .iter()
                .map(|t| embed_deterministic(t, dim).values)
                .collect();
            let payload = serde_json::json!({ "embeddings": embeddings }).to_string();
            let response = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
            served += 1;
        }
        served
    });
    (format!("http://{addr}"), handle)
}

#[test]
fn remote_backend_round_trip() {
    let (endpoint, handle) = spawn_embedding_server(16, 1);
    let provider = EmbeddingProvider::from_config(&ProviderConfig {
        backend: BackendKind::RemoteService,
        model_id: "test-model".into(),
        dim: 16,
        endpoint: Some(endpoint),
        cache_path: None,
    })
    .unwrap();
    let out = provider
        .embed(&["hello tools", "hello tools", "other"])
        .unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0], out[1]);
    assert_eq!(out[0], embed_deterministic("hello tools", 16));
    assert_eq!(out[2], embed_deterministic("other", 16));
    assert_eq!(handle.join().unwrap(), 1, "one batched request expected");
}

#[test]
fn remote_dim_mismatch_is_integrity_error() {
    let (endpoint, handle) = spawn_embedding_server(8, 1);
    let provider = EmbeddingProvider::from_config(&ProviderConfig {
        backend: BackendKind::RemoteService,
        model_id: "test-model".into(),
        dim: 32, // server returns 8
        endpoint: Some(endpoint),
        cache_path: None,
    })
    .unwrap();
    let err = provider.embed(&["x"]).unwrap_err();
    assert!(matches!(err, Error::Integrity(_)), "{err}");
    handle.join().unwrap();
}

#[test]
fn unreachable_endpoint_is_retriable_transport_error() {
    let provider = EmbeddingProvider::from_config(&ProviderConfig {
        backend: BackendKind::RemoteService,
        model_id: "test-model".into(),
        dim: 8,
        endpoint: Some("http://127.0.0.1:1".into()),
        cache_path: None,
    })
    .unwrap();
    let err = provider.embed(&["x"]).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
}
