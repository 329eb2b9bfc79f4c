//! Sentence-embedding provider with interchangeable backends and an
//! append-only on-disk cache.
//!
//! Two backends are available behind one interface:
//!
//! * `deterministic_test` — a hash-seeded pseudo-random embedder, stable
//!   across runs and machines, for desk-scale experiments and tests;
//! * `remote_service` — a generic HTTP endpoint speaking
//!   `POST {"model_id": ..., "texts": [...]} -> {"embeddings": [[...]]}`,
//!   compatible with common embedding servers. The endpoint can be
//!   overridden with the `CALLGUARD_EMBED_ENDPOINT` environment variable.
//!
//! Inputs are truncated to 512 characters before embedding, and the cache
//! is keyed by a digest of `(model_id, truncated text)`, so texts equal
//! after truncation share one entry. Vectors are returned exactly as the
//! backend produced them; whether they are L2-normalized is the backend's
//! convention (the deterministic backend normalizes to unit norm).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::fnv1a64;

/// Character budget applied to every input before embedding.
pub const TRUNCATION_CHARS: usize = 512;
/// Reference embedding width.
pub const DEFAULT_DIM: usize = 384;

/// A fixed-dimension embedding; all values finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    DeterministicTest,
    RemoteService,
}

/// Provider configuration; `remote_service` requires an endpoint (inline or
/// via `CALLGUARD_EMBED_ENDPOINT`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub backend: BackendKind,
    pub model_id: String,
    pub dim: usize,
    pub endpoint: Option<String>,
    pub cache_path: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            backend: BackendKind::DeterministicTest,
            model_id: "deterministic-test".into(),
            dim: DEFAULT_DIM,
            endpoint: None,
            cache_path: None,
        }
    }
}

/// Truncate to the first `limit` Unicode scalar values.
pub fn truncate_chars(text: &str, limit: usize) -> &str {
    match text.char_indices().nth(limit) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}

/// Deterministic test embedding with the qualitative shape of a sentence
/// encoder: texts sharing content land near each other.
///
/// The truncated text is split into alphanumeric runs; each run adds a
/// fixed sparse pseudo-random vector seeded from a 64-bit hash of the run,
/// and the sum is normalized to unit Euclidean norm. Exact IEEE arithmetic
/// only, so the output is bitwise stable across runs and machines. Texts
/// with no alphanumeric content map to the first basis vector.
pub fn embed_deterministic(text: &str, dim: usize) -> EmbeddingVector {
    let truncated = truncate_chars(text, TRUNCATION_CHARS);
    let mut values = vec![0.0; dim];
    if dim == 0 {
        return EmbeddingVector { values };
    }
    let mut any = false;
    for token in truncated
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
    {
        any = true;
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(token.as_bytes()));
        let active = dim.min(8);
        let mut filled = 0;
        let mut touched = Vec::with_capacity(active);
        while filled < active {
            let idx = (rng.next_u64() % dim as u64) as usize;
            if touched.contains(&idx) {
                continue;
            }
            touched.push(idx);
            // 53 random bits -> [0, 2) -> [-1, 1); all steps exact.
            let v = (rng.next_u64() >> 11) as f64 * (2.0_f64).powi(-52) - 1.0;
            values[idx] += if v == 0.0 { 0.5 } else { v };
            filled += 1;
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if any && norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    } else {
        values.fill(0.0);
        values[0] = 1.0;
    }
    EmbeddingVector { values }
}

trait Backend: Send + Sync {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;
}

struct DeterministicBackend {
    dim: usize,
}

impl Backend for DeterministicBackend {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| embed_deterministic(t, self.dim)).collect())
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    model_id: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    embeddings: Vec<Vec<f64>>,
}

struct RemoteBackend {
    endpoint: String,
    model_id: String,
    agent: ureq::Agent,
}

impl Backend for RemoteBackend {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let request = RemoteRequest {
            model_id: &self.model_id,
            texts,
        };
        let body = serde_json::to_value(&request)?;
        let response = self
            .agent
            .post(&self.endpoint)
            .send_json(body)
            .map_err(|e| Error::Transport(format!("{}: {e}", self.endpoint)))?;
        let parsed: RemoteResponse = response
            .into_json()
            .map_err(|e| Error::Transport(format!("decoding response: {e}")))?;
        if parsed.embeddings.len() != texts.len() {
            return Err(Error::Integrity(format!(
                "endpoint returned {} embeddings for {} texts",
                parsed.embeddings.len(),
                texts.len()
            )));
        }
        Ok(parsed
            .embeddings
            .into_iter()
            .map(|values| EmbeddingVector { values })
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    dim: usize,
    values: Vec<f64>,
}

/// Embedding provider: truncation, backend dispatch, and caching.
///
/// The in-memory cache is always on; when a cache path is configured,
/// entries persist as one JSON record per line and are replayed on open.
pub struct EmbeddingProvider {
    backend: Box<dyn Backend>,

    model_id: String,
    dim: usize,
    cache: Mutex<HashMap<String, Vec<f64>>>,
    cache_file: Option<Mutex<std::fs::File>>,
    backend_calls: AtomicUsize,
}

impl std::fmt::Debug for EmbeddingProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingProvider")
            .field("model_id", &self.model_id)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl EmbeddingProvider {
    pub fn from_config(config: &ProviderConfig) -> Result<Self> {
        let backend: Box<dyn Backend> = match config.backend {
            BackendKind::DeterministicTest => Box::new(DeterministicBackend { dim: config.dim }),
            BackendKind::RemoteService => {
                let endpoint = std::env::var("CALLGUARD_EMBED_ENDPOINT")
                    .ok()
                    .filter(|e| !e.is_empty())
                    .or_else(|| config.endpoint.clone())
                    .ok_or_else(|| {
                        Error::Config(
                            "remote_service backend requires an endpoint \
                             (config or CALLGUARD_EMBED_ENDPOINT)"
                                .into(),
                        )
                    })?;
                Box::new(RemoteBackend {
                    endpoint,
                    model_id: config.model_id.clone(),
                    agent: ureq::AgentBuilder::new()
                        .timeout(std::time::Duration::from_secs(60))
                        .build(),
                })
            }
        };
        let mut provider = EmbeddingProvider {
            backend,
            model_id: config.model_id.clone(),
            dim: config.dim,
            cache: Mutex::new(HashMap::new()),
            cache_file: None,
            backend_calls: AtomicUsize::new(0),
        };
        if let Some(path) = &config.cache_path {
            provider.attach_cache(path)?;
        }
        Ok(provider)
    }

    /// A provider over the deterministic test backend, no persistence.
    pub fn deterministic(dim: usize) -> Self {
        EmbeddingProvider::from_config(&ProviderConfig {
            dim,
            ..ProviderConfig::default()
        })
        .expect("deterministic provider cannot fail")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Number of backend batch invocations so far (cache effectiveness).
    pub fn backend_invocations(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    fn attach_cache(&mut self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut map = HashMap::new();
        if path.exists() {
            let reader = std::io::BufReader::new(std::fs::File::open(path)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(rec) if rec.dim == self.dim && rec.values.len() == rec.dim => {
                        map.insert(rec.key, rec.values);
                    }
                    Ok(rec) => {
                        log::warn!(
                            "embedding cache {}:{}: dim {} does not match provider dim {}; entry skipped",
                            path.display(),
                            lineno + 1,
                            rec.dim,
                            self.dim
                        );
                    }
                    Err(e) => {
                        log::warn!(
                            "embedding cache {}:{}: corrupt entry skipped ({e})",
                            path.display(),
                            lineno + 1
                        );
                    }
                }
            }
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        self.cache = Mutex::new(map);
        self.cache_file = Some(Mutex::new(file));
        Ok(())
    }

    fn cache_key(&self, truncated: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model_id.as_bytes());
        hasher.update([0x1f]);
        hasher.update(truncated.as_bytes());
        hex_string(&hasher.finalize())
    }

    /// Embed texts in order: truncate, serve cache hits, batch the misses
    /// through the backend, persist new entries.
    pub fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let truncated: Vec<&str> = texts
            .iter()
            .map(|t| truncate_chars(t, TRUNCATION_CHARS))
            .collect();
        let keys: Vec<String> = truncated.iter().map(|t| self.cache_key(t)).collect();

        let mut misses: Vec<(String, &str)> = Vec::new();
        {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            for (key, text) in keys.iter().zip(&truncated) {
                if !cache.contains_key(key) && seen.insert(key.clone()) {
                    misses.push((key.clone(), text));
                }
            }
        }

        if !misses.is_empty() {
            let miss_texts: Vec<&str> = misses.iter().map(|(_, t)| *t).collect();
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            let vectors = self.backend.embed_batch(&miss_texts)?;
            for ((key, _), vector) in misses.iter().zip(&vectors) {
                if vector.dim() != self.dim {
                    return Err(Error::Integrity(format!(
                        "backend returned dim {} but provider dim is {}",
                        vector.dim(),
                        self.dim
                    )));
                }
                if vector.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Integrity("backend returned non-finite values".into()));
                }
                self.store(key, &vector.values)?;
            }
        }

        let cache = self.cache.lock().expect("cache lock");
        Ok(keys
            .iter()
            .map(|key| EmbeddingVector {
                values: cache.get(key).expect("entry just stored").clone(),
            })
            .collect())
    }

    fn store(&self, key: &str, values: &[f64]) -> Result<()> {
        if let Some(file) = &self.cache_file {
            let record = CacheRecord {
                key: key.to_string(),
                dim: values.len(),
                values: values.to_vec(),
            };
            let mut file = file.lock().expect("cache file lock");
            serde_json::to_writer(&mut *file, &record)?;
            file.write_all(b"\n")?;
        }
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key.to_string(), values.to_vec());
        Ok(())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write;
        write!(s, "{b:02x}").expect("writing to string");
    }
    s
}
