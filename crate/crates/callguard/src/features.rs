//! Node feature extraction and the pooled session-level representation.
//!
//! Three feature modes are supported per node (tool call):
//!
//! * metadata (`n_tools + 2`): one-hot tool identity, normalized parameter
//!   hash, normalized response length;
//! * content (`2 × 384 = 768`): sentence embeddings of the serialized
//!   arguments and of the tool response, concatenated;
//! * combined (`n_tools + 770`): metadata followed by content.
//!
//! The session-level representation pools node features coordinatewise:
//! mean concatenated with max (`2d`), which is also the input the no-graph
//! MLP and the classical baselines consume.

use md5::{Digest, Md5};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingProvider, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::graph::SessionGraph;
use crate::session::{Session, ToolCall, ToolVocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Metadata,
    Content,
    Combined,
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureMode::Metadata => "metadata",
            FeatureMode::Content => "content",
            FeatureMode::Combined => "combined",
        })
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metadata" => Ok(FeatureMode::Metadata),
            "content" => Ok(FeatureMode::Content),
            "combined" => Ok(FeatureMode::Combined),
            other => Err(Error::Config(format!(
                "unknown feature mode {other:?} (metadata|content|combined)"
            ))),
        }
    }
}

/// Feature-mode selection plus the constants that fix dimensionality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    pub vocab: ToolVocab,
    pub embedding_dim: usize,
    pub response_cap: usize,
    pub hash_modulus: u64,
}

impl FeatureConfig {
    pub fn new(mode: FeatureMode, vocab: ToolVocab) -> Self {
        FeatureConfig {
            mode,
            vocab,
            embedding_dim: DEFAULT_DIM,
            response_cap: 10_000,
            hash_modulus: 10_000,
        }
    }

    /// Per-node feature width for this configuration.
    pub fn node_dim(&self) -> usize {
        let metadata = self.vocab.n_tools() + 2;
        let content = 2 * self.embedding_dim;
        match self.mode {
            FeatureMode::Metadata => metadata,
            FeatureMode::Content => content,
            FeatureMode::Combined => metadata + content,
        }
    }

    /// Width of the pooled (mean ‖ max) session vector.
    pub fn pooled_dim(&self) -> usize {
        2 * self.node_dim()
    }

    pub fn needs_provider(&self) -> bool {
        !matches!(self.mode, FeatureMode::Metadata)
    }

    /// Content digest of the configuration, recorded in model artifacts.
    pub fn digest(&self) -> String {
        use sha2::Digest as _;
        let canonical = serde_json::to_string(self).expect("feature config serializes");
        let mut hasher = sha2::Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Normalized parameter hash: MD5 of the canonical serialized arguments,
/// interpreted as a big-endian unsigned integer, modulo 10,000, scaled to
/// `[0, 1)`.
pub fn param_hash(args_text: &str) -> f64 {
    param_hash_with(args_text, 10_000)
}

pub fn param_hash_with(args_text: &str, modulus: u64) -> f64 {
    let digest = Md5::digest(args_text.as_bytes());
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest);
    let value = u128::from_be_bytes(bytes);
    (value % u128::from(modulus)) as f64 / modulus as f64
}

/// Metadata node features: one-hot tool ‖ parameter hash ‖ capped,
/// normalized response length. Tools absent from the vocabulary produce an
/// all-zeros one-hot block.
pub fn metadata_features(call: &ToolCall, vocab: &ToolVocab) -> Vec<f64> {
    metadata_features_with(call, vocab, 10_000, 10_000)
}

fn metadata_features_with(
    call: &ToolCall,
    vocab: &ToolVocab,
    hash_modulus: u64,
    response_cap: usize,
) -> Vec<f64> {
    let mut features = vec![0.0; vocab.n_tools() + 2];
    if let Some(idx) = vocab.index_of(&call.tool_name) {
        features[idx] = 1.0;
    }
    features[vocab.n_tools()] = param_hash_with(&call.args_text, hash_modulus);
    features[vocab.n_tools() + 1] =
        call.response_length.min(response_cap) as f64 / response_cap as f64;
    features
}

/// Content node features: embedding of the serialized arguments followed by
/// the embedding of the response (each truncated to 512 characters by the
/// provider).
pub fn content_features(call: &ToolCall, provider: &EmbeddingProvider) -> Result<Vec<f64>> {
    let pair = provider.embed(&[&call.args_text, &call.response_text])?;
    let mut out = pair[0].values.clone();
    out.extend_from_slice(&pair[1].values);
    Ok(out)
}

/// Node features under `config`, dispatching on the mode.
pub fn node_features(
    call: &ToolCall,
    config: &FeatureConfig,
    provider: Option<&EmbeddingProvider>,
) -> Result<Vec<f64>> {
    let content = |provider: Option<&EmbeddingProvider>| -> Result<Vec<f64>> {
        let provider = provider.ok_or_else(|| {
            Error::Config(format!(
                "feature mode {} requires an embedding provider",
                config.mode
            ))
        })?;
        if provider.dim() != config.embedding_dim {
            return Err(Error::Config(format!(
                "provider dim {} does not match configured embedding dim {}",
                provider.dim(),
                config.embedding_dim
            )));
        }
        content_features(call, provider)
    };
    match config.mode {
        FeatureMode::Metadata => Ok(metadata_features_with(
            call,
            &config.vocab,
            config.hash_modulus,
            config.response_cap,
        )),
        FeatureMode::Content => content(provider),
        FeatureMode::Combined => {
            let mut out = metadata_features_with(
                call,
                &config.vocab,
                config.hash_modulus,
                config.response_cap,
            );
            out.extend(content(provider)?);
            Ok(out)
        }
    }
}

/// Session-level dual readout over raw node features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledFeatures {
    pub values: Vec<f64>,
}

/// Coordinatewise mean over nodes concatenated with coordinatewise max.
/// Each column is summed in sorted order, so the output is bitwise
/// invariant to node permutations.
pub fn pooled_readout(node_matrix: &Array2<f64>) -> Result<PooledFeatures> {
    let (n, d) = node_matrix.dim();
    if n == 0 {
        return Err(Error::Validation("pooled_readout: no nodes".into()));
    }
    let mut values = Vec::with_capacity(2 * d);
    let mut column = Vec::with_capacity(n);
    for c in 0..d {
        column.clear();
        column.extend(node_matrix.column(c).iter().copied());
        column.sort_unstable_by(f64::total_cmp);
        values.push(column.iter().sum::<f64>() / n as f64);
    }
    for c in 0..d {
        values.push(
            node_matrix
                .column(c)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        );
    }
    Ok(PooledFeatures { values })
}

/// Fill `graph.node_features` for one session's graph.
pub fn featurize_graph(
    graph: &mut SessionGraph,
    session: &Session,
    config: &FeatureConfig,
    provider: Option<&EmbeddingProvider>,
) -> Result<()> {
    debug_assert_eq!(graph.n_nodes, session.calls.len());
    let d = config.node_dim();
    let mut matrix = Array2::zeros((graph.n_nodes, d));
    for (i, call) in session.calls.iter().enumerate() {
        let row = node_features(call, config, provider)?;
        matrix
            .row_mut(i)
            .assign(&Array1::from_vec(row));
    }
    graph.node_features = matrix;
    Ok(())
}

/// Build and featurize graphs for a whole corpus in order.
pub fn featurize_sessions(
    sessions: &[Session],
    config: &FeatureConfig,
    provider: Option<&EmbeddingProvider>,
    graph_config: &crate::graph::GraphConfig,
) -> Result<Vec<SessionGraph>> {
    sessions
        .iter()
        .map(|s| {
            let mut g = crate::graph::build_graph_with(s, graph_config)?;
            featurize_graph(&mut g, s, config, provider)?;
            Ok(g)
        })
        .collect()
}

/// Pooled rows for a featurized corpus: one row per graph.
pub fn pooled_matrix(graphs: &[SessionGraph]) -> Result<Array2<f64>> {
    if graphs.is_empty() {
        return Err(Error::Validation("pooled_matrix: no graphs".into()));
    }
    let dim = 2 * graphs[0].node_features.ncols();
    let mut out = Array2::zeros((graphs.len(), dim));
    for (i, g) in graphs.iter().enumerate() {
        let pooled = pooled_readout(&g.node_features)?;
        out.row_mut(i).assign(&Array1::from_vec(pooled.values));
    }
    Ok(out)
}

// Wire form of the featurized-corpus dump.
#[derive(Serialize, Deserialize)]
struct FeatureDump<'a> {
    session_id: &'a str,
    n_nodes: usize,
    dim: usize,
    nodes: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    label: crate::session::Label,
}

/// Dump featurized graphs: per session, the node matrix and pooled vector
/// with an explicit dim header, one JSON record per line.
pub fn write_feature_dump<W: std::io::Write>(graphs: &[SessionGraph], mut out: W) -> Result<()> {
    for g in graphs {
        let pooled = pooled_readout(&g.node_features)?;
        let dump = FeatureDump {
            session_id: &g.session_id,
            n_nodes: g.n_nodes,
            dim: g.node_features.ncols(),
            nodes: g
                .node_features
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            pooled: pooled.values,
            label: g.label,
        };
        serde_json::to_writer(&mut out, &dump)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::Label;
    use ndarray::array;

    fn call_with(tool: &str, args: &str, response_len: usize) -> ToolCall {
        ToolCall::new(0, tool.into(), args.into(), "x".repeat(response_len))
    }

    fn vocab_ab() -> ToolVocab {
        let s = Session {
            session_id: "v".into(),
            source: "t".into(),
            task_id: None,
            label: Label::Benign,
            attack_mode: None,
            calls: vec![
                ToolCall::new(0, "a".into(), "{}".into(), String::new()),
                ToolCall::new(1, "b".into(), "{}".into(), String::new()),
            ],
        };
        ToolVocab::build(&[s]).unwrap()
    }

    // Reference values computed with an independent MD5 implementation
    // (RFC 1321): digest as big-endian integer, mod 10,000, over 10,000.
    #[test]
    fn param_hash_matches_reference_md5() {
        assert_eq!(param_hash("{}"), 0.0203);
        assert_eq!(param_hash(""), 0.8366);
        assert_eq!(param_hash(r#"{"a":2,"b":1}"#), 0.4661);
        assert_eq!(param_hash("hello world"), 0.4291);
    }

    #[test]
    fn param_hash_is_deterministic_and_bounded() {
        let a = param_hash("same input");
        assert_eq!(a, param_hash("same input"));
        for s in ["", "x", "{}", "long ".repeat(300).as_str()] {
            let v = param_hash(s);
            assert!((0.0..=0.9999).contains(&v), "{v} out of range for {s:?}");
        }
    }

    #[test]
    fn param_hash_is_roughly_uniform() {
        // Monte-Carlo: no 0.1-wide bin deviates from 0.1 by more than 0.03.
        let n = 10_000;
        let mut bins = [0usize; 10];
        for i in 0..n {
            let v = param_hash(&format!("probe-string-{i}"));
            bins[((v * 10.0) as usize).min(9)] += 1;
        }
        for (b, count) in bins.iter().enumerate() {
            let freq = *count as f64 / n as f64;
            assert!((freq - 0.1).abs() <= 0.03, "bin {b}: {freq}");
        }
    }

    #[test]
    fn metadata_features_one_hot_hash_and_length() {
        let vocab = vocab_ab();
        let f = metadata_features(&call_with("b", "{}", 5000), &vocab);
        assert_eq!(f.len(), 4);
        assert_eq!(&f[..2], &[0.0, 1.0]);
        assert_eq!(f[2], 0.0203); // param_hash("{}")
        assert_eq!(f[3], 0.5);
    }

    #[test]
    fn response_length_saturates_at_cap() {
        let vocab = vocab_ab();
        let f = metadata_features(&call_with("a", "{}", 25_000), &vocab);
        assert_eq!(f[3], 1.0);
    }

    #[test]
    fn unseen_tool_gets_zero_block() {
        let vocab = vocab_ab();
        let f = metadata_features(&call_with("zzz", "{}", 0), &vocab);
        assert_eq!(&f[..2], &[0.0, 0.0]);
    }

    #[test]
    fn content_features_concatenate_args_and_response() {
        let provider = EmbeddingProvider::deterministic(384);
        let call = ToolCall::new(0, "a".into(), "args here".into(), "resp here".into());
        let f = content_features(&call, &provider).unwrap();
        assert_eq!(f.len(), 768);
        let expected = crate::embed::embed_deterministic("args here", 384);
        assert_eq!(&f[..384], expected.values.as_slice());
        // Identical calls produce identical vectors.
        let g = content_features(&call, &provider).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn node_dims_match_config_for_all_modes() {
        let vocab = vocab_ab();
        let provider = EmbeddingProvider::deterministic(384);
        let call = ToolCall::new(0, "a".into(), "{}".into(), "r".into());
        for (mode, want) in [
            (FeatureMode::Metadata, 4),
            (FeatureMode::Content, 768),
            (FeatureMode::Combined, 772),
        ] {
            let config = FeatureConfig::new(mode, vocab.clone());
            assert_eq!(config.node_dim(), want);
            let f = node_features(&call, &config, Some(&provider)).unwrap();
            assert_eq!(f.len(), want, "{mode}");
        }
    }

    #[test]
    fn combined_dim_with_34_tools_is_804() {
        // n_tools + 770 with the reference tool count.
        let calls: Vec<ToolCall> = (0..34)
            .map(|i| ToolCall::new(i, format!("tool_{i:02}"), "{}".into(), String::new()))
            .collect();
        let s = Session {
            session_id: "many".into(),
            source: "t".into(),
            task_id: None,
            label: Label::Benign,
            attack_mode: None,
            calls,
        };
        let vocab = ToolVocab::build(&[s]).unwrap();
        let config = FeatureConfig::new(FeatureMode::Combined, vocab);
        assert_eq!(config.node_dim(), 804);
        assert_eq!(config.pooled_dim(), 1608);
    }

    #[test]
    fn content_mode_without_provider_is_config_error() {
        let config = FeatureConfig::new(FeatureMode::Content, vocab_ab());
        let call = ToolCall::new(0, "a".into(), "{}".into(), String::new());
        assert!(matches!(
            node_features(&call, &config, None).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn pooled_readout_mean_then_max() {
        let m = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(pooled_readout(&m).unwrap().values, vec![2.0, 3.0, 3.0, 4.0]);
        let single = array![[5.0, -1.0]];
        assert_eq!(
            pooled_readout(&single).unwrap().values,
            vec![5.0, -1.0, 5.0, -1.0]
        );
    }

    #[test]
    fn pooled_readout_rejects_empty() {
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(matches!(
            pooled_readout(&empty).unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn pooled_readout_is_permutation_invariant() {
        let m = array![[1.0, -2.0, 0.5], [0.0, 7.0, -3.0], [4.0, 7.0, 2.0]];
        let p = array![[4.0, 7.0, 2.0], [1.0, -2.0, 0.5], [0.0, 7.0, -3.0]];
        assert_eq!(pooled_readout(&m).unwrap(), pooled_readout(&p).unwrap());
    }
}
