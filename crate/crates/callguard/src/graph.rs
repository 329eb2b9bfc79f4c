//! Session-to-graph encoding.
//!
//! Each session becomes a graph with one node per tool call and two edge
//! types, both stored bidirectionally so message passing is symmetric:
//!
//! * sequential edges between consecutive calls;
//! * data-flow edges from call `i` to a later call `j` whose arguments
//!   contain either the response prefix of call `i` (first 50 characters)
//!   or one of its first five whitespace-delimited response tokens longer
//!   than 4 characters.
//!
//! Responses longer than 1,000 characters are skipped wholesale (both
//! rules), and empty or whitespace-only responses produce no data-flow
//! edges. Single-call sessions get a self-loop so every node has a
//! well-defined neighborhood.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{AttackMode, Label, Session, ToolCall};

/// Edge type tag. Message passing treats all kinds alike; the tag is kept
/// for inspection and dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Sequential,
    DataFlow,
    SelfLoop,
}

/// One directed adjacency entry; undirected edges appear as two entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn new(src: usize, dst: usize, kind: EdgeKind) -> Self {
        Edge { src, dst, kind }
    }
}

/// Knobs of the encoding. Defaults follow the reference setup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Response prefix window used by the substring rule.
    pub data_flow_window: usize,
    /// Responses longer than this many characters emit no data-flow edges.
    pub response_skip_over: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            data_flow_window: 50,
            response_skip_over: 1000,
        }
    }
}

/// A session encoded as a graph; the unit of classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionGraph {
    pub session_id: String,
    pub n_nodes: usize,
    pub edges: Vec<Edge>,
    /// n × d node feature matrix; zero columns until featurization.
    pub node_features: Array2<f64>,
    pub label: Label,
    pub attack_mode: Option<AttackMode>,
    pub task_id: Option<String>,
}

impl SessionGraph {
    pub fn is_attack(&self) -> bool {
        self.label == Label::Attack
    }

    /// Degree (number of distinct incident entries) of each node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n_nodes];
        for e in &self.edges {
            deg[e.dst] += 1;
        }
        deg
    }
}

/// Bidirectional entries linking consecutive calls: `2(n-1)` for `n >= 2`,
/// empty for `n = 1` (the self-loop is added by [`build_graph`]).
pub fn sequential_edges(n: usize) -> Result<Vec<Edge>> {
    if n == 0 {
        return Err(Error::Validation("sequential_edges: node count is zero".into()));
    }
    let mut edges = Vec::with_capacity(2 * n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        edges.push(Edge::new(i, i + 1, EdgeKind::Sequential));
        edges.push(Edge::new(i + 1, i, EdgeKind::Sequential));
    }
    Ok(edges)
}

/// Prefix of `text` spanning its first `window` characters.
fn char_prefix(text: &str, window: usize) -> &str {
    match text.char_indices().nth(window) {
        Some((byte_idx, _)) => &text[..byte_idx],
        None => text,
    }
}

/// The response-side match material: prefix plus qualifying tokens.
struct ResponseProbe<'a> {
    prefix: &'a str,
    tokens: Vec<&'a str>,
}

fn response_probe<'a>(call: &'a ToolCall, config: &GraphConfig) -> Option<ResponseProbe<'a>> {
    let resp = call.response_text.as_str();
    if resp.trim().is_empty() || call.response_length > config.response_skip_over {
        return None;
    }
    // "Among the first five": the window of five is taken in reading order
    // before the length filter qualifies tokens within it.
    let tokens = resp
        .split_whitespace()
        .take(5)
        .filter(|t| t.chars().count() > 4)
        .collect();
    Some(ResponseProbe {
        prefix: char_prefix(resp, config.data_flow_window),
        tokens,
    })
}

/// Data-flow edges under the default configuration.
pub fn data_flow_edges(calls: &[ToolCall]) -> Vec<Edge> {
    data_flow_edges_with(calls, &GraphConfig::default())
}

/// Data-flow edges for every pair `i < j` where the response of call `i`
/// feeds the arguments of call `j`; both directions emitted, duplicates
/// collapsed.
pub fn data_flow_edges_with(calls: &[ToolCall], config: &GraphConfig) -> Vec<Edge> {
    let probes: Vec<Option<ResponseProbe<'_>>> =
        calls.iter().map(|c| response_probe(c, config)).collect();
    let mut edges = Vec::new();
    for i in 0..calls.len() {
        let Some(probe) = &probes[i] else { continue };
        for (j, later) in calls.iter().enumerate().skip(i + 1) {
            let args = later.args_text.as_str();
            let hit = args.contains(probe.prefix)
                || probe.tokens.iter().any(|t| args.contains(t));
            if hit {
                edges.push(Edge::new(i, j, EdgeKind::DataFlow));
                edges.push(Edge::new(j, i, EdgeKind::DataFlow));
            }
        }
    }
    edges
}

/// Encode a session under the default configuration.
pub fn build_graph(session: &Session) -> Result<SessionGraph> {
    build_graph_with(session, &GraphConfig::default())
}

/// Encode a session: sequential ∪ data-flow edges, deduplicated by
/// `(src, dst, kind)`; a lone self-loop for single-call sessions.
pub fn build_graph_with(session: &Session, config: &GraphConfig) -> Result<SessionGraph> {
    session.validate()?;
    let n = session.calls.len();
    let mut edges = if n == 1 {
        vec![Edge::new(0, 0, EdgeKind::SelfLoop)]
    } else {
        let mut edges = sequential_edges(n)?;
        edges.extend(data_flow_edges_with(&session.calls, config));
        edges.sort_unstable();
        edges.dedup();
        edges
    };
    edges.sort_unstable();
    Ok(SessionGraph {
        session_id: session.session_id.clone(),
        n_nodes: n,
        edges,
        node_features: Array2::zeros((n, 0)),
        label: session.label,
        attack_mode: session.attack_mode.clone(),
        task_id: session.task_id.clone(),
    })
}

// Wire form of the graph dump (debugging interface).
#[derive(Serialize, Deserialize)]
struct GraphDump<'a> {
    session_id: &'a str,
    n_nodes: usize,
    edges: Vec<(usize, usize, EdgeKind)>,
    label: Label,
}

/// Write graphs as JSON lines: node count, typed edge list, label.
pub fn write_graph_dump<W: std::io::Write>(graphs: &[SessionGraph], mut out: W) -> Result<()> {
    for g in graphs {
        let dump = GraphDump {
            session_id: &g.session_id,
            n_nodes: g.n_nodes,
            edges: g.edges.iter().map(|e| (e.src, e.dst, e.kind)).collect(),
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
    use std::collections::BTreeSet;

    fn call(i: usize, args: &str, resp: &str) -> ToolCall {
        ToolCall::new(i, format!("tool{i}"), args.into(), resp.into())
    }

    fn session_of(calls: Vec<ToolCall>) -> Session {
        Session {
            session_id: "g".into(),
            source: "test".into(),
            task_id: None,
            label: Label::Benign,
            attack_mode: None,
            calls,
        }
    }

    fn pairs(edges: &[Edge]) -> BTreeSet<(usize, usize)> {
        edges.iter().map(|e| (e.src, e.dst)).collect()
    }

    #[test]
    fn sequential_edges_cover_both_directions() {
        let e = sequential_edges(3).unwrap();
        assert_eq!(e.len(), 4);
        assert_eq!(pairs(&e), BTreeSet::from([(0, 1), (1, 0), (1, 2), (2, 1)]));
        assert!(sequential_edges(1).unwrap().is_empty());
        assert_eq!(pairs(&sequential_edges(2).unwrap()), BTreeSet::from([(0, 1), (1, 0)]));
        assert!(matches!(sequential_edges(0).unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn token_rule_links_identifier_propagation() {
        let calls = vec![
            call(0, "{}", "file_12345 written ok"),
            call(1, r#"{"path":"file_12345"}"#, ""),
        ];
        let e = data_flow_edges(&calls);
        assert_eq!(pairs(&e), BTreeSet::from([(0, 1), (1, 0)]));
    }

    #[test]
    fn short_tokens_do_not_qualify() {
        // No token longer than 4 chars and the prefix does not occur in args.
        let calls = vec![
            call(0, "{}", "abcd ok no yes it"),
            call(1, r#"{"x":"abcd"}"#, ""),
        ];
        assert!(data_flow_edges(&calls).is_empty());
    }

    #[test]
    fn long_responses_are_skipped_wholesale() {
        let long = "x".repeat(1001);
        let calls = vec![
            call(0, "{}", &long),
            call(1, &format!("{{\"v\":\"{}\"}}", &long[..50]), ""),
        ];
        assert!(data_flow_edges(&calls).is_empty());
        // At exactly 1,000 characters the response still participates.
        let edge_len = "y".repeat(1000);
        let calls = vec![
            call(0, "{}", &edge_len),
            call(1, &format!("{{\"v\":\"{}\"}}", &edge_len[..50]), ""),
        ];
        assert_eq!(data_flow_edges(&calls).len(), 2);
    }

    #[test]
    fn prefix_rule_uses_whole_short_response() {
        let calls = vec![
            call(0, "{}", "tok3n-says-go"),
            call(1, r#"{"v":"tok3n-says-go and more"}"#, ""),
        ];
        // Single token of length > 4 also matches, but the point is the
        // prefix is the whole 13-char response.
        assert_eq!(data_flow_edges(&calls).len(), 2);
    }

    #[test]
    fn whitespace_only_response_produces_no_edges() {
        let calls = vec![call(0, "{}", "   \t "), call(1, r#"{"v":"   "}"#, "")];
        assert!(data_flow_edges(&calls).is_empty());
    }

    #[test]
    fn token_window_counts_before_length_filter() {
        // Sixth token is long and present in args, but only the first five
        // tokens are eligible; none of those qualifies.
        let calls = vec![
            call(0, "{}", "a b c d e longtoken99"),
            call(1, r#"{"v":"longtoken99"}"#, ""),
        ];
        assert!(data_flow_edges(&calls).is_empty());
    }

    #[test]
    fn single_call_session_gets_self_loop() {
        let g = build_graph(&session_of(vec![call(0, "{}", "hello")])).unwrap();
        assert_eq!(g.n_nodes, 1);
        assert_eq!(g.edges, vec![Edge::new(0, 0, EdgeKind::SelfLoop)]);
        assert_eq!(g.degrees(), vec![1]);
    }

    #[test]
    fn three_call_session_without_data_flow() {
        let g = build_graph(&session_of(vec![
            call(0, "{}", "ok"),
            call(1, "{}", "ok"),
            call(2, "{}", "ok"),
        ]))
        .unwrap();
        assert_eq!(g.edges.len(), 4);
        assert!(g.edges.iter().all(|e| e.kind == EdgeKind::Sequential));
        assert!(g.degrees().iter().all(|&d| d >= 1));
    }

    #[test]
    fn data_flow_union_with_sequential() {
        let g = build_graph(&session_of(vec![
            call(0, "{}", "token_abcde done"),
            call(1, r#"{"ref":"token_abcde"}"#, ""),
        ]))
        .unwrap();
        let kinds: BTreeSet<_> = g.edges.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, BTreeSet::from([EdgeKind::Sequential, EdgeKind::DataFlow]));
        // The same pair carries both kinds: 2 sequential + 2 data-flow.
        assert_eq!(g.edges.len(), 4);
    }

    #[test]
    fn symmetry_for_every_non_loop_kind() {
        let g = build_graph(&session_of(vec![
            call(0, "{}", "alpha_token_1 beta"),
            call(1, r#"{"a":"alpha_token_1"}"#, "gamma_token_2"),
            call(2, r#"{"b":"gamma_token_2"}"#, ""),
        ]))
        .unwrap();
        for e in &g.edges {
            assert!(
                g.edges.contains(&Edge::new(e.dst, e.src, e.kind)),
                "missing reverse of {e:?}"
            );
        }
    }

    #[test]
    fn graph_dump_is_one_object_per_graph() {
        let g = build_graph(&session_of(vec![call(0, "{}", "x")])).unwrap();
        let mut buf = Vec::new();
        write_graph_dump(&[g], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(v["n_nodes"], 1);
        assert_eq!(v["edges"][0][2], "self_loop");
    }
}
