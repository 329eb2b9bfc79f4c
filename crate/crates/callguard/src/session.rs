//! Canonical session data model for agent tool-call trajectories.
//!
//! A [`Session`] is one complete agent interaction: an ordered list of tool
//! calls, a benign/attack label, and optional task and attack-mode tags.
//! Sessions arrive as one JSON object per line in the normalized format:
//!
//! ```text
//! {"session_id": "...", "source": "...", "task_id": "..."|null,
//!  "label": "benign"|"attack", "attack_mode": "..."|null,
//!  "calls": [{"tool": "...", "arguments": {...}|"...", "response": "..."}]}
//! ```
//!
//! Arguments given as structured JSON are canonicalized (keys sorted
//! lexicographically at every level, no insignificant whitespace) so that
//! hashing and caching over `args_text` are deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Session-level ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Benign,
    Attack,
}

/// How an attack manipulated the session, when known.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackMode {
    /// Tool-call arguments were substituted or modified.
    ToolInput,
    /// Tool responses were falsified.
    ToolOutput,
    /// Both arguments and responses were manipulated.
    Both,
    /// A dataset-specific category that does not map onto the three vectors
    /// (e.g. "jailbreak"); retained as-is.
    Other(String),
}

impl AttackMode {
    pub fn from_tag(tag: &str) -> AttackMode {
        match tag {
            "tool_input" => AttackMode::ToolInput,
            "tool_output" => AttackMode::ToolOutput,
            "both" => AttackMode::Both,
            other => AttackMode::Other(other.to_string()),
        }
    }

    pub fn as_tag(&self) -> &str {
        match self {
            AttackMode::ToolInput => "tool_input",
            AttackMode::ToolOutput => "tool_output",
            AttackMode::Both => "both",
            AttackMode::Other(s) => s,
        }
    }
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_tag())
    }
}

/// A single tool invocation: one node of the session graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    /// 0-based position within the session.
    pub index: usize,
    pub tool_name: String,
    /// Canonical serialized arguments (sorted keys, minimal whitespace).
    pub args_text: String,
    pub response_text: String,
    /// Character count of `response_text` (Unicode scalar values).
    pub response_length: usize,
}

impl ToolCall {
    pub fn new(index: usize, tool_name: String, args_text: String, response_text: String) -> Self {
        let response_length = response_text.chars().count();
        ToolCall {
            index,
            tool_name,
            args_text,
            response_text,
            response_length,
        }
    }
}

/// A normalized agent trajectory; the unit of classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    /// Unique within a corpus.
    pub session_id: String,
    /// Dataset tag the session was adapted from.
    pub source: String,
    pub task_id: Option<String>,
    pub label: Label,
    pub attack_mode: Option<AttackMode>,
    pub calls: Vec<ToolCall>,
}

impl Session {
    /// Check every data-model invariant, returning the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.calls.is_empty() {
            return Err(Error::Validation(format!(
                "session {}: calls must be non-empty",
                self.session_id
            )));
        }
        if self.label == Label::Benign && self.attack_mode.is_some() {
            return Err(Error::Validation(format!(
                "session {}: attack_mode present on a benign session",
                self.session_id
            )));
        }
        for (i, call) in self.calls.iter().enumerate() {
            if call.index != i {
                return Err(Error::Validation(format!(
                    "session {}: call index {} at position {} is not contiguous",
                    self.session_id, call.index, i
                )));
            }
            if call.response_length != call.response_text.chars().count() {
                return Err(Error::Validation(format!(
                    "session {}: call {} response_length does not match response_text",
                    self.session_id, i
                )));
            }
        }
        Ok(())
    }

    pub fn is_attack(&self) -> bool {
        self.label == Label::Attack
    }
}

/// Canonicalize a JSON arguments value into `args_text`.
///
/// Strings are taken verbatim (they are already a serialization); any other
/// value is re-serialized with keys sorted at every nesting level and no
/// insignificant whitespace.
pub fn canonical_args(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        // serde_json maps are BTreeMap-backed here, so nested objects
        // serialize with lexicographically sorted keys.
        other => other.to_string(),
    }
}

// Wire form of the normalized session format.
#[derive(Serialize, Deserialize)]
struct WireSession {
    session_id: String,
    source: String,
    task_id: Option<String>,
    label: String,
    attack_mode: Option<String>,
    calls: Vec<WireCall>,
}

#[derive(Serialize, Deserialize)]
struct WireCall {
    tool: String,
    arguments: serde_json::Value,
    response: String,
}

/// Parse one line of the normalized session format.
pub fn parse_session_line(line: &str) -> Result<Session> {
    let wire: WireSession = serde_json::from_str(line)
        .map_err(|e| Error::Parse(format!("normalized session record: {e}")))?;
    let label = match wire.label.as_str() {
        "benign" => Label::Benign,
        "attack" => Label::Attack,
        other => {
            return Err(Error::Parse(format!(
                "field `label`: expected \"benign\" or \"attack\", got {other:?}"
            )))
        }
    };
    let calls = wire
        .calls
        .into_iter()
        .enumerate()
        .map(|(i, c)| ToolCall::new(i, c.tool, canonical_args(&c.arguments), c.response))
        .collect();
    let session = Session {
        session_id: wire.session_id,
        source: wire.source,
        task_id: wire.task_id,
        label,
        attack_mode: wire.attack_mode.map(|t| AttackMode::from_tag(&t)),
        calls,
    };
    session.validate()?;
    Ok(session)
}

/// Serialize a session back into one line of the normalized format.
///
/// `parse_session_line(serialize_session(s)) == s` for every valid session:
/// arguments are written as the already-canonical `args_text` string.
pub fn serialize_session(session: &Session) -> String {
    let wire = WireSession {
        session_id: session.session_id.clone(),
        source: session.source.clone(),
        task_id: session.task_id.clone(),
        label: match session.label {
            Label::Benign => "benign".to_string(),
            Label::Attack => "attack".to_string(),
        },
        attack_mode: session.attack_mode.as_ref().map(|m| m.as_tag().to_string()),
        calls: session
            .calls
            .iter()
            .map(|c| WireCall {
                tool: c.tool_name.clone(),
                arguments: serde_json::Value::String(c.args_text.clone()),
                response: c.response_text.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("session serialization cannot fail")
}

/// The tool-name vocabulary that fixes metadata feature dimensionality.
///
/// Built from the training partition only; tools unseen at test time map to
/// the all-zeros one-hot block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolVocab {
    names: Vec<String>,
}

impl ToolVocab {
    /// Sorted distinct tool names over all calls of `sessions`.
    pub fn build(sessions: &[Session]) -> Result<ToolVocab> {
        Self::build_iter(sessions.iter())
    }

    /// Like [`ToolVocab::build`] over any session iterator.
    pub fn build_iter<'a>(sessions: impl IntoIterator<Item = &'a Session>) -> Result<ToolVocab> {
        let mut any = false;
        let mut names = BTreeSet::new();
        for s in sessions {
            any = true;
            for c in &s.calls {
                names.insert(c.tool_name.clone());
            }
        }
        if !any {
            return Err(Error::Validation(
                "cannot build a tool vocabulary from an empty session list".into(),
            ));
        }
        Ok(ToolVocab {
            names: names.into_iter().collect(),
        })
    }

    pub fn n_tools(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, tool_name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(tool_name)).ok()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Corpus-level counts for reporting and sanity checks.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub benign: usize,
    pub attack: usize,
    pub by_source: BTreeMap<String, usize>,
    pub by_attack_mode: BTreeMap<String, usize>,
    pub distinct_tasks: usize,
    pub distinct_tools: usize,
}

pub fn corpus_stats(sessions: &[Session]) -> CorpusStats {
    let mut stats = CorpusStats {
        total: sessions.len(),
        ..CorpusStats::default()
    };
    let mut tasks = BTreeSet::new();
    let mut tools = BTreeSet::new();
    for s in sessions {
        match s.label {
            Label::Benign => stats.benign += 1,
            Label::Attack => stats.attack += 1,
        }
        *stats.by_source.entry(s.source.clone()).or_insert(0) += 1;
        if let Some(mode) = &s.attack_mode {
            *stats
                .by_attack_mode
                .entry(mode.as_tag().to_string())
                .or_insert(0) += 1;
        }
        if let Some(task) = &s.task_id {
            tasks.insert(task.clone());
        }
        for c in &s.calls {
            tools.insert(c.tool_name.clone());
        }
    }
    stats.distinct_tasks = tasks.len();
    stats.distinct_tools = tools.len();
    stats
}

/// Load every session from a normalized corpus file (one record per line).
pub fn read_corpus(path: &std::path::Path) -> Result<Vec<Session>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_session_line)
        .collect()
}

/// Write sessions to a normalized corpus file, one record per line (LF).
pub fn write_corpus(path: &std::path::Path, sessions: &[Session]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in sessions {
        writeln!(out, "{}", serialize_session(s))?;
    }
    Ok(())
}
