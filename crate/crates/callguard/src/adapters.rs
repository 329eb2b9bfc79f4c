//! Adapters from raw benchmark trajectory records to the normalized [`Session`].
//!
//! Two source tags are registered:
//!
//! * `ras_eval` — MCP-style traces. A record carries either a flat
//!   `tool_calls` array (`{"name"|"tool", "arguments", "response"|"result"}`)
//!   or an OpenAI-style `messages` array where `assistant` messages hold
//!   `tool_calls` (`{"id", "function": {"name", "arguments"}}`) and `tool`
//!   messages hold the matching `content`, paired by `tool_call_id` when
//!   present and in order otherwise. Attack-mode tags are read from
//!   `attack_mode` (or `mode`) and mapped as: `tool_input`/`input` →
//!   tool_input, `tool_output`/`output` → tool_output, `both`/`combined` →
//!   both, any other non-empty tag → other(tag). The label is taken from an
//!   explicit `label` field when present and otherwise inferred as attack
//!   iff an attack-mode tag exists.
//! * `atbench` — curated trajectories with `label: "safe"|"unsafe"` (or
//!   `is_safe: bool`) and a `trajectory`/`steps` array of
//!   `{"tool"|"action"|"tool_name", "input"|"arguments"|"parameters",
//!   "output"|"observation"|"response"}` steps. Category labels
//!   (`category`/`risk_source`) do not map onto the three manipulation
//!   vectors and are retained as-is in `attack_mode: other(category)`.
//!
//! Records with zero extractable tool calls are rejected with a skip signal
//! distinct from hard parse errors, so callers can count exclusions.

use serde_json::Value;
use thiserror::Error;

use crate::error::Error;
use crate::session::{canonical_args, AttackMode, Label, Session, ToolCall};

/// Outcome of adapting one raw record.
#[derive(Error, Debug)]
pub enum AdaptError {
    /// The record is well-formed but contains no extractable tool calls.
    #[error("skipped: {0}")]
    Skip(String),
    /// A real failure: malformed record or unknown source.
    #[error(transparent)]
    Hard(#[from] Error),
}

pub const KNOWN_SOURCES: &[&str] = &["ras_eval", "atbench"];

/// Adapt one raw trajectory record from `source` into a normalized session.
pub fn adapt_record(raw: &str, source: &str) -> Result<Session, AdaptError> {
    let value: Value = serde_json::from_str(raw)
        .map_err(|e| AdaptError::Hard(Error::Parse(format!("raw {source} record: {e}"))))?;
    match source {
        "ras_eval" => adapt_ras_eval(&value),
        "atbench" => adapt_atbench(&value),
        other => Err(AdaptError::Hard(Error::Config(format!(
            "unknown source {other:?}; registered adapters: {KNOWN_SOURCES:?}"
        )))),
    }
}

fn str_field<'a>(v: &'a Value, names: &[&str]) -> Option<&'a str> {
    names.iter().find_map(|n| v.get(*n).and_then(Value::as_str))
}

fn map_ras_eval_mode(tag: &str) -> AttackMode {
    match tag {
        "tool_input" | "input" => AttackMode::ToolInput,
        "tool_output" | "output" => AttackMode::ToolOutput,
        "both" | "combined" | "tool_input+tool_output" | "input+output" => AttackMode::Both,
        other => AttackMode::Other(other.to_string()),
    }
}

fn response_as_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn adapt_ras_eval(record: &Value) -> Result<Session, AdaptError> {
    let session_id = str_field(record, &["id", "session_id"])
        .ok_or_else(|| Error::Parse("ras_eval record: missing field `id`".into()))?
        .to_string();
    let task_id = str_field(record, &["task_id", "task"]).map(String::from);
    let mode_tag = str_field(record, &["attack_mode", "mode"]).filter(|t| !t.is_empty());
    let label = match str_field(record, &["label"]) {
        Some("benign") => Label::Benign,
        Some("attack") => Label::Attack,
        Some(other) => {
            return Err(AdaptError::Hard(Error::Parse(format!(
                "ras_eval record {session_id}: field `label`: unknown value {other:?}"
            ))))
        }
        None => {
            if mode_tag.is_some() {
                Label::Attack
            } else {
                Label::Benign
            }
        }
    };
    let attack_mode = if label == Label::Attack {
        mode_tag.map(map_ras_eval_mode)
    } else {
        None
    };

    let mut calls = Vec::new();
    if let Some(flat) = record
        .get("tool_calls")
        .or_else(|| record.get("calls"))
        .and_then(Value::as_array)
    {
        for entry in flat {
            let Some(name) = str_field(entry, &["name", "tool"]) else {
                continue;
            };
            let args = entry.get("arguments").cloned().unwrap_or(Value::Null);
            let resp = entry
                .get("response")
                .or_else(|| entry.get("result"))
                .map(response_as_text)
                .unwrap_or_default();
            calls.push((name.to_string(), canonical_args(&args), resp));
        }
    } else if let Some(messages) = record.get("messages").and_then(Value::as_array) {
        // Pending assistant tool calls awaiting their tool-role response.
        let mut pending: Vec<(Option<String>, String, String)> = Vec::new();
        let mut resolved: Vec<(String, String, String)> = Vec::new();
        for msg in messages {
            match str_field(msg, &["role"]) {
                Some("assistant") => {
                    if let Some(tcs) = msg.get("tool_calls").and_then(Value::as_array) {
                        for tc in tcs {
                            let call_id = str_field(tc, &["id"]).map(String::from);
                            let func = tc.get("function").unwrap_or(tc);
                            let Some(name) = str_field(func, &["name"]) else {
                                continue;
                            };
                            let args = func.get("arguments").cloned().unwrap_or(Value::Null);
                            pending.push((call_id, name.to_string(), canonical_args(&args)));
                        }
                    }
                }
                Some("tool") => {
                    let content = msg.get("content").map(response_as_text).unwrap_or_default();
                    let idx = match str_field(msg, &["tool_call_id"]) {
                        Some(id) => pending.iter().position(|(p, _, _)| p.as_deref() == Some(id)),
                        None => (!pending.is_empty()).then_some(0),
                    };
                    if let Some(i) = idx {
                        let (_, name, args) = pending.remove(i);
                        resolved.push((name, args, content));
                    }
                }
                _ => {}
            }
        }
        // Calls that never got a tool response keep an empty response.
        resolved.extend(pending.into_iter().map(|(_, n, a)| (n, a, String::new())));
        calls = resolved;
    }

    finish(session_id, "ras_eval", task_id, label, attack_mode, calls)
}

fn adapt_atbench(record: &Value) -> Result<Session, AdaptError> {
    let session_id = str_field(record, &["id", "session_id", "trajectory_id"])
        .ok_or_else(|| Error::Parse("atbench record: missing field `id`".into()))?
        .to_string();
    let label = match (
        str_field(record, &["label"]),
        record.get("is_safe").and_then(Value::as_bool),
    ) {
        (Some("safe"), _) | (Some("benign"), _) => Label::Benign,
        (Some("unsafe"), _) | (Some("attack"), _) => Label::Attack,
        (Some(other), _) => {
            return Err(AdaptError::Hard(Error::Parse(format!(
                "atbench record {session_id}: field `label`: unknown value {other:?}"
            ))))
        }
        (None, Some(true)) => Label::Benign,
        (None, Some(false)) => Label::Attack,
        (None, None) => {
            return Err(AdaptError::Hard(Error::Parse(format!(
                "atbench record {session_id}: missing field `label` (or `is_safe`)"
            ))))
        }
    };
    let attack_mode = if label == Label::Attack {
        str_field(record, &["category", "risk_source"])
            .filter(|c| !c.is_empty())
            .map(|c| AttackMode::Other(c.to_string()))
    } else {
        None
    };

    let mut calls = Vec::new();
    if let Some(steps) = record
        .get("trajectory")
        .or_else(|| record.get("steps"))
        .and_then(Value::as_array)
    {
        for step in steps {
            let Some(name) = str_field(step, &["tool", "action", "tool_name"]) else {
                continue; // non-tool step (thought, message)
            };
            let args = step
                .get("input")
                .or_else(|| step.get("arguments"))
                .or_else(|| step.get("parameters"))
                .cloned()
                .unwrap_or(Value::Null);
            let resp = step
                .get("output")
                .or_else(|| step.get("observation"))
                .or_else(|| step.get("response"))
                .map(response_as_text)
                .unwrap_or_default();
            calls.push((name.to_string(), canonical_args(&args), resp));
        }
    }

    finish(session_id, "atbench", None, label, attack_mode, calls)
}

fn finish(
    session_id: String,
    source: &str,
    task_id: Option<String>,
    label: Label,
    attack_mode: Option<AttackMode>,
    calls: Vec<(String, String, String)>,
) -> Result<Session, AdaptError> {
    if calls.is_empty() {
        return Err(AdaptError::Skip(format!(
            "{source} record {session_id}: contains no extractable tool calls"
        )));
    }
    let session = Session {
        session_id,
        source: source.to_string(),
        task_id,
        label,
        attack_mode,
        calls: calls
            .into_iter()
            .enumerate()
            .map(|(i, (name, args, resp))| ToolCall::new(i, name, args, resp))
            .collect(),
    };
    session.validate().map_err(AdaptError::Hard)?;
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ras_eval_attack_with_input_mode() {
        let raw = r#"{"id":"r1","task_id":"t7","attack_mode":"tool_input","tool_calls":[
            {"name":"read_file","arguments":{"path":"/tmp/x"},"response":"data"}]}"#;
        let s = adapt_record(raw, "ras_eval").unwrap();
        assert_eq!(s.label, Label::Attack);
        assert_eq!(s.attack_mode, Some(AttackMode::ToolInput));
        assert_eq!(s.task_id.as_deref(), Some("t7"));
        assert_eq!(s.calls.len(), 1);
        assert_eq!(s.calls[0].args_text, r#"{"path":"/tmp/x"}"#);
    }

    #[test]
    fn ras_eval_mcp_messages_are_paired_by_call_id() {
        let raw = r#"{"id":"r2","task":"t1","messages":[
            {"role":"user","content":"do it"},
            {"role":"assistant","tool_calls":[
                {"id":"c1","function":{"name":"search","arguments":{"q":"a"}}},
                {"id":"c2","function":{"name":"fetch","arguments":{"url":"u"}}}]},
            {"role":"tool","tool_call_id":"c2","content":"fetched"},
            {"role":"tool","tool_call_id":"c1","content":"found"}]}"#;
        let s = adapt_record(raw, "ras_eval").unwrap();
        assert_eq!(s.label, Label::Benign);
        assert_eq!(s.calls.len(), 2);
        // Resolution order follows the tool-response order.
        assert_eq!(s.calls[0].tool_name, "fetch");
        assert_eq!(s.calls[0].response_text, "fetched");
        assert_eq!(s.calls[1].tool_name, "search");
        assert_eq!(s.calls[1].response_text, "found");
    }

    #[test]
    fn zero_tool_calls_is_a_skip_signal() {
        let raw = r#"{"id":"r3","messages":[{"role":"user","content":"hi"}]}"#;
        match adapt_record(raw, "ras_eval") {
            Err(AdaptError::Skip(msg)) => assert!(msg.contains("no extractable tool calls")),
            other => panic!("expected skip, got {other:?}"),
        }
    }

    #[test]
    fn atbench_jailbreak_category_is_retained() {
        let raw = r#"{"id":"a1","label":"unsafe","category":"jailbreak","trajectory":[
            {"tool":"shell","input":{"cmd":"ls"},"output":"ok"}]}"#;
        let s = adapt_record(raw, "atbench").unwrap();
        assert_eq!(s.attack_mode, Some(AttackMode::Other("jailbreak".into())));
        assert_eq!(s.source, "atbench");
    }

    #[test]
    fn atbench_safe_via_bool() {
        let raw = r#"{"id":"a2","is_safe":true,"steps":[
            {"action":"lookup","parameters":{"k":"v"},"observation":"found"}]}"#;
        let s = adapt_record(raw, "atbench").unwrap();
        assert_eq!(s.label, Label::Benign);
        assert_eq!(s.calls[0].tool_name, "lookup");
    }

    #[test]
    fn unknown_source_is_a_config_error() {
        match adapt_record("{}", "mystery") {
            Err(AdaptError::Hard(Error::Config(msg))) => assert!(msg.contains("mystery")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn adapter_totals_equal_raw_minus_skips() {
        let raws = [
            r#"{"id":"x1","tool_calls":[{"name":"a","arguments":{},"response":"r"}]}"#,
            r#"{"id":"x2","messages":[{"role":"user","content":"no tools"}]}"#,
            r#"{"id":"x3","attack_mode":"both","tool_calls":[{"name":"b","arguments":{},"response":""}]}"#,
        ];
        let mut kept = 0;
        let mut skipped = 0;
        for raw in raws {
            match adapt_record(raw, "ras_eval") {
                Ok(_) => kept += 1,
                Err(AdaptError::Skip(_)) => skipped += 1,
                Err(e) => panic!("unexpected {e}"),
            }
        }
        assert_eq!(kept, 2);
        assert_eq!(skipped, 1);
        assert_eq!(kept + skipped, raws.len());
    }
}
