//! Attack detection for LLM-agent tool-call sessions.
//!
//! `callguard` classifies complete agent sessions (ordered tool calls with
//! arguments and responses) as benign or attacked. Each session is encoded
//! as a graph — tool calls as nodes, sequential and data-flow links as
//! edges — node features come from structural metadata or sentence
//! embeddings of the call content, and the classifier is either a classical
//! model over pooled features, a no-graph MLP, a two-layer GraphSAGE
//! network, or a contrastively pre-trained encoder fine-tuned with labels.
//!
//! The evaluation half of the crate implements the protocol needed to
//! benchmark such detectors honestly: task-disjoint splits (no task
//! definition shared between train and test), label-stratified fallbacks,
//! k-fold variants, threshold-free metrics, per-attack-mode breakdowns,
//! label-efficiency sweeps, and a leakage-gap experiment that quantifies
//! how much a random split inflates AUROC through task memorization.
//!
//! Start with the runnable examples (`cargo run --example ...`) or the
//! `callguard` CLI for file-driven pipelines.

pub mod adapters;
pub mod artifact;
pub mod classical;
pub mod cli;
pub mod embed;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod session;
pub mod ssl;

pub use error::{Error, Result};
pub use session::{AttackMode, CorpusStats, Label, Session, ToolCall, ToolVocab};
