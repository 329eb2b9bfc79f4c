//! Deterministic synthetic session corpus for desk-scale experiments.
//!
//! The generator is built around the deterministic test embedder, whose
//! output depends only on the exact text: repeating a text reproduces its
//! vector, so a small per-task pool of benign strings makes benign session
//! embeddings cluster near per-task centroids, while a small global pool of
//! attack strings gives attacks a consistent, task-independent signature.
//!
//! Key properties of the generated corpus:
//!
//! * each task uses a distinctive tool subset, so tool one-hots identify
//!   tasks;
//! * per-task attack prevalence varies with `prevalence_spread`, which is
//!   what makes random (label-stratified) splits leakage-prone for
//!   metadata models while task-disjoint splits are not;
//! * attack sessions start from the benign generative process and then
//!   rewrite the targeted channel of each call with a mode-specific
//!   probability (at least one call when the strength is positive;
//!   strength 0 yields attacks indistinguishable from benign sessions).
//!   Input manipulation substitutes arguments drawn from another task's
//!   benign pool — plausible-looking text pointing at the wrong target —
//!   so it is hard to recognize on unseen tasks; output manipulation
//!   injects falsified responses with a consistent adversarial signature,
//!   so it transfers across tasks;
//! * responses carry an identifier token that later calls reuse in their
//!   arguments with probability `dataflow_reuse`, producing data-flow
//!   edges.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::session::{AttackMode, Label, Session, ToolCall};

/// Shape and strength knobs of the generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_tasks: usize,
    pub sessions_per_task: usize,
    pub n_tools_universe: usize,
    pub tools_per_task: usize,
    pub calls_min: usize,
    pub calls_max: usize,
    /// Corpus-level attack prevalence target.
    pub attack_fraction: f64,
    /// Half-width of per-task prevalence alternation around
    /// `attack_fraction`; 0 makes labels task-independent.
    pub prevalence_spread: f64,
    /// Relative frequency of (input-only, output-only, both) attack modes.
    pub mode_mix: (f64, f64, f64),
    /// Per-call probability that an input-only attack rewrites arguments.
    pub strength_input: f64,
    /// Per-call probability that an output-only attack rewrites the response.
    pub strength_output: f64,
    /// Per-call probability that a combined attack rewrites both channels.
    pub strength_both: f64,
    /// Benign text variants per (task, tool) slot.
    pub variants_per_slot: usize,
    /// Global attack strings per channel.
    pub attack_pool: usize,
    /// Probability a call's arguments reference the previous response token.
    pub dataflow_reuse: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_tasks: 28,
            sessions_per_task: 12,
            n_tools_universe: 30,
            tools_per_task: 5,
            calls_min: 3,
            calls_max: 8,
            attack_fraction: 0.5,
            prevalence_spread: 0.0,
            mode_mix: (0.25, 0.3, 0.45),
            strength_input: 0.30,
            strength_output: 0.35,
            strength_both: 0.75,
            variants_per_slot: 3,
            attack_pool: 2,
            dataflow_reuse: 0.35,
        }
    }
}

impl SyntheticSpec {
    /// Preset where per-task attack prevalence alternates between 0.9 and
    /// 0.1: task identity predicts the label, which is exactly what makes
    /// random splits leakage-prone for task-memorizing models.
    pub fn leakage_prone() -> Self {
        SyntheticSpec {
            prevalence_spread: 0.8,
            sessions_per_task: 16,
            ..SyntheticSpec::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_tasks == 0 || self.sessions_per_task == 0 {
            return Err(Error::Validation("synthetic spec: empty corpus".into()));
        }
        if self.tools_per_task == 0 || self.tools_per_task > self.n_tools_universe {
            return Err(Error::Validation(format!(
                "synthetic spec: tools_per_task {} outside 1..={}",
                self.tools_per_task, self.n_tools_universe
            )));
        }
        if self.calls_min == 0 || self.calls_min > self.calls_max {
            return Err(Error::Validation("synthetic spec: bad call-count range".into()));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.attack_fraction)
            || !unit(self.prevalence_spread)
            || !unit(self.strength_input)
            || !unit(self.strength_output)
            || !unit(self.strength_both)
            || !unit(self.dataflow_reuse)
        {
            return Err(Error::Validation("synthetic spec: probabilities must be in [0,1]".into()));
        }
        let (a, b, c) = self.mode_mix;
        if a < 0.0 || b < 0.0 || c < 0.0 || a + b + c <= 0.0 {
            return Err(Error::Validation("synthetic spec: bad mode mix".into()));
        }
        if self.variants_per_slot == 0 || self.attack_pool == 0 {
            return Err(Error::Validation("synthetic spec: empty text pools".into()));
        }
        Ok(())
    }
}

fn benign_args(task: usize, tool: usize, variant: usize, reference: Option<&str>) -> String {
    // Canonical form by construction: keys already sorted (op < payload < ref).
    match reference {
        Some(token) => format!(
            "{{\"op\":\"tool_{tool:02}\",\"payload\":\"task{task:03}_arg{tool:02}_v{variant}\",\"ref\":\"{token}\"}}"
        ),
        None => format!(
            "{{\"op\":\"tool_{tool:02}\",\"payload\":\"task{task:03}_arg{tool:02}_v{variant}\"}}"
        ),
    }
}

fn benign_response(task: usize, tool: usize, variant: usize, position: usize) -> (String, String) {
    let token = format!("item_t{task:03}_{tool:02}_{position}");
    let text = format!("status=ok {token} detail task{task:03}_res{tool:02}_v{variant} ready");
    debug_assert_eq!(text.chars().count(), 54);
    (text, token)
}

fn attack_response(pool_index: usize) -> String {
    // Mirrors the benign template's shape and exact length so the
    // response-length feature carries no label signal.
    format!("status=ok fake_beacon_{pool_index:02} detail falsified_out_{pool_index:02} ready")
}

/// Generate a deterministic corpus per `spec`; identical seeds produce
/// identical corpora.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Vec<Session>> {
    spec.validate()?;
    let mut rng = substream(seed, "synthetic");
    let mut sessions = Vec::with_capacity(spec.n_tasks * spec.sessions_per_task);

    // Distinctive tool subset per task.
    let mut task_tools: Vec<Vec<usize>> = Vec::with_capacity(spec.n_tasks);
    for _ in 0..spec.n_tasks {
        let mut universe: Vec<usize> = (0..spec.n_tools_universe).collect();
        universe.shuffle(&mut rng);
        let mut subset: Vec<usize> = universe[..spec.tools_per_task].to_vec();
        subset.sort_unstable();
        task_tools.push(subset);
    }

    let mode_total = spec.mode_mix.0 + spec.mode_mix.1 + spec.mode_mix.2;
    for task in 0..spec.n_tasks {
        let delta = if task % 2 == 0 { 0.5 } else { -0.5 };
        let rate = (spec.attack_fraction + spec.prevalence_spread * delta).clamp(0.0, 1.0);
        for s in 0..spec.sessions_per_task {
            let n_calls = rng.gen_range(spec.calls_min..=spec.calls_max);
            let is_attack = rng.gen_bool(rate);
            let mode = if is_attack {
                let draw = rng.gen::<f64>() * mode_total;
                if draw < spec.mode_mix.0 {
                    AttackMode::ToolInput
                } else if draw < spec.mode_mix.0 + spec.mode_mix.1 {
                    AttackMode::ToolOutput
                } else {
                    AttackMode::Both
                }
            } else {
                AttackMode::Both // unused
            };

            // Decide which calls the attack touches: per-call Bernoulli at
            // the mode's strength, forced to at least one call whenever the
            // strength is positive (an attacked session always contains
            // some manipulation; strength 0 disables it entirely).
            let strength = match (&mode, is_attack) {
                (AttackMode::ToolInput, true) => spec.strength_input,
                (AttackMode::ToolOutput, true) => spec.strength_output,
                (AttackMode::Both, true) => spec.strength_both,
                _ => 0.0,
            };
            let mut perturbed: Vec<bool> = (0..n_calls).map(|_| rng.gen_bool(strength)).collect();
            if is_attack && strength > 0.0 && !perturbed.contains(&true) {
                let forced = rng.gen_range(0..n_calls);
                perturbed[forced] = true;
            }

            let mut calls = Vec::with_capacity(n_calls);
            let mut prev_token: Option<String> = None;
            for position in 0..n_calls {
                let tool = task_tools[task][rng.gen_range(0..spec.tools_per_task)];
                let variant = rng.gen_range(0..spec.variants_per_slot);
                let reference = prev_token
                    .take()
                    .filter(|_| rng.gen_bool(spec.dataflow_reuse));
                let mut args = benign_args(task, tool, variant, reference.as_deref());
                let (mut response, token) = benign_response(task, tool, variant, position);
                prev_token = Some(token);

                if is_attack && perturbed[position] {
                    // Input manipulation: substitute arguments that look
                    // benign but point at the wrong target — half the time
                    // another task's pool, half the time a wrong in-task
                    // value that falls entirely within normal variation.
                    if matches!(mode, AttackMode::ToolInput | AttackMode::Both)
                        && spec.n_tasks > 1
                    {
                        let source_task = if rng.gen_bool(0.5) {
                            let mut other = rng.gen_range(0..spec.n_tasks - 1);
                            if other >= task {
                                other += 1;
                            }
                            other
                        } else {
                            task
                        };
                        let foreign_tool =
                            task_tools[source_task][rng.gen_range(0..spec.tools_per_task)];
                        let foreign_variant = rng.gen_range(0..spec.variants_per_slot);
                        args = benign_args(source_task, foreign_tool, foreign_variant, None);
                    }
                    // Output manipulation: falsified response. Combined
                    // attacks always inject the adversarial signature;
                    // output-only attacks sometimes falsify subtly with a
                    // plausible response from another task's pool.
                    if matches!(mode, AttackMode::ToolOutput | AttackMode::Both) {
                        let strong = mode == AttackMode::Both || rng.gen_bool(0.6);
                        if strong {
                            response = attack_response(rng.gen_range(0..spec.attack_pool));
                        } else {
                            let mut other = rng.gen_range(0..spec.n_tasks.max(2) - 1);
                            if other >= task {
                                other += 1;
                            }
                            let foreign_tool =
                                task_tools[other][rng.gen_range(0..spec.tools_per_task)];
                            let (subtle, _) = benign_response(
                                other,
                                foreign_tool,
                                rng.gen_range(0..spec.variants_per_slot),
                                position.min(9),
                            );
                            response = subtle;
                        }
                        prev_token = None;
                    }
                }
                calls.push(ToolCall::new(
                    position,
                    format!("tool_{tool:02}"),
                    args,
                    response,
                ));
            }

            sessions.push(Session {
                session_id: format!("syn-t{task:03}-s{s:03}"),
                source: "synthetic".into(),
                task_id: Some(format!("task{task:03}")),
                label: if is_attack { Label::Attack } else { Label::Benign },
                attack_mode: is_attack.then(|| mode.clone()),
                calls,
            });
        }
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::corpus_stats;

    #[test]
    fn default_spec_yields_expected_shape() {
        let spec = SyntheticSpec {
            n_tasks: 20,
            sessions_per_task: 10,
            ..SyntheticSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec, 7).unwrap();
        assert_eq!(corpus.len(), 200);
        let stats = corpus_stats(&corpus);
        assert!(stats.benign > 0 && stats.attack > 0, "{stats:?}");
        assert_eq!(stats.distinct_tasks, 20);
        for s in &corpus {
            s.validate().unwrap();
            assert!(s.calls.len() >= 3 && s.calls.len() <= 8);
        }
    }

    #[test]
    fn same_seed_reproduces_the_corpus() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic_corpus(&spec, 42).unwrap();
        let b = generate_synthetic_corpus(&spec, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(&spec, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_strength_attacks_follow_the_benign_process() {
        let spec = SyntheticSpec {
            strength_input: 0.0,
            strength_output: 0.0,
            strength_both: 0.0,
            ..SyntheticSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec, 7).unwrap();
        // No falsified response, no cross-task argument substitution.
        for s in &corpus {
            let own_task = s.task_id.as_deref().unwrap();
            for c in &s.calls {
                assert!(!c.response_text.contains("falsified_out"));
                assert!(
                    c.args_text.contains(&format!("payload\":\"{own_task}")),
                    "foreign payload in {}: {}",
                    s.session_id,
                    c.args_text
                );
            }
        }
    }

    #[test]
    fn positive_strength_perturbs_observable_channels() {
        // Output and combined attacks always leave an observable trace in
        // some response (the adversarial signature or a foreign task's
        // response text); input-only manipulation may be indistinguishable
        // from benign variation by design.
        let corpus = generate_synthetic_corpus(&SyntheticSpec::default(), 7).unwrap();
        for s in corpus.iter().filter(|s| s.label == Label::Attack) {
            let own_task = s.task_id.as_deref().unwrap();
            match s.attack_mode.as_ref().unwrap() {
                AttackMode::ToolOutput | AttackMode::Both => {
                    let touched = s.calls.iter().any(|c| {
                        c.response_text.contains("falsified_out")
                            || !c.response_text.contains(own_task)
                    });
                    assert!(touched, "{} has no falsified response", s.session_id);
                }
                _ => {}
            }
        }
        // Combined attacks always carry the strong signature.
        for s in corpus.iter().filter(|s| s.attack_mode == Some(AttackMode::Both)) {
            assert!(
                s.calls.iter().any(|c| c.response_text.contains("falsified_out")),
                "{} lacks the adversarial signature",
                s.session_id
            );
        }
    }

    #[test]
    fn tasks_use_distinct_tool_subsets() {
        let corpus = generate_synthetic_corpus(&SyntheticSpec::default(), 7).unwrap();
        let mut per_task: std::collections::BTreeMap<&str, std::collections::BTreeSet<&str>> =
            Default::default();
        for s in &corpus {
            let entry = per_task.entry(s.task_id.as_deref().unwrap()).or_default();
            for c in &s.calls {
                entry.insert(&c.tool_name);
            }
        }
        let signatures: std::collections::BTreeSet<_> = per_task.values().cloned().collect();
        // Near-certain under the seeded subsets: signatures identify tasks.
        assert!(signatures.len() >= per_task.len() - 1);
    }

    #[test]
    fn dataflow_reuse_creates_dataflow_edges() {
        let corpus = generate_synthetic_corpus(&SyntheticSpec::default(), 7).unwrap();
        let with_flow = corpus
            .iter()
            .filter(|s| {
                crate::graph::build_graph(s)
                    .unwrap()
                    .edges
                    .iter()
                    .any(|e| e.kind == crate::graph::EdgeKind::DataFlow)
            })
            .count();
        assert!(with_flow > corpus.len() / 4, "only {with_flow} graphs have data flow");
    }

    #[test]
    fn inconsistent_spec_is_rejected() {
        let spec = SyntheticSpec {
            tools_per_task: 99,
            ..SyntheticSpec::default()
        };
        assert!(matches!(
            generate_synthetic_corpus(&spec, 7).unwrap_err(),
            Error::Validation(_)
        ));
    }
}
