//! Split construction: task-disjoint and label-stratified holdouts plus
//! their k-fold variants.
//!
//! Task-disjoint splits assign whole tasks to partitions so that no task
//! definition appears in more than one of train/val/test; this is the
//! protocol that prevents task-memorization inflation. Label-stratified
//! splits are the fallback for corpora without a shared task structure.
//!
//! Rounding: train gets `floor(r_train · U)` units, validation
//! `floor(r_val · U)`, and test the remainder (U = tasks or per-label
//! sessions), so 80 tasks split 70/10/20 as 56/8/16.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::session::{Label, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    TaskStratified,
    LabelStratified,
    KfoldTask,
    KfoldLabel,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::TaskStratified => "task_stratified",
            Protocol::LabelStratified => "label_stratified",
            Protocol::KfoldTask => "kfold_task",
            Protocol::KfoldLabel => "kfold_label",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task_stratified" => Ok(Protocol::TaskStratified),
            "label_stratified" => Ok(Protocol::LabelStratified),
            "kfold_task" => Ok(Protocol::KfoldTask),
            "kfold_label" => Ok(Protocol::KfoldLabel),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Session-id membership for a holdout split under a named protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub protocol: Protocol,
    pub seed: u64,
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl SplitSpec {
    /// Sets are pairwise disjoint and cover exactly the given corpus.
    pub fn check_partition(&self, sessions: &[Session]) -> Result<()> {
        let all: BTreeSet<&String> = sessions.iter().map(|s| &s.session_id).collect();
        let mut seen = BTreeSet::new();
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for id in set {
                if !all.contains(id) {
                    return Err(Error::Validation(format!("{name} references unknown id {id}")));
                }
                if !seen.insert(id) {
                    return Err(Error::Validation(format!("id {id} assigned twice")));
                }
            }
        }
        if seen.len() != all.len() {
            return Err(Error::Validation(format!(
                "split covers {} of {} sessions",
                seen.len(),
                all.len()
            )));
        }
        Ok(())
    }

    pub fn partition<'a>(
        &self,
        sessions: &'a [Session],
    ) -> (Vec<&'a Session>, Vec<&'a Session>, Vec<&'a Session>) {
        let pick = |set: &BTreeSet<String>| {
            sessions
                .iter()
                .filter(|s| set.contains(&s.session_id))
                .collect::<Vec<_>>()
        };
        (pick(&self.train), pick(&self.val), pick(&self.test))
    }
}

/// Test-set membership per fold; each unit appears in exactly one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub protocol: Protocol,
    pub seed: u64,
    pub folds: Vec<BTreeSet<String>>,
}

fn floor_counts(units: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    let train = (ratios.0 * units as f64).floor() as usize;
    let val = (ratios.1 * units as f64).floor() as usize;
    (train, val, units - train - val)
}

fn check_ratios(ratios: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = ratios;
    if a <= 0.0 || b < 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("ratios {ratios:?} must be positive and sum to 1")));
    }
    Ok(())
}

/// Shuffle unique task ids with a seeded stream and assign whole tasks
/// 70/10/20 (or the given ratios) so no task crosses partitions.
pub fn task_stratified_split(
    sessions: &[Session],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitSpec> {
    check_ratios(ratios)?;
    let mut tasks = BTreeSet::new();
    for s in sessions {
        match &s.task_id {
            Some(t) => {
                tasks.insert(t.clone());
            }
            None => {
                return Err(Error::Validation(format!(
                    "session {} has no task_id; use label_stratified for corpora \
                     without a shared task structure",
                    s.session_id
                )))
            }
        }
    }
    let mut tasks: Vec<String> = tasks.into_iter().collect();
    let mut rng = substream(seed, "split");
    tasks.shuffle(&mut rng);
    let (n_train, n_val, _) = floor_counts(tasks.len(), ratios);
    let train_tasks: BTreeSet<&String> = tasks[..n_train].iter().collect();
    let val_tasks: BTreeSet<&String> = tasks[n_train..n_train + n_val].iter().collect();

    let mut spec = SplitSpec {
        protocol: Protocol::TaskStratified,
        seed,
        train: BTreeSet::new(),
        val: BTreeSet::new(),
        test: BTreeSet::new(),
    };
    for s in sessions {
        let task = s.task_id.as_ref().expect("checked above");
        let id = s.session_id.clone();
        if train_tasks.contains(task) {
            spec.train.insert(id);
        } else if val_tasks.contains(task) {
            spec.val.insert(id);
        } else {
            spec.test.insert(id);
        }
    }
    Ok(spec)
}

/// Within each label, seeded shuffle then 70/10/20 assignment.
pub fn label_stratified_split(
    sessions: &[Session],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitSpec> {
    check_ratios(ratios)?;
    if !has_both_labels(sessions) {
        return Err(Error::Validation(
            "label_stratified split needs both labels present".into(),
        ));
    }
    let mut spec = SplitSpec {
        protocol: Protocol::LabelStratified,
        seed,
        train: BTreeSet::new(),
        val: BTreeSet::new(),
        test: BTreeSet::new(),
    };
    let mut rng = substream(seed, "split");
    for label in [Label::Benign, Label::Attack] {
        let mut ids: Vec<&str> = sessions
            .iter()
            .filter(|s| s.label == label)
            .map(|s| s.session_id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        let (n_train, n_val, _) = floor_counts(ids.len(), ratios);
        for (i, id) in ids.into_iter().enumerate() {
            if i < n_train {
                spec.train.insert(id.to_string());
            } else if i < n_train + n_val {
                spec.val.insert(id.to_string());
            } else {
                spec.test.insert(id.to_string());
            }
        }
    }
    Ok(spec)
}

/// K folds over tasks (task-disjoint) or over sessions stratified by label.
pub fn kfold_split(
    sessions: &[Session],
    k: usize,
    protocol: Protocol,
    seed: u64,
) -> Result<FoldSpec> {
    if k < 2 {
        return Err(Error::Config("k-fold needs k >= 2".into()));
    }
    let mut folds = vec![BTreeSet::new(); k];
    let mut rng = substream(seed, "split");
    match protocol {
        Protocol::KfoldTask => {
            let mut tasks = BTreeSet::new();
            for s in sessions {
                match &s.task_id {
                    Some(t) => {
                        tasks.insert(t.clone());
                    }
                    None => {
                        return Err(Error::Validation(format!(
                            "session {} has no task_id; use kfold_label",
                            s.session_id
                        )))
                    }
                }
            }
            let mut tasks: Vec<String> = tasks.into_iter().collect();
            tasks.shuffle(&mut rng);
            let fold_of_task: std::collections::BTreeMap<&String, usize> = tasks
                .iter()
                .enumerate()
                .map(|(i, t)| (t, i % k))
                .collect();
            for s in sessions {
                let f = fold_of_task[&s.task_id.as_ref().expect("checked")];
                folds[f].insert(s.session_id.clone());
            }
        }
        Protocol::KfoldLabel => {
            for label in [Label::Benign, Label::Attack] {
                let mut ids: Vec<&str> = sessions
                    .iter()
                    .filter(|s| s.label == label)
                    .map(|s| s.session_id.as_str())
                    .collect();
                ids.shuffle(&mut rng);
                for (i, id) in ids.into_iter().enumerate() {
                    folds[i % k].insert(id.to_string());
                }
            }
        }
        other => {
            return Err(Error::Config(format!(
                "kfold_split called with holdout protocol {other}"
            )))
        }
    }
    Ok(FoldSpec { protocol, seed, folds })
}

pub fn has_both_labels(sessions: &[Session]) -> bool {
    sessions.iter().any(|s| s.label == Label::Attack)
        && sessions.iter().any(|s| s.label == Label::Benign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::ToolCall;

    fn session(id: &str, task: Option<&str>, label: Label) -> Session {
        Session {
            session_id: id.into(),
            source: "t".into(),
            task_id: task.map(String::from),
            label,
            attack_mode: None,
            calls: vec![ToolCall::new(0, "x".into(), "{}".into(), String::new())],
        }
    }

    fn corpus_with_tasks(n_tasks: usize, per_task: usize) -> Vec<Session> {
        let mut out = Vec::new();
        for t in 0..n_tasks {
            for s in 0..per_task {
                let label = if s % 2 == 0 { Label::Benign } else { Label::Attack };
                out.push(session(&format!("s{t}-{s}"), Some(&format!("task{t:03}")), label));
            }
        }
        out
    }

    fn task_set(sessions: &[Session], ids: &BTreeSet<String>) -> BTreeSet<String> {
        sessions
            .iter()
            .filter(|s| ids.contains(&s.session_id))
            .filter_map(|s| s.task_id.clone())
            .collect()
    }

    #[test]
    fn eighty_tasks_split_56_8_16() {
        let corpus = corpus_with_tasks(80, 2);
        let spec = task_stratified_split(&corpus, (0.7, 0.1, 0.2), 7).unwrap();
        spec.check_partition(&corpus).unwrap();
        assert_eq!(task_set(&corpus, &spec.train).len(), 56);
        assert_eq!(task_set(&corpus, &spec.val).len(), 8);
        assert_eq!(task_set(&corpus, &spec.test).len(), 16);
    }

    #[test]
    fn ten_tasks_split_7_1_2() {
        let corpus = corpus_with_tasks(10, 3);
        let spec = task_stratified_split(&corpus, (0.7, 0.1, 0.2), 42).unwrap();
        assert_eq!(task_set(&corpus, &spec.train).len(), 7);
        assert_eq!(task_set(&corpus, &spec.val).len(), 1);
        assert_eq!(task_set(&corpus, &spec.test).len(), 2);
    }

    #[test]
    fn task_sets_never_overlap() {
        let corpus = corpus_with_tasks(13, 4);
        for seed in [7, 42, 123] {
            let spec = task_stratified_split(&corpus, (0.7, 0.1, 0.2), seed).unwrap();
            spec.check_partition(&corpus).unwrap();
            let tr = task_set(&corpus, &spec.train);
            let va = task_set(&corpus, &spec.val);
            let te = task_set(&corpus, &spec.test);
            assert!(tr.intersection(&va).next().is_none());
            assert!(tr.intersection(&te).next().is_none());
            assert!(va.intersection(&te).next().is_none());
        }
    }

    #[test]
    fn missing_task_id_directs_to_label_stratified() {
        let corpus = vec![session("a", None, Label::Benign)];
        let err = task_stratified_split(&corpus, (0.7, 0.1, 0.2), 7).unwrap_err();
        assert!(err.to_string().contains("label_stratified"));
    }

    #[test]
    fn label_stratified_keeps_per_label_ratios() {
        let mut corpus = Vec::new();
        for i in 0..100 {
            corpus.push(session(&format!("b{i}"), None, Label::Benign));
            corpus.push(session(&format!("a{i}"), None, Label::Attack));
        }
        let spec = label_stratified_split(&corpus, (0.7, 0.1, 0.2), 7).unwrap();
        spec.check_partition(&corpus).unwrap();
        let benign_train = spec.train.iter().filter(|id| id.starts_with('b')).count();
        let attack_train = spec.train.iter().filter(|id| id.starts_with('a')).count();
        assert_eq!(benign_train, 70);
        assert_eq!(attack_train, 70);
        assert_eq!(spec.val.len(), 20);
        assert_eq!(spec.test.len(), 40);
    }

    #[test]
    fn odd_sizes_stay_within_one_of_exact_ratios() {
        let mut corpus = Vec::new();
        for i in 0..999 {
            let label = if i % 3 == 0 { Label::Attack } else { Label::Benign };
            corpus.push(session(&format!("s{i}"), None, label));
        }
        let spec = label_stratified_split(&corpus, (0.7, 0.1, 0.2), 123).unwrap();
        spec.check_partition(&corpus).unwrap();
        for (set, ratio) in [(&spec.train, 0.7), (&spec.val, 0.1), (&spec.test, 0.2)] {
            for prefix_count in [333.0, 666.0] {
                let n = set
                    .iter()
                    .filter(|id| {
                        let i: usize = id[1..].parse().unwrap();
                        if prefix_count == 333.0 { i % 3 == 0 } else { i % 3 != 0 }
                    })
                    .count();
                // floor rounding: within one unit below, remainder to test.
                assert!((n as f64 - ratio * prefix_count) >= -1.0 + f64::EPSILON || n as f64 >= (ratio * prefix_count).floor());
            }
        }
    }

    #[test]
    fn two_seeds_differ_in_membership_not_sizes() {
        let corpus = corpus_with_tasks(10, 4);
        let a = label_stratified_split(&corpus, (0.7, 0.1, 0.2), 7).unwrap();
        let b = label_stratified_split(&corpus, (0.7, 0.1, 0.2), 42).unwrap();
        assert_ne!(a.train, b.train);
        assert_eq!(a.train.len(), b.train.len());
        assert_eq!(a.test.len(), b.test.len());
    }

    #[test]
    fn single_label_corpus_is_rejected() {
        let corpus = vec![session("a", None, Label::Benign), session("b", None, Label::Benign)];
        assert!(label_stratified_split(&corpus, (0.7, 0.1, 0.2), 7).is_err());
    }

    #[test]
    fn kfold_task_puts_each_task_in_exactly_one_fold() {
        let corpus = corpus_with_tasks(11, 3);
        let folds = kfold_split(&corpus, 5, Protocol::KfoldTask, 42).unwrap();
        assert_eq!(folds.folds.len(), 5);
        let mut seen_tasks = BTreeSet::new();
        for fold in &folds.folds {
            for task in task_set(&corpus, fold) {
                assert!(seen_tasks.insert(task), "task in two folds");
            }
        }
        assert_eq!(seen_tasks.len(), 11);
        let total: usize = folds.folds.iter().map(|f| f.len()).sum();
        assert_eq!(total, corpus.len());
    }

    #[test]
    fn kfold_label_covers_corpus() {
        let corpus = corpus_with_tasks(6, 5);
        let folds = kfold_split(&corpus, 5, Protocol::KfoldLabel, 7).unwrap();
        let total: usize = folds.folds.iter().map(|f| f.len()).sum();
        assert_eq!(total, corpus.len());
    }
}
