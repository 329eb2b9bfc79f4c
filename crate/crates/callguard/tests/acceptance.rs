//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured values. Every tolerance is pinned in
//! code; the whole suite is bit-deterministic given the fixed seeds.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;

use callguard::embed::EmbeddingProvider;
use callguard::eval::metrics::{auprc, auroc, mean_sd};
use callguard::eval::sweep::{label_efficiency_sweep, SweepMethod, SweepOptions};
use callguard::eval::{generate_synthetic_corpus, Protocol, SyntheticSpec};
use callguard::features::FeatureMode;
use callguard::graph::{build_graph_with, data_flow_edges_with, Edge, EdgeKind, GraphConfig};
use callguard::nn::{
    encode_graph, gradient_check_mlp, gradient_check_sage, MlpModel, SageEncoder, SageModel,
    TrainConfig,
};
use callguard::pipeline::{execute_run, leakage_gap, ModelSpec, RunSpec};
use callguard::rng::substream;
use callguard::session::{Label, Session, ToolCall};
use callguard::ssl::nt_xent_loss;

const SEEDS: [u64; 3] = [7, 42, 123];

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

/// Independent O(n²·len) scan implementing the two textual data-flow rules
/// directly; shares no code with the production path.
fn data_flow_oracle(calls: &[ToolCall]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..calls.len() {
        let resp = &calls[i].response_text;
        if resp.trim().is_empty() || resp.chars().count() > 1000 {
            continue;
        }
        let prefix: String = resp.chars().take(50).collect();
        let tokens: Vec<&str> = resp
            .split_whitespace()
            .take(5)
            .filter(|t| t.chars().count() > 4)
            .collect();
        for j in (i + 1)..calls.len() {
            let args = &calls[j].args_text;
            if args.contains(&prefix) || tokens.iter().any(|t| args.contains(t)) {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }
    edges.sort_unstable();
    edges
}

fn random_session(rng: &mut rand_chacha::ChaCha8Rng, id: usize) -> Session {
    let n = rng.gen_range(1..=6);
    let fragments = [
        "alpha_token", "beta", "tok_99341", "x", "read ok", "path=/tmp/f_001",
        "  ", "status", "long_identifier_string", "zz",
    ];
    let calls = (0..n)
        .map(|k| {
            let resp_len = rng.gen_range(0..6);
            let mut resp = String::new();
            for _ in 0..resp_len {
                resp.push_str(fragments[rng.gen_range(0..fragments.len())]);
                resp.push(' ');
            }
            if rng.gen_bool(0.1) {
                resp = "y".repeat(rng.gen_range(995..1010));
            }
            let mut args = format!("{{\"f\":\"{}\"", fragments[rng.gen_range(0..fragments.len())]);
            if rng.gen_bool(0.4) {
                args.push_str(&format!(",\"g\":\"{}\"", fragments[rng.gen_range(0..fragments.len())]));
            }
            args.push('}');
            ToolCall::new(k, format!("t{}", rng.gen_range(0..4)), args, resp)
        })
        .collect();
    Session {
        session_id: format!("rnd-{id}"),
        source: "oracle".into(),
        task_id: None,
        label: Label::Benign,
        attack_mode: None,
        calls,
    }
}

#[test]
fn criterion_01_data_flow_matches_naive_scan() {
    let start = Instant::now();
    let mut rng = substream(7, "acceptance-dataflow");
    let mut checked = 0;
    for id in 0..1000 {
        let session = random_session(&mut rng, id);
        let mut produced: Vec<(usize, usize)> =
            data_flow_edges_with(&session.calls, &GraphConfig::default())
                .iter()
                .map(|e| (e.src, e.dst))
                .collect();
        produced.sort_unstable();
        let expected = data_flow_oracle(&session.calls);
        assert_eq!(produced, expected, "session {id}");
        checked += 1;
    }
    let elapsed = start.elapsed();
    verdict(
        "1 (graph-builder oracle)",
        checked == 1000 && elapsed.as_secs_f64() < 10.0,
        &format!("{checked} sessions matched in {:.2}s (< 10s)", elapsed.as_secs_f64()),
    );
}

fn auroc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut total = 0.0;
    for (i, (&sp, &lp)) in scores.iter().zip(labels).enumerate() {
        if !lp {
            continue;
        }
        for (j, (&sn, &ln)) in scores.iter().zip(labels).enumerate() {
            if ln || i == j {
                continue;
            }
            total += 1.0;
            wins += if sp > sn { 1.0 } else if sp == sn { 0.5 } else { 0.0 };
        }
    }
    wins / total
}

fn auprc_naive(scores: &[f64], labels: &[bool]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| s >= t && l).count();
        let predicted = scores.iter().filter(|&&s| s >= t).count();
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / predicted as f64);
        prev_recall = recall;
    }
    ap
}

#[test]
fn criterion_02_metric_oracles() {
    let mut rng = substream(42, "acceptance-metrics");
    let mut max_auroc_err = 0.0f64;
    let mut max_auprc_err = 0.0f64;
    let mut runs = 0;
    while runs < 1000 {
        let n = rng.gen_range(2..=200);
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.gen_range(0..25) as f64) / 25.0) // ties guaranteed
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        if !labels.contains(&true) || !labels.contains(&false) {
            continue;
        }
        runs += 1;
        max_auroc_err = max_auroc_err
            .max((auroc(&scores, &labels).unwrap() - auroc_pairwise(&scores, &labels)).abs());
        max_auprc_err = max_auprc_err
            .max((auprc(&scores, &labels).unwrap() - auprc_naive(&scores, &labels)).abs());
    }
    verdict(
        "2 (metric oracle)",
        max_auroc_err < 1e-9 && max_auprc_err < 1e-9,
        &format!("max |Δauroc| = {max_auroc_err:.2e}, max |Δauprc| = {max_auprc_err:.2e} over 1000 inputs"),
    );
}

#[test]
fn criterion_03_gradient_checks() {
    let mut worst = 0.0f64;
    for seed in SEEDS {
        let mut rng = substream(seed, "acceptance-gradcheck");
        let mut mlp = MlpModel::new(6, 8, &mut rng);
        mlp.head.l2.w.mapv_inplace(|_| rng.gen::<f64>() - 0.5);
        mlp.head.l2.b.mapv_inplace(|_| rng.gen::<f64>() - 0.5);
        let rows = Array2::from_shape_fn((4, 6), |_| rng.gen::<f64>() * 2.0 - 1.0);
        let labels = [true, false, false, true];
        worst = worst.max(gradient_check_mlp(&mut mlp, &rows, &labels, [1.0, 1.4]).unwrap());

        let mut sage = SageModel::new(5, 6, &mut rng);
        sage.head.l2.w.mapv_inplace(|_| rng.gen::<f64>() - 0.5);
        let corpus = tiny_graphs(4, 5, seed);
        let refs: Vec<&callguard::graph::SessionGraph> = corpus.iter().collect();
        worst = worst.max(gradient_check_sage(&mut sage, &refs, [1.1, 0.9]).unwrap());
    }
    verdict(
        "3 (gradient check)",
        worst < 1e-4,
        &format!("max relative error {worst:.2e} over {} seeded batches (MLP + SAGE)", SEEDS.len() * 2),
    );
}

fn tiny_graphs(n: usize, d: usize, seed: u64) -> Vec<callguard::graph::SessionGraph> {
    let mut rng = substream(seed, "acceptance-tiny");
    (0..n)
        .map(|i| {
            let nodes = rng.gen_range(2..=4);
            let feats = Array2::from_shape_fn((nodes, d), |_| rng.gen::<f64>() - 0.5);
            let mut edges = Vec::new();
            for k in 0..nodes - 1 {
                edges.push(Edge::new(k, k + 1, EdgeKind::Sequential));
                edges.push(Edge::new(k + 1, k, EdgeKind::Sequential));
            }
            callguard::graph::SessionGraph {
                session_id: format!("tiny-{i}"),
                n_nodes: nodes,
                edges,
                node_features: feats,
                label: if i % 2 == 0 { Label::Benign } else { Label::Attack },
                attack_mode: None,
                task_id: None,
            }
        })
        .collect()
}

#[test]
fn criterion_04_permutation_invariance() {
    use callguard::features::pooled_readout;
    let mut rng = substream(123, "acceptance-perm");
    let encoder = SageEncoder::new(6, 16, &mut rng);
    let graphs = tiny_graphs(10, 6, 99);
    let mut max_dev = 0.0f64;
    let mut permutations = 0;
    while permutations < 100 {
        let g = &graphs[permutations % graphs.len()];
        let n = g.n_nodes;
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let mut feats = Array2::zeros((n, g.node_features.ncols()));
        for i in 0..n {
            feats.row_mut(perm[i]).assign(&g.node_features.row(i));
        }
        let permuted = callguard::graph::SessionGraph {
            edges: g
                .edges
                .iter()
                .map(|e| Edge::new(perm[e.src], perm[e.dst], e.kind))
                .collect(),
            node_features: feats.clone(),
            ..g.clone()
        };
        let za = encode_graph(g, &encoder).unwrap();
        let zb = encode_graph(&permuted, &encoder).unwrap();
        for (a, b) in za.iter().zip(&zb) {
            max_dev = max_dev.max((a - b).abs());
        }
        let pa = pooled_readout(&g.node_features).unwrap();
        let pb = pooled_readout(&feats).unwrap();
        assert_eq!(pa, pb, "pooled readout must be exactly invariant");
        permutations += 1;
    }
    verdict(
        "4 (permutation invariance)",
        max_dev <= 1e-12,
        &format!("encode_graph max deviation {max_dev:.2e} over 100 permutations; pooled_readout exact"),
    );
}

#[test]
fn criterion_05_nt_xent() {
    let mut rng = substream(7, "acceptance-ntxent");
    // N = 1: no negatives, loss 0.
    let z = Array2::from_shape_fn((2, 5), |_| rng.gen::<f64>() * 2.0 - 1.0);
    let single = nt_xent_loss(&z, &[1, 0], 0.5).unwrap();

    // All-identical N = 2 batch: ln 3.
    let row: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() + 0.1).collect();
    let all_same = Array2::from_shape_fn((4, 5), |(_, c)| row[c]);
    let ln3 = nt_xent_loss(&all_same, &[1, 0, 3, 2], 0.5).unwrap();

    // Random batches match a direct summation oracle.
    let naive = |z: &Array2<f64>, partner: &[usize], tau: f64| -> f64 {
        let cos = |a: usize, b: usize| {
            let ra = z.row(a);
            let rb = z.row(b);
            ra.dot(&rb) / (ra.dot(&ra).sqrt() * rb.dot(&rb).sqrt())
        };
        let n = z.nrows();
        (0..n)
            .map(|a| {
                let num = (cos(a, partner[a]) / tau).exp();
                let denom: f64 = (0..n).filter(|&c| c != a).map(|c| (cos(a, c) / tau).exp()).sum();
                -(num / denom).ln()
            })
            .sum::<f64>()
            / n as f64
    };
    let mut max_err = 0.0f64;
    for _ in 0..50 {
        let z = Array2::from_shape_fn((8, 6), |_| rng.gen::<f64>() * 2.0 - 1.0);
        let partner = vec![4, 5, 6, 7, 0, 1, 2, 3];
        max_err = max_err
            .max((nt_xent_loss(&z, &partner, 0.5).unwrap() - naive(&z, &partner, 0.5)).abs());
    }
    verdict(
        "5 (NT-Xent)",
        single.abs() < 1e-12
            && (ln3 - 3.0f64.ln()).abs() < 1e-9
            && max_err < 1e-9,
        &format!(
            "N=1 loss {single:.2e}; identical batch {ln3:.12} vs ln3 {:.12}; max oracle gap {max_err:.2e}",
            3.0f64.ln()
        ),
    );
}

// Shared headline runs: content + metadata GraphSAGE and content random
// forest over the three seeds, reused by criteria 6, 8, and 10.
struct HeadlineRuns {
    content_sage: Vec<callguard::pipeline::RunResult>,
    metadata_sage: Vec<callguard::pipeline::RunResult>,
    content_forest: Vec<callguard::pipeline::RunResult>,
}

fn headline() -> &'static HeadlineRuns {
    static RUNS: OnceLock<HeadlineRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let corpus = generate_synthetic_corpus(&SyntheticSpec::default(), 7).unwrap();
        let provider = EmbeddingProvider::deterministic(384);
        let run = |model: ModelSpec, mode: FeatureMode, seed: u64| {
            let spec = RunSpec::new(model, mode, Protocol::TaskStratified, seed);
            execute_run(&corpus, Some(&provider), &spec).unwrap()
        };
        HeadlineRuns {
            content_sage: SEEDS
                .iter()
                .map(|&s| run(ModelSpec::Sage, FeatureMode::Content, s))
                .collect(),
            metadata_sage: SEEDS
                .iter()
                .map(|&s| run(ModelSpec::Sage, FeatureMode::Metadata, s))
                .collect(),
            content_forest: SEEDS
                .iter()
                .map(|&s| run(ModelSpec::RandomForest, FeatureMode::Content, s))
                .collect(),
        }
    })
}

fn mean_auroc(runs: &[callguard::pipeline::RunResult]) -> f64 {
    let values: Vec<f64> = runs.iter().map(|r| r.metrics.auroc.unwrap()).collect();
    mean_sd(&values).0
}

#[test]
fn criterion_06_content_beats_metadata() {
    let start = Instant::now();
    let runs = headline();
    let content = mean_auroc(&runs.content_sage);
    let metadata = mean_auroc(&runs.metadata_sage);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "6 (content vs metadata)",
        content >= metadata + 0.15 && elapsed < 300.0,
        &format!(
            "content GraphSAGE {content:.3} vs metadata {metadata:.3} (margin {:.3} >= 0.15), {elapsed:.0}s (< 300s)",
            content - metadata
        ),
    );
}

#[test]
fn criterion_07_leakage_gap() {
    let leaky = generate_synthetic_corpus(&SyntheticSpec::leakage_prone(), 7).unwrap();
    let provider = EmbeddingProvider::deterministic(384);
    let metadata_base = RunSpec::new(
        ModelSpec::Sage,
        FeatureMode::Metadata,
        Protocol::TaskStratified,
        7,
    );
    let metadata = leakage_gap(&leaky, None, &metadata_base, &SEEDS).unwrap();
    let content_base = RunSpec::new(
        ModelSpec::Sage,
        FeatureMode::Content,
        Protocol::TaskStratified,
        7,
    );
    let content = leakage_gap(&leaky, Some(&provider), &content_base, &SEEDS).unwrap();
    verdict(
        "7 (leakage gap)",
        metadata.gap >= 0.15 && content.gap < metadata.gap,
        &format!(
            "metadata gap {:.3} (>= 0.15; random {:.3} vs task-disjoint {:.3}); content gap {:.3} strictly smaller",
            metadata.gap, metadata.mean_random, metadata.mean_task_disjoint, content.gap
        ),
    );
}

#[test]
fn criterion_08_forest_matches_sage() {
    let runs = headline();
    let forest = mean_auroc(&runs.content_forest);
    let sage = mean_auroc(&runs.content_sage);
    verdict(
        "8 (classical vs neural)",
        forest >= sage - 0.02,
        &format!("random forest {forest:.3} vs GraphSAGE {sage:.3} (floor {:.3})", sage - 0.02),
    );
}

#[test]
fn criterion_09_label_efficiency_shape() {
    let spec = SyntheticSpec {
        n_tasks: 20,
        sessions_per_task: 10,
        ..SyntheticSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 7).unwrap();
    let provider = EmbeddingProvider::deterministic(384);
    let opts = SweepOptions {
        fractions: vec![0.05, 0.10, 0.25, 0.50, 1.00],
        folds: 5,
        seed: 7,
        train: TrainConfig {
            max_epochs: 60,
            ..TrainConfig::default()
        },
        ..SweepOptions::default()
    };
    let cells = label_efficiency_sweep(
        &corpus,
        Some(&provider),
        &opts,
        &[SweepMethod::Supervised, SweepMethod::SslFinetune],
    )
    .unwrap();
    let lookup = |method: &str, fraction: f64| -> f64 {
        cells
            .iter()
            .find(|c| c.method == method && (c.fraction - fraction).abs() < 1e-9)
            .and_then(|c| c.mean)
            .expect("cell present")
    };
    let sup_full = lookup("supervised", 1.0);
    let ssl_full = lookup("ssl_ft", 1.0);
    let parity = (sup_full - ssl_full).abs() <= 0.05;
    let mut floor_ok = true;
    let mut detail = format!("100%: supervised {sup_full:.3} vs ssl {ssl_full:.3} (|Δ| {:.3} <= 0.05)", (sup_full - ssl_full).abs());
    for &fraction in &opts.fractions {
        let sup = lookup("supervised", fraction);
        let ssl = lookup("ssl_ft", fraction);
        if sup < ssl - 0.05 {
            floor_ok = false;
            detail.push_str(&format!("; VIOLATION at {:.0}%: {sup:.3} < {ssl:.3} - 0.05", fraction * 100.0));
        }
    }
    verdict("9 (label efficiency)", parity && floor_ok, &detail);
}

#[test]
fn criterion_10_per_mode_ordering() {
    let runs = headline();
    let mut recalls: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for run in &runs.content_sage {
        for row in &run.metrics.per_mode {
            if let Some(r) = row.recall {
                recalls.entry(match row.mode.as_str() {
                    "both" => "both",
                    "tool_input" => "tool_input",
                    "tool_output" => "tool_output",
                    _ => continue,
                })
                .or_default()
                .push(r);
            }
        }
    }
    let mean = |key: &str| mean_sd(recalls.get(key).expect("mode present")).0;
    let both = mean("both");
    let output = mean("tool_output");
    let input = mean("tool_input");
    verdict(
        "10 (per-mode ordering)",
        both > output && output > input,
        &format!("recall(both) {both:.3} > recall(output_only) {output:.3} > recall(input_only) {input:.3}"),
    );
}

#[test]
fn criterion_11_cli_determinism() {
    use std::process::Command;

    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.jsonl");
    let spec = SyntheticSpec {
        n_tasks: 12,
        sessions_per_task: 8,
        ..SyntheticSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 7).unwrap();
    callguard::session::write_corpus(&corpus_path, &corpus).unwrap();

    let config_path = dir.path().join("run.toml");
    let out_a = dir.path().join("out_a");
    let out_b = dir.path().join("out_b");
    let config = format!(
        r#"
feature_mode = "content"
model = "logreg"
protocol = "task_stratified"
seeds = [7, 42]

[[datasets]]
path = "{corpus}"
source = "normalized"

[provider]
backend = "deterministic_test"
model_id = "deterministic-test"
dim = 384
"#,
        corpus = corpus_path.display()
    );
    std::fs::write(&config_path, &config).unwrap();

    let bin = env!("CARGO_BIN_EXE_callguard");
    let run_pipeline = |out: &std::path::Path| {
        for sub in ["train", "evaluate"] {
            let status = Command::new(bin)
                .args([
                    sub,
                    "--config",
                    config_path.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                ])
                .status()
                .unwrap();
            assert!(status.success(), "{sub} failed");
        }
    };
    run_pipeline(&out_a);
    run_pipeline(&out_b);

    let mut compared = 0;
    for name in [
        "metrics_seed7.json",
        "metrics_seed42.json",
        "metrics_aggregate.json",
    ] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
        compared += 1;
    }
    verdict(
        "11 (determinism)",
        compared == 3,
        "train + evaluate reruns produced bitwise-identical metric files",
    );
}

#[test]
fn criterion_12_full_data_smoke() {
    // Optional: runs only when a normalized RAS-Eval corpus is supplied.
    let Ok(path) = std::env::var("CALLGUARD_RASEVAL_PATH") else {
        println!(
            "criterion 12 (full-data smoke): SKIP — set CALLGUARD_RASEVAL_PATH to a \
             normalized corpus file to enable"
        );
        return;
    };
    let sessions = callguard::session::read_corpus(std::path::Path::new(&path)).unwrap();
    let provider = EmbeddingProvider::deterministic(384);
    let mut aurocs = Vec::new();
    for &seed in &SEEDS {
        let spec = RunSpec::new(
            ModelSpec::Logreg,
            FeatureMode::Content,
            Protocol::TaskStratified,
            seed,
        );
        let result = execute_run(&sessions, Some(&provider), &spec).unwrap();
        aurocs.push(result.metrics.auroc.unwrap());
    }
    let (mean, sd) = mean_sd(&aurocs);
    verdict(
        "12 (full-data smoke)",
        mean > 0.8,
        &format!("logreg content AUROC {mean:.3} ± {sd:.3} over 3 task-stratified seeds (> 0.8)"),
    );
}

#[test]
fn window_robustness_50_vs_500() {
    // Extending the substring prefix window leaves the edge set unchanged
    // on corpora where qualifying token matches subsume prefix matches.
    let corpus = generate_synthetic_corpus(&SyntheticSpec::default(), 7).unwrap();
    let narrow = GraphConfig::default();
    let wide = GraphConfig {
        data_flow_window: 500,
        ..GraphConfig::default()
    };
    for session in &corpus {
        let a = build_graph_with(session, &narrow).unwrap();
        let b = build_graph_with(session, &wide).unwrap();
        assert_eq!(a.edges, b.edges, "session {}", session.session_id);
    }
}
