//! File-driven command layer behind the `callguard` binary: a TOML run
//! configuration plus the ingest / featurize / train / evaluate / sweep /
//! report commands. Every command is rerunnable: identical inputs, config,
//! and seed produce identical output files (timestamps live only in the
//! train manifest).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapters::{adapt_record, AdaptError};
use crate::artifact::TrainedModel;
use crate::embed::{EmbeddingProvider, ProviderConfig};
use crate::error::{Error, Result};
use crate::eval::metrics::{mean_sd, MetricsReport};
use crate::eval::split::Protocol;
use crate::eval::sweep::{label_efficiency_sweep, SweepMethod, SweepOptions};
use crate::features::{featurize_sessions, write_feature_dump, FeatureConfig, FeatureMode};
use crate::graph::{write_graph_dump, GraphConfig};
use crate::nn::TrainConfig;
use crate::pipeline::{execute_run, leakage_gap, LeakageReport, ModelSpec, RunSpec};
use crate::session::{
    corpus_stats, parse_session_line, read_corpus, serialize_session, CorpusStats, Session,
    ToolVocab,
};
use crate::ssl::{AugmentConfig, SslConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    /// "normalized", "ras_eval", or "atbench".
    pub source: String,
}

fn default_ratios() -> (f64, f64, f64) {
    (0.7, 0.1, 0.2)
}

fn default_seeds() -> Vec<u64> {
    vec![7, 42, 123]
}

fn default_fractions() -> Vec<f64> {
    vec![0.01, 0.05, 0.10, 0.25, 0.50, 1.00]
}

fn default_folds() -> usize {
    5
}

/// Sweep-specific settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            fractions: default_fractions(),
            folds: default_folds(),
        }
    }
}

/// One reproducible run, file form. Flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub datasets: Vec<DatasetEntry>,
    #[serde(default = "default_feature_mode")]
    pub feature_mode: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_protocol")]
    pub protocol: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_ratios")]
    pub ratios: (f64, f64, f64),
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Absent means no embedding backend is available.
    #[serde(default)]
    pub provider: Option<ProviderConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub ssl: SslConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_feature_mode() -> String {
    "content".into()
}
fn default_model() -> String {
    "sage".into()
}
fn default_protocol() -> String {
    "task_stratified".into()
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/out")
}


impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            datasets: Vec::new(),
            feature_mode: default_feature_mode(),
            model: default_model(),
            protocol: default_protocol(),
            seeds: default_seeds(),
            ratios: default_ratios(),
            out_dir: default_out_dir(),
            provider: Some(ProviderConfig::default()),
            train: TrainConfig::default(),
            ssl: SslConfig::default(),
            augment: AugmentConfig::default(),
            graph: GraphConfig::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("serializing config: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Content digest of the canonical (JSON) form of this configuration.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(canonical.as_bytes()))
    }

    pub fn feature_mode(&self) -> Result<FeatureMode> {
        self.feature_mode.parse()
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.model.parse()
    }

    pub fn protocol_enum(&self) -> Result<Protocol> {
        self.protocol.parse()
    }

    fn run_spec(&self, seed: u64) -> Result<RunSpec> {
        Ok(RunSpec {
            model: self.model_spec()?,
            mode: self.feature_mode()?,
            protocol: self.protocol_enum()?,
            ratios: self.ratios,
            seed,
            embedding_dim: self
                .provider
                .as_ref()
                .map_or(crate::embed::DEFAULT_DIM, |p| p.dim),
            train: TrainConfig {
                seed,
                ..self.train.clone()
            },
            ssl: self.ssl.clone(),
            augment: self.augment.clone(),
            graph: self.graph.clone(),
        })
    }

    /// Build the provider when the feature mode needs one.
    pub fn provider(&self) -> Result<Option<EmbeddingProvider>> {
        if self.feature_mode()? == FeatureMode::Metadata {
            return Ok(None);
        }
        match &self.provider {
            Some(cfg) => Ok(Some(EmbeddingProvider::from_config(cfg)?)),
            None => Err(Error::Config(format!(
                "feature mode {} requires an embedding provider, but none is configured",
                self.feature_mode
            ))),
        }
    }

    /// Load and merge every configured dataset.
    pub fn load_sessions(&self) -> Result<Vec<Session>> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        let mut sessions = Vec::new();
        for entry in &self.datasets {
            match entry.source.as_str() {
                "normalized" => sessions.extend(read_corpus(&entry.path)?),
                source => {
                    let text = std::fs::read_to_string(&entry.path).map_err(|e| {
                        Error::MissingInput(format!("{}: {e}", entry.path.display()))
                    })?;
                    for line in text.lines().filter(|l| !l.trim().is_empty()) {
                        match adapt_record(line, source) {
                            Ok(s) => sessions.push(s),
                            Err(AdaptError::Skip(_)) => {}
                            Err(AdaptError::Hard(e)) => return Err(e),
                        }
                    }
                }
            }
        }
        Ok(sessions)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Outcome of `ingest`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub written: usize,
    pub skipped: usize,
    pub bad: usize,
    pub stats: CorpusStats,
}

/// Normalize a raw trajectory file into the session format and report
/// corpus statistics. Hard parse errors abort unless `skip_bad` is set.
pub fn cmd_ingest(input: &Path, source: &str, out: &Path, skip_bad: bool) -> Result<IngestOutcome> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", input.display())))?;
    let mut sessions = Vec::new();
    let mut skipped = 0usize;
    let mut bad = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = if source == "normalized" {
            parse_session_line(line).map_err(AdaptError::Hard)
        } else {
            adapt_record(line, source)
        };
        match parsed {
            Ok(s) => sessions.push(s),
            Err(AdaptError::Skip(_)) => skipped += 1,
            Err(AdaptError::Hard(e)) => {
                if skip_bad {
                    bad += 1;
                    log::warn!("{}:{}: {e}", input.display(), lineno + 1);
                } else {
                    return Err(e);
                }
            }
        }
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(out)?);
    for s in &sessions {
        writeln!(file, "{}", serialize_session(s))?;
    }
    Ok(IngestOutcome {
        written: sessions.len(),
        skipped,
        bad,
        stats: corpus_stats(&sessions),
    })
}

/// Featurize a normalized corpus into the dump format (and optionally dump
/// the graphs). Standalone featurization builds the vocabulary over the
/// whole input; training pipelines build it from the train split instead.
pub fn cmd_featurize(
    config: &RunConfig,
    corpus: &Path,
    out: &Path,
    graphs_out: Option<&Path>,
) -> Result<()> {
    let sessions = read_corpus(corpus)?;
    let vocab = ToolVocab::build(&sessions)?;
    let mut feature = FeatureConfig::new(config.feature_mode()?, vocab);
    if let Some(p) = &config.provider {
        feature.embedding_dim = p.dim;
    }
    let provider = config.provider()?;
    let graphs = featurize_sessions(&sessions, &feature, provider.as_ref(), &config.graph)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_feature_dump(&graphs, std::io::BufWriter::new(std::fs::File::create(out)?))?;
    if let Some(gpath) = graphs_out {
        write_graph_dump(&graphs, std::io::BufWriter::new(std::fs::File::create(gpath)?))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainManifest {
    pub config_digest: String,
    pub inputs: Vec<(PathBuf, String)>,
    pub model: String,
    pub feature_mode: String,
    pub protocol: String,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<PathBuf>,
    pub metrics: BTreeMap<u64, MetricsReport>,
    /// Wall-clock stamp; the only non-reproducible field of a run.
    pub created_unix: u64,
}

/// Train one artifact per configured seed; write artifacts, split specs,
/// and the run manifest.
pub fn cmd_train(config: &RunConfig) -> Result<TrainManifest> {
    let sessions = config.load_sessions()?;
    let provider = config.provider()?;
    std::fs::create_dir_all(&config.out_dir)?;

    let mut artifacts = Vec::new();
    let mut metrics = BTreeMap::new();
    for &seed in &config.seeds {
        let spec = config.run_spec(seed)?;
        let result = execute_run(&sessions, provider.as_ref(), &spec)?;
        let artifact_path = config.out_dir.join(format!("model_seed{seed}.json"));
        result
            .artifact
            .as_ref()
            .expect("execute_run returns an artifact")
            .save(&artifact_path)?;
        write_json(
            &config.out_dir.join(format!("split_seed{seed}.json")),
            &result.split,
        )?;
        metrics.insert(seed, result.metrics);
        artifacts.push(artifact_path);
    }

    let mut inputs = Vec::new();
    for entry in &config.datasets {
        inputs.push((entry.path.clone(), file_digest(&entry.path)?));
    }
    let manifest = TrainManifest {
        config_digest: config.digest(),
        inputs,
        model: config.model.clone(),
        feature_mode: config.feature_mode.clone(),
        protocol: config.protocol.clone(),
        seeds: config.seeds.clone(),
        artifacts,
        metrics,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_json(&config.out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub per_seed: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateOutcome {
    pub per_seed: BTreeMap<u64, MetricsReport>,
    pub aggregate: Vec<AggregateRow>,
}

/// Evaluate saved artifacts on the recomputed test split of each seed;
/// write one metrics file per seed, the aggregate table, and (optionally)
/// ROC/PR curve points.
pub fn cmd_evaluate(config: &RunConfig, curves: bool) -> Result<EvaluateOutcome> {
    let sessions = config.load_sessions()?;
    let provider = config.provider()?;
    std::fs::create_dir_all(&config.out_dir)?;

    let mut per_seed = BTreeMap::new();
    for &seed in &config.seeds {
        let artifact_path = config.out_dir.join(format!("model_seed{seed}.json"));
        let artifact = TrainedModel::load(&artifact_path)?;
        let spec = config.run_spec(seed)?;
        let split = match spec.protocol {
            Protocol::TaskStratified => {
                crate::eval::split::task_stratified_split(&sessions, spec.ratios, seed)?
            }
            Protocol::LabelStratified => {
                crate::eval::split::label_stratified_split(&sessions, spec.ratios, seed)?
            }
            other => return Err(Error::Config(format!("evaluate needs a holdout protocol, got {other}"))),
        };
        let test: Vec<Session> = sessions
            .iter()
            .filter(|s| split.test.contains(&s.session_id))
            .cloned()
            .collect();
        let scores = artifact.predict_sessions(&test, provider.as_ref())?;
        let labels: Vec<bool> = test.iter().map(Session::is_attack).collect();
        let modes: Vec<Option<crate::session::AttackMode>> =
            test.iter().map(|s| s.attack_mode.clone()).collect();
        let mut report = crate::eval::metrics::classification_metrics(&scores, &labels, 0.5);
        report.per_mode = crate::eval::metrics::per_mode_breakdown(&scores, &labels, &modes, 0.5);
        report.seed = Some(seed);
        report.protocol = Some(config.protocol.clone());
        write_json(&config.out_dir.join(format!("metrics_seed{seed}.json")), &report)?;
        if curves {
            write_json(
                &config.out_dir.join(format!("roc_seed{seed}.json")),
                &crate::eval::metrics::roc_points(&scores, &labels),
            )?;
            write_json(
                &config.out_dir.join(format!("pr_seed{seed}.json")),
                &crate::eval::metrics::pr_points(&scores, &labels),
            )?;
        }
        per_seed.insert(seed, report);
    }

    let mut aggregate = Vec::new();
    let fields: [(&str, fn(&MetricsReport) -> Option<f64>); 6] = [
        ("auroc", |r| r.auroc),
        ("auprc", |r| r.auprc),
        ("macro_f1", |r| r.macro_f1),
        ("precision", |r| r.precision),
        ("recall", |r| r.recall),
        ("fpr", |r| r.fpr),
    ];
    for (name, get) in fields {
        let pairs: Vec<(u64, f64)> = per_seed
            .iter()
            .filter_map(|(&s, r)| get(r).map(|v| (s, v)))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let values: Vec<f64> = pairs.iter().map(|(_, v)| *v).collect();
        let (mean, sd) = mean_sd(&values);
        aggregate.push(AggregateRow {
            metric: name.to_string(),
            mean,
            sd,
            per_seed: pairs,
        });
    }
    write_json(&config.out_dir.join("metrics_aggregate.json"), &aggregate)?;

    let mut table = String::new();
    table.push_str(&format!("{:<12} {:>10} {:>10}\n", "metric", "mean", "sd"));
    for row in &aggregate {
        table.push_str(&format!(
            "{:<12} {:>10.4} {:>10.4}\n",
            row.metric, row.mean, row.sd
        ));
    }
    std::fs::write(config.out_dir.join("metrics.txt"), table)?;

    Ok(EvaluateOutcome {
        per_seed,
        aggregate,
    })
}

/// Run the label-efficiency sweep and write the machine-readable cells plus
/// an aligned text table.
pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<crate::eval::sweep::SweepCell>> {
    let sessions = config.load_sessions()?;
    let provider = config.provider()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let opts = SweepOptions {
        fractions: config.sweep.fractions.clone(),
        folds: config.sweep.folds,
        seed: *config.seeds.first().unwrap_or(&7),
        mode: config.feature_mode()?,
        embedding_dim: config
            .provider
            .as_ref()
            .map_or(crate::embed::DEFAULT_DIM, |p| p.dim),
        train: config.train.clone(),
        ssl: config.ssl.clone(),
        augment: config.augment.clone(),
        graph: config.graph.clone(),
    };
    let cells = label_efficiency_sweep(
        &sessions,
        provider.as_ref(),
        &opts,
        &[SweepMethod::Supervised, SweepMethod::SslFinetune],
    )?;

    let mut jsonl = String::new();
    for cell in &cells {
        jsonl.push_str(&serde_json::to_string(cell)?);
        jsonl.push('\n');
    }
    std::fs::write(config.out_dir.join("sweep.jsonl"), jsonl)?;

    let mut table = String::new();
    table.push_str(&format!(
        "{:<10} {:<12} {:>10} {:>10}\n",
        "fraction", "method", "mean", "sd"
    ));
    for cell in &cells {
        table.push_str(&format!(
            "{:<10} {:<12} {:>10} {:>10}\n",
            format!("{:.0}%", cell.fraction * 100.0),
            cell.method,
            cell.mean.map_or("--".into(), |v| format!("{v:.4}")),
            cell.sd.map_or("--".into(), |v| format!("{v:.4}")),
        ));
    }
    std::fs::write(config.out_dir.join("sweep.txt"), table)?;
    Ok(cells)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub leakage: Vec<LeakageReport>,
    pub per_mode: Vec<crate::eval::metrics::ModeRow>,
}

/// Leakage-gap report (task-disjoint vs random split, metadata and content
/// feature modes) and/or the per-attack-mode breakdown table.
pub fn cmd_report(config: &RunConfig, leakage: bool, per_mode: bool) -> Result<ReportOutcome> {
    let sessions = config.load_sessions()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let mut outcome = ReportOutcome {
        leakage: Vec::new(),
        per_mode: Vec::new(),
    };

    if leakage {
        for mode in [FeatureMode::Metadata, FeatureMode::Content] {
            let provider = if mode == FeatureMode::Metadata {
                None
            } else {
                config.provider()?
            };
            let mut base = config.run_spec(*config.seeds.first().unwrap_or(&7))?;
            base.mode = mode;
            let report = leakage_gap(&sessions, provider.as_ref(), &base, &config.seeds)?;
            outcome.leakage.push(report);
        }
        write_json(&config.out_dir.join("leakage.json"), &outcome.leakage)?;
        let mut table = String::new();
        table.push_str(&format!(
            "{:<10} {:>14} {:>10} {:>8}\n",
            "features", "task_disjoint", "random", "gap"
        ));
        for r in &outcome.leakage {
            table.push_str(&format!(
                "{:<10} {:>14.4} {:>10.4} {:>8.4}\n",
                r.mode.to_string(),
                r.mean_task_disjoint,
                r.mean_random,
                r.gap
            ));
        }
        std::fs::write(config.out_dir.join("leakage.txt"), table)?;
    }

    if per_mode {
        let provider = config.provider()?;
        // Aggregate per-mode rows over the configured seeds.
        let mut acc: BTreeMap<String, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for &seed in &config.seeds {
            let spec = config.run_spec(seed)?;
            let result = execute_run(&sessions, provider.as_ref(), &spec)?;
            for row in &result.metrics.per_mode {
                let entry = acc.entry(row.mode.clone()).or_insert((0, Vec::new(), Vec::new()));
                entry.0 += row.n;
                if let Some(r) = row.recall {
                    entry.1.push(r);
                }
                if let Some(a) = row.auroc {
                    entry.2.push(a);
                }
            }
        }
        for (mode, (n, recalls, aurocs)) in acc {
            outcome.per_mode.push(crate::eval::metrics::ModeRow {
                mode,
                n,
                recall: (!recalls.is_empty()).then(|| mean_sd(&recalls).0),
                auroc: (!aurocs.is_empty()).then(|| mean_sd(&aurocs).0),
                flag: None,
            });
        }
        write_json(&config.out_dir.join("per_mode.json"), &outcome.per_mode)?;
        let mut table = String::new();
        table.push_str(&format!(
            "{:<14} {:>6} {:>10} {:>10}\n",
            "attack_mode", "N", "recall", "auroc"
        ));
        for row in &outcome.per_mode {
            table.push_str(&format!(
                "{:<14} {:>6} {:>10} {:>10}\n",
                row.mode,
                row.n,
                row.recall.map_or("--".into(), |v| format!("{v:.4}")),
                row.auroc.map_or("--".into(), |v| format!("{v:.4}")),
            ));
        }
        std::fs::write(config.out_dir.join("per_mode.txt"), table)?;
    }

    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut config = RunConfig::default();
        config.datasets.push(DatasetEntry {
            path: PathBuf::from("corpus.jsonl"),
            source: "normalized".into(),
        });
        config.seeds = vec![7, 42, 123];
        let text = toml::to_string_pretty(&config).unwrap();
        let reloaded: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(reloaded, config);
    }

    #[test]
    fn content_mode_without_provider_is_exit_code_3() {
        let config = RunConfig {
            provider: None,
            feature_mode: "content".into(),
            ..RunConfig::default()
        };
        let err = config.provider().unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn metadata_mode_needs_no_provider() {
        let config = RunConfig {
            provider: None,
            feature_mode: "metadata".into(),
            ..RunConfig::default()
        };
        assert!(config.provider().unwrap().is_none());
    }
}
