//! End-to-end run orchestration: split, vocabulary from the training
//! partition, featurization, model training, and test-set evaluation —
//! everything derived from one seed so runs are reproducible bit for bit.

use serde::{Deserialize, Serialize};

use crate::artifact::{ModelParams, TrainedModel};
use crate::classical::{
    train_linear_svm, train_logreg, train_random_forest, ClassicalModel, ForestConfig,
    LabeledMatrix, LogregConfig, SvmConfig,
};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::eval::metrics::{classification_metrics, mean_sd, per_mode_breakdown, MetricsReport};
use crate::eval::split::{label_stratified_split, task_stratified_split, Protocol, SplitSpec};
use crate::features::{featurize_sessions, pooled_matrix, FeatureConfig, FeatureMode};
use crate::graph::{GraphConfig, SessionGraph};
use crate::nn::{score_graphs, train_supervised, Architecture, TrainConfig};
use crate::session::{Session, ToolVocab};
use crate::ssl::{finetune, pretrain_encoder, AugmentConfig, SslConfig};

/// Which detector family a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    Logreg,
    LinearSvm,
    RandomForest,
    Mlp,
    Sage,
    SslSage,
}

impl ModelSpec {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelSpec::Logreg => "logreg",
            ModelSpec::LinearSvm => "linear_svm",
            ModelSpec::RandomForest => "random_forest",
            ModelSpec::Mlp => "mlp",
            ModelSpec::Sage => "sage",
            ModelSpec::SslSage => "ssl_sage",
        }
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(ModelSpec::Logreg),
            "linear_svm" => Ok(ModelSpec::LinearSvm),
            "random_forest" => Ok(ModelSpec::RandomForest),
            "mlp" => Ok(ModelSpec::Mlp),
            "sage" => Ok(ModelSpec::Sage),
            "ssl_sage" => Ok(ModelSpec::SslSage),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Everything one training run needs besides the corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSpec {
    pub model: ModelSpec,
    pub mode: FeatureMode,
    pub protocol: Protocol,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub embedding_dim: usize,
    pub train: TrainConfig,
    pub ssl: SslConfig,
    pub augment: AugmentConfig,
    pub graph: GraphConfig,
}

impl RunSpec {
    pub fn new(model: ModelSpec, mode: FeatureMode, protocol: Protocol, seed: u64) -> Self {
        RunSpec {
            model,
            mode,
            protocol,
            ratios: (0.7, 0.1, 0.2),
            seed,
            embedding_dim: crate::embed::DEFAULT_DIM,
            train: TrainConfig::default().with_seed(seed),
            ssl: SslConfig::default(),
            augment: AugmentConfig::default(),
            graph: GraphConfig::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }
}

/// Outcome of one seeded run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub metrics: MetricsReport,
    pub split: SplitSpec,
    pub test_scores: Vec<f64>,
    pub test_ids: Vec<String>,
    #[serde(skip)]
    pub artifact: Option<TrainedModel>,
}

fn split_for(sessions: &[Session], spec: &RunSpec) -> Result<SplitSpec> {
    match spec.protocol {
        Protocol::TaskStratified => task_stratified_split(sessions, spec.ratios, spec.seed),
        Protocol::LabelStratified => label_stratified_split(sessions, spec.ratios, spec.seed),
        other => Err(Error::Config(format!(
            "execute_run needs a holdout protocol, got {other}"
        ))),
    }
}

fn partition_graphs<'a>(
    graphs: &'a [SessionGraph],
    split: &SplitSpec,
) -> (
    Vec<&'a SessionGraph>,
    Vec<&'a SessionGraph>,
    Vec<&'a SessionGraph>,
) {
    let pick = |set: &std::collections::BTreeSet<String>| {
        graphs
            .iter()
            .filter(|g| set.contains(&g.session_id))
            .collect::<Vec<_>>()
    };
    (pick(&split.train), pick(&split.val), pick(&split.test))
}

/// Run one full train/evaluate cycle. The tool vocabulary is built from the
/// training partition only, so unseen test-time tools map to the all-zeros
/// one-hot block.
pub fn execute_run(
    sessions: &[Session],
    provider: Option<&EmbeddingProvider>,
    spec: &RunSpec,
) -> Result<RunResult> {
    let split = split_for(sessions, spec)?;
    let train_sessions: Vec<&Session> = sessions
        .iter()
        .filter(|s| split.train.contains(&s.session_id))
        .collect();
    let vocab = ToolVocab::build_iter(train_sessions.iter().copied())?;
    let mut feature = FeatureConfig::new(spec.mode, vocab);
    feature.embedding_dim = spec.embedding_dim;
    if feature.needs_provider() && provider.is_none() {
        return Err(Error::Config(format!(
            "model {} with mode {} requires an embedding provider",
            spec.model.as_str(),
            spec.mode
        )));
    }

    let graphs = featurize_sessions(sessions, &feature, provider, &spec.graph)?;
    let (train_g, val_g, test_g) = partition_graphs(&graphs, &split);
    if test_g.is_empty() {
        return Err(Error::Validation("test partition is empty".into()));
    }

    let train_cfg = TrainConfig {
        seed: spec.seed,
        ..spec.train.clone()
    };

    let (params, best_val) = match spec.model {
        ModelSpec::Logreg | ModelSpec::LinearSvm | ModelSpec::RandomForest => {
            let owned: Vec<SessionGraph> = train_g.iter().map(|&g| g.clone()).collect();
            let x = pooled_matrix(&owned)?;
            let y: Vec<bool> = train_g.iter().map(|g| g.is_attack()).collect();
            let data = LabeledMatrix::new(x, y)?;
            let model = match spec.model {
                ModelSpec::Logreg => {
                    ClassicalModel::Logreg(train_logreg(&data, &LogregConfig::default())?)
                }
                ModelSpec::LinearSvm => ClassicalModel::LinearSvm(train_linear_svm(
                    &data,
                    &SvmConfig {
                        seed: spec.seed,
                        ..SvmConfig::default()
                    },
                )?),
                ModelSpec::RandomForest => ClassicalModel::RandomForest(train_random_forest(
                    &data,
                    &ForestConfig {
                        seed: spec.seed,
                        ..ForestConfig::default()
                    },
                )?),
                _ => unreachable!(),
            };
            (ModelParams::Classical(model), None)
        }
        ModelSpec::Mlp | ModelSpec::Sage => {
            let arch = if spec.model == ModelSpec::Mlp {
                Architecture::Mlp
            } else {
                Architecture::Sage
            };
            let trained = train_supervised(&train_g, &val_g, &train_cfg, arch)?;
            (
                ModelParams::Neural(trained.model),
                Some(trained.best_val_auroc),
            )
        }
        ModelSpec::SslSage => {
            let benign: Vec<&SessionGraph> = train_g
                .iter()
                .filter(|g| !g.is_attack())
                .copied()
                .collect();
            let pretrained = pretrain_encoder(&benign, &spec.ssl, &spec.augment, &train_cfg)?;
            let trained = finetune(pretrained.encoder, &train_g, &val_g, &spec.ssl, &train_cfg)?;
            (
                ModelParams::Neural(trained.model),
                Some(trained.best_val_auroc),
            )
        }
    };

    // Score the held-out test fold.
    let test_scores = match &params {
        ModelParams::Classical(m) => {
            let owned: Vec<SessionGraph> = test_g.iter().map(|&g| g.clone()).collect();
            m.predict_score(&pooled_matrix(&owned)?)?
        }
        ModelParams::Neural(m) => score_graphs(m, &test_g)?,
    };
    let test_labels: Vec<bool> = test_g.iter().map(|g| g.is_attack()).collect();
    let test_modes: Vec<Option<crate::session::AttackMode>> =
        test_g.iter().map(|g| g.attack_mode.clone()).collect();

    let mut metrics = classification_metrics(&test_scores, &test_labels, 0.5);
    metrics.per_mode = per_mode_breakdown(&test_scores, &test_labels, &test_modes, 0.5);
    metrics.seed = Some(spec.seed);
    metrics.protocol = Some(spec.protocol.to_string());

    let artifact = TrainedModel::new(
        spec.model.as_str(),
        feature,
        spec.graph.clone(),
        spec.seed,
        best_val,
        params,
    );

    Ok(RunResult {
        metrics,
        split,
        test_scores,
        test_ids: test_g.iter().map(|g| g.session_id.clone()).collect(),
        artifact: Some(artifact),
    })
}

/// One row of the leakage experiment: the same model spec under the
/// task-disjoint and the label-stratified (random) protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakageReport {
    pub mode: FeatureMode,
    pub model: ModelSpec,
    /// (seed, task-disjoint AUROC, random-split AUROC).
    pub per_seed: Vec<(u64, f64, f64)>,
    pub mean_task_disjoint: f64,
    pub mean_random: f64,
    /// `mean_random − mean_task_disjoint`.
    pub gap: f64,
}

/// Train the identical model spec under both protocols with matched seeds
/// and report the AUROC inflation of the random split.
pub fn leakage_gap(
    sessions: &[Session],
    provider: Option<&EmbeddingProvider>,
    base: &RunSpec,
    seeds: &[u64],
) -> Result<LeakageReport> {
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let task_spec = RunSpec {
            protocol: Protocol::TaskStratified,
            ..base.clone().with_seed(seed)
        };
        let random_spec = RunSpec {
            protocol: Protocol::LabelStratified,
            ..base.clone().with_seed(seed)
        };
        let task = execute_run(sessions, provider, &task_spec)?;
        let random = execute_run(sessions, provider, &random_spec)?;
        let task_auroc = task
            .metrics
            .auroc
            .ok_or_else(|| Error::UndefinedMetric("task-disjoint AUROC undefined".into()))?;
        let random_auroc = random
            .metrics
            .auroc
            .ok_or_else(|| Error::UndefinedMetric("random-split AUROC undefined".into()))?;
        per_seed.push((seed, task_auroc, random_auroc));
    }
    let (mean_task, _) = mean_sd(&per_seed.iter().map(|(_, t, _)| *t).collect::<Vec<_>>());
    let (mean_random, _) = mean_sd(&per_seed.iter().map(|(_, _, r)| *r).collect::<Vec<_>>());
    Ok(LeakageReport {
        mode: base.mode,
        model: base.model,
        per_seed,
        mean_task_disjoint: mean_task,
        mean_random,
        gap: mean_random - mean_task,
    })
}
