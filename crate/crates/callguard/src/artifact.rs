//! Versioned model artifact: parameters plus the feature configuration they
//! were trained with, serializable to a single JSON file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classical::ClassicalModel;
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::features::{featurize_sessions, pooled_matrix, FeatureConfig};
use crate::graph::GraphConfig;
use crate::nn::{score_graphs, NeuralModel};
use crate::session::Session;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelParams {
    Classical(ClassicalModel),
    Neural(NeuralModel),
}

/// A trained, reloadable classifier artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    /// Model family tag: logreg, linear_svm, random_forest, mlp, sage,
    /// ssl_sage.
    pub kind: String,
    pub feature: FeatureConfig,
    pub feature_digest: String,
    pub graph: GraphConfig,
    pub seed: u64,
    pub best_val_auroc: Option<f64>,
    pub params: ModelParams,
}

impl TrainedModel {
    pub fn new(
        kind: &str,
        feature: FeatureConfig,
        graph: GraphConfig,
        seed: u64,
        best_val_auroc: Option<f64>,
        params: ModelParams,
    ) -> Self {
        let feature_digest = feature.digest();
        TrainedModel {
            version: ARTIFACT_VERSION,
            kind: kind.to_string(),
            feature,
            feature_digest,
            graph,
            seed,
            best_val_auroc,
            params,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        let model: TrainedModel = serde_json::from_str(&text)?;
        if model.version != ARTIFACT_VERSION {
            return Err(Error::Config(format!(
                "artifact version {} is not supported (expected {ARTIFACT_VERSION})",
                model.version
            )));
        }
        Ok(model)
    }

    /// Featurize sessions with the stored configuration and score them.
    pub fn predict_sessions(
        &self,
        sessions: &[Session],
        provider: Option<&EmbeddingProvider>,
    ) -> Result<Vec<f64>> {
        let graphs = featurize_sessions(sessions, &self.feature, provider, &self.graph)?;
        match &self.params {
            ModelParams::Classical(m) => m.predict_score(&pooled_matrix(&graphs)?),
            ModelParams::Neural(m) => {
                let refs: Vec<&crate::graph::SessionGraph> = graphs.iter().collect();
                score_graphs(m, &refs)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{train_logreg, LabeledMatrix, LogregConfig};
    use crate::features::FeatureMode;
    use crate::session::ToolVocab;

    #[test]
    fn artifact_round_trip_preserves_scores() {
        let sessions: Vec<Session> = (0..12)
            .map(|i| {
                let label = if i % 2 == 0 {
                    crate::session::Label::Benign
                } else {
                    crate::session::Label::Attack
                };
                Session {
                    session_id: format!("s{i}"),
                    source: "t".into(),
                    task_id: None,
                    label,
                    attack_mode: (label == crate::session::Label::Attack)
                        .then(|| crate::session::AttackMode::Both),
                    calls: vec![crate::session::ToolCall::new(
                        0,
                        format!("tool{}", i % 3),
                        format!("{{\"k\":{i}}}"),
                        format!("resp {i} data"),
                    )],
                }
            })
            .collect();
        let vocab = ToolVocab::build(&sessions).unwrap();
        let feature = FeatureConfig::new(FeatureMode::Metadata, vocab);
        let graphs =
            featurize_sessions(&sessions, &feature, None, &GraphConfig::default()).unwrap();
        let x = pooled_matrix(&graphs).unwrap();
        let y: Vec<bool> = sessions.iter().map(Session::is_attack).collect();
        let model = train_logreg(
            &LabeledMatrix::new(x, y).unwrap(),
            &LogregConfig::default(),
        )
        .unwrap();
        let artifact = TrainedModel::new(
            "logreg",
            feature,
            GraphConfig::default(),
            7,
            None,
            ModelParams::Classical(crate::classical::ClassicalModel::Logreg(model)),
        );

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        artifact.save(&path).unwrap();
        let reloaded = TrainedModel::load(&path).unwrap();
        assert_eq!(reloaded.feature_digest, artifact.feature_digest);
        let a = artifact.predict_sessions(&sessions, None).unwrap();
        let b = reloaded.predict_sessions(&sessions, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_artifact_is_missing_input() {
        let err = TrainedModel::load(Path::new("/nonexistent/model.json")).unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
        assert_eq!(err.exit_code(), 4);
    }
}
