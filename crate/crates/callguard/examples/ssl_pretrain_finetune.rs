//! Contrastive pre-training on benign sessions followed by supervised
//! fine-tuning: augmented graph views, NT-Xent over the dual-readout
//! embeddings, then a fresh head trained at the reduced rate.
//!
//! ```bash
//! cargo run --example ssl_pretrain_finetune
//! ```

use callguard::embed::EmbeddingProvider;
use callguard::eval::{auroc, generate_synthetic_corpus, task_stratified_split, SyntheticSpec};
use callguard::features::{featurize_sessions, FeatureConfig, FeatureMode};
use callguard::graph::{GraphConfig, SessionGraph};
use callguard::nn::{score_graphs, TrainConfig};
use callguard::session::ToolVocab;
use callguard::ssl::{augment_graph, finetune, pretrain_encoder, AugmentConfig, SslConfig};

fn main() -> callguard::Result<()> {
    let spec = SyntheticSpec {
        n_tasks: 20,
        sessions_per_task: 10,
        ..SyntheticSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 7)?;
    let provider = EmbeddingProvider::deterministic(384);

    let split = task_stratified_split(&corpus, (0.7, 0.1, 0.2), 7)?;
    let train_sessions: Vec<_> = corpus
        .iter()
        .filter(|s| split.train.contains(&s.session_id))
        .collect();
    let vocab = ToolVocab::build_iter(train_sessions.iter().copied())?;
    let feature = FeatureConfig::new(FeatureMode::Content, vocab);
    let graphs = featurize_sessions(&corpus, &feature, Some(&provider), &GraphConfig::default())?;
    let pick = |ids: &std::collections::BTreeSet<String>| -> Vec<&SessionGraph> {
        graphs.iter().filter(|g| ids.contains(&g.session_id)).collect()
    };
    let (train, val, test) = (pick(&split.train), pick(&split.val), pick(&split.test));

    // Augmentation: per-entry feature masking and undirected edge dropping,
    // with self-loops inserted so every node keeps degree >= 1.
    let augment = AugmentConfig::default();
    let mut rng = callguard::rng::substream(7, "demo-augment");
    let view = augment_graph(train[0], &augment, &mut rng);
    println!(
        "augmented view of {}: {} -> {} edge entries, {:.1}% features masked",
        train[0].session_id,
        train[0].edges.len(),
        view.edges.len(),
        100.0 * view.node_features.iter().filter(|&&v| v == 0.0).count() as f64
            / view.node_features.len() as f64
    );

    // Phase 1: NT-Xent pre-training on benign training graphs only.
    let benign: Vec<&SessionGraph> = train.iter().filter(|g| !g.is_attack()).copied().collect();
    let ssl = SslConfig::default();
    let train_cfg = TrainConfig::default().with_seed(7);
    println!("\npre-training on {} benign graphs ({} epochs)...", benign.len(), ssl.pretrain_epochs);
    let pretrained = pretrain_encoder(&benign, &ssl, &augment, &train_cfg)?;
    println!(
        "contrastive loss: first epoch {:.4} -> last epoch {:.4}",
        pretrained.loss_history.first().unwrap(),
        pretrained.loss_history.last().unwrap()
    );

    // Phase 2: unfreeze and fine-tune with labels at lr 1e-4.
    let tuned = finetune(pretrained.encoder, &train, &val, &ssl, &train_cfg)?;
    let scores = score_graphs(&tuned.model, &test)?;
    let labels: Vec<bool> = test.iter().map(|g| g.is_attack()).collect();
    println!(
        "fine-tuned test AUROC: {:.3} (best validation {:.3})",
        auroc(&scores, &labels)?,
        tuned.best_val_auroc
    );
    Ok(())
}
