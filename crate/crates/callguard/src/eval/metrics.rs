//! Classification metrics: AUROC, AUPRC, thresholded metrics, and the
//! per-attack-mode breakdown. The attack class is the positive class
//! everywhere, and FPR is the fraction of benign sessions flagged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::AttackMode;

/// Probability that a uniformly random attack scores above a uniformly
/// random benign, ties counted one half (rank / Mann–Whitney formulation).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_aligned(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "auroc needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Average ranks within tie groups; ranks are 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Area under the precision-recall curve via the average-precision
/// summation Σ (R_k − R_{k−1}) · P_k over descending unique score
/// thresholds.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_aligned(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("auprc needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

/// Confusion counts at a threshold with attack as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = ConfusionCounts::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

/// Per-attack-mode row of the breakdown table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: String,
    pub n: usize,
    pub recall: Option<f64>,
    pub auroc: Option<f64>,
    /// Set when a metric is omitted because a class is absent in the fold.
    pub flag: Option<String>,
}

/// Evaluation outputs for one run. Fields are `None` when undefined for the
/// inputs (single-class folds, no predicted positives).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub macro_f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub fpr: Option<f64>,
    pub confusion: ConfusionCounts,
    pub per_mode: Vec<ModeRow>,
    pub seed: Option<u64>,
    pub protocol: Option<String>,
}

fn f1(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Threshold metrics at `threshold` (default elsewhere: 0.5). Macro F1 is
/// the unweighted mean of the attack-class and benign-class F1.
pub fn classification_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> MetricsReport {
    let confusion = ConfusionCounts::at_threshold(scores, labels, threshold);
    let ConfusionCounts { tp, fp, tn, fn_ } = confusion;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let fpr = ratio(fp, fp + tn);
    let f1_attack = f1(precision, recall);
    let f1_benign = f1(ratio(tn, tn + fn_), ratio(tn, tn + fp));
    let macro_f1 = match (f1_attack, f1_benign) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        _ => None,
    };
    MetricsReport {
        auroc: auroc(scores, labels).ok(),
        auprc: auprc(scores, labels).ok(),
        macro_f1,
        precision,
        recall,
        fpr,
        confusion,
        per_mode: Vec::new(),
        seed: None,
        protocol: None,
    }
}

/// Per-attack-mode breakdown: for each mode present in the fold, its count,
/// recall at the threshold, and AUROC of that mode's attacks against all
/// benign sessions. Rows are flagged instead of erroring when a class is
/// absent.
pub fn per_mode_breakdown(
    scores: &[f64],
    labels: &[bool],
    modes: &[Option<AttackMode>],
    threshold: f64,
) -> Vec<ModeRow> {
    assert_eq!(scores.len(), labels.len());
    assert_eq!(scores.len(), modes.len());
    let benign_scores: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    let mut tags: Vec<String> = modes
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .filter_map(|(m, _)| m.as_ref().map(|m| m.as_tag().to_string()))
        .collect();
    tags.sort();
    tags.dedup();

    tags.into_iter()
        .map(|tag| {
            let mode_scores: Vec<f64> = scores
                .iter()
                .zip(labels)
                .zip(modes)
                .filter(|((_, &l), m)| l && m.as_ref().map(|m| m.as_tag()) == Some(tag.as_str()))
                .map(|((&s, _), _)| s)
                .collect();
            let n = mode_scores.len();
            let recall = ratio(mode_scores.iter().filter(|&&s| s >= threshold).count(), n);
            let (auroc_value, flag) = if benign_scores.is_empty() {
                (None, Some("no benign sessions in fold".to_string()))
            } else {
                let mut all = mode_scores.clone();
                all.extend_from_slice(&benign_scores);
                let mut lab = vec![true; n];
                lab.extend(std::iter::repeat(false).take(benign_scores.len()));
                (auroc(&all, &lab).ok(), None)
            };
            ModeRow {
                mode: tag,
                n,
                recall,
                auroc: auroc_value,
                flag,
            }
        })
        .collect()
}

/// ROC curve points (FPR, TPR), one per unique threshold, for plotting.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        i = j + 1;
    }
    points
}

/// Precision-recall curve points (recall, precision) per unique threshold.
pub fn pr_points(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((tp as f64 / n_pos as f64, tp as f64 / (tp + fp) as f64));
        i = j + 1;
    }
    points
}

fn check_aligned(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("scores must be finite".into()));
    }
    Ok(())
}

/// Mean and sample standard deviation (n−1 denominator; 0 for n < 2).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

// Independent oracles for the rank-based implementations; kept test-only.
#[cfg(test)]
pub(crate) mod oracle {
    /// AUROC by explicit enumeration of all positive/negative pairs.
    pub fn auroc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
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
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        wins / total
    }

    /// Average precision by a naive sweep that re-counts the confusion
    /// matrix at every unique threshold.
    pub fn auprc_naive_sweep(scores: &[f64], labels: &[bool]) -> f64 {
        let n_pos = labels.iter().filter(|&&l| l).count();
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let mut prev_recall = 0.0;
        let mut ap = 0.0;
        for t in thresholds {
            let tp = scores
                .iter()
                .zip(labels)
                .filter(|(&s, &l)| s >= t && l)
                .count();
            let predicted = scores.iter().filter(|&&s| s >= t).count();
            let recall = tp as f64 / n_pos as f64;
            let precision = tp as f64 / predicted as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        ap
    }
}
