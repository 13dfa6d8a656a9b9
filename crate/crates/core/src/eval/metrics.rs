//! Confusion counts, classification metrics and subject aggregation.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::nn::sigmoid;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn from_predictions(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = Self::default();
        for (pred, truth) in pairs {
            match (pred, truth) {
                (Label::Addicted, Label::Addicted) => c.tp += 1,
                (Label::Addicted, Label::NotAddicted) => c.fp += 1,
                (Label::NotAddicted, Label::NotAddicted) => c.tn += 1,
                (Label::NotAddicted, Label::Addicted) => c.fn_ += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    /// Metrics whose denominator was zero (reported as 0).
    #[serde(default)]
    pub zero_division: Vec<String>,
}

pub const METRIC_NAMES: [&str; 5] = ["accuracy", "precision", "recall", "f1", "roc_auc"];

impl MetricSet {
    pub fn values(&self) -> [f64; 5] {
        [self.accuracy, self.precision, self.recall, self.f1, self.roc_auc]
    }
}

/// Decision rule shared by every classifier: Addicted iff `p > 0.5`.
pub fn decide(probability: f64) -> Label {
    if probability > 0.5 {
        Label::Addicted
    } else {
        Label::NotAddicted
    }
}

/// Mean window probability and the resulting label.
pub fn aggregate_subject(window_logits: &[f64]) -> (f64, Label) {
    assert!(!window_logits.is_empty(), "aggregate_subject needs at least one logit");
    let p = window_logits.iter().map(|&z| sigmoid(z)).sum::<f64>() / window_logits.len() as f64;
    (p, decide(p))
}

fn ratio(num: usize, den: usize, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Area under the ROC curve as the normalised Mann–Whitney statistic; ties
/// count one half. `None` when either class is absent.
pub fn roc_auc(scores: &[(f64, Label)]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().filter(|s| s.1 == Label::Addicted).map(|s| s.0).collect();
    let neg: Vec<f64> = scores.iter().filter(|s| s.1 == Label::NotAddicted).map(|s| s.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&v| (v, true)).chain(neg.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ranks = average_ranks(&all.iter().map(|a| a.0).collect::<Vec<_>>());
    let rank_sum: f64 = all.iter().zip(&ranks).filter(|(a, _)| a.1).map(|(_, r)| r).sum();
    let n1 = pos.len() as f64;
    let u = rank_sum - n1 * (n1 + 1.0) / 2.0;
    Some(u / (n1 * neg.len() as f64))
}

/// 1-based ranks of sorted values with ties averaged.
pub fn average_ranks(sorted: &[f64]) -> Vec<f64> {
    let mut ranks = vec![0.0; sorted.len()];
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for v in &mut ranks[i..=j] {
            *v = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn compute_metrics(cc: &ConfusionCounts, scores: &[(f64, Label)]) -> MetricSet {
    let mut flags = Vec::new();
    let accuracy = ratio(cc.tp + cc.tn, cc.total(), "accuracy", &mut flags);
    let precision = ratio(cc.tp, cc.tp + cc.fp, "precision", &mut flags);
    let recall = ratio(cc.tp, cc.tp + cc.fn_, "recall", &mut flags);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        flags.push("f1".into());
        0.0
    };
    let roc_auc = roc_auc(scores).unwrap_or_else(|| {
        flags.push("roc_auc".into());
        0.0
    });
    MetricSet {
        accuracy,
        precision,
        recall,
        f1,
        roc_auc,
        zero_division: flags,
    }
}

/// Metrics from `(probability, truth)` pairs with the shared decision rule.
pub fn metrics_from_scores(scores: &[(f64, Label)]) -> MetricSet {
    let cc = ConfusionCounts::from_predictions(scores.iter().map(|&(p, t)| (decide(p), t)));
    compute_metrics(&cc, scores)
}

/// Mean and population standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

/// Mean ± population SD of each metric across runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: MeanSd,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
    pub roc_auc: MeanSd,
}

impl MetricSummary {
    pub fn from_sets(sets: &[MetricSet]) -> Self {
        let col = |k: usize| {
            let v: Vec<f64> = sets.iter().map(|s| s.values()[k]).collect();
            let (mean, sd) = mean_sd(&v);
            MeanSd { mean, sd }
        };
        Self {
            accuracy: col(0),
            precision: col(1),
            recall: col(2),
            f1: col(3),
            roc_auc: col(4),
        }
    }

    pub fn entries(&self) -> [(&'static str, MeanSd); 5] {
        [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("roc_auc", self.roc_auc),
        ]
    }
}
