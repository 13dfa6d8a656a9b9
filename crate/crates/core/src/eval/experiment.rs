//! Multi-seed LOSO runs, ablation variants and the run report.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{loso_folds, FoldSpec};
use super::metrics::{metrics_from_scores, ConfusionCounts, MetricSet, MetricSummary, decide};
use super::train::{train_fold, FoldResult, TrainConfig};
use crate::connectivity::Thresholding;
use crate::dataset::{subject_order_key, Dataset, Label, TaskId};
use crate::error::{Error, Result};
use crate::nn::{parameter_count, Temporal};
use crate::pipeline::{prepare_dataset, PipelineConfig, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    SpatialOnly,
    FullyConnected,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::SpatialOnly, Variant::FullyConnected];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::SpatialOnly => "spatial_only",
            Variant::FullyConnected => "fully_connected",
        }
    }

    /// The base config with this variant's single change applied.
    pub fn apply(self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {}
            Variant::SpatialOnly => cfg.train.model.temporal = Temporal::Mean,
            Variant::FullyConnected => cfg.pipeline.thresholding = Thresholding::None,
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?} (full, spatial_only, fully_connected)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub tasks: Vec<TaskId>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
            tasks: vec![TaskId::ET],
            seeds: vec![42, 123, 456],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub test_subject: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub subject_confusion: ConfusionCounts,
    pub subject_metrics: MetricSet,
    /// Metrics over every held-out prediction unit (a recording for the
    /// graph model, a window for the baselines).
    pub window_metrics: MetricSet,
    pub folds: Vec<FoldResult>,
    pub failed_folds: Vec<FoldFailure>,
}

impl SeedResult {
    pub fn from_folds(seed: u64, folds: Vec<FoldResult>, failed_folds: Vec<FoldFailure>) -> Self {
        let subject_scores: Vec<(f64, Label)> = folds.iter().map(|f| (f.probability, f.true_label)).collect();
        let window_scores: Vec<(f64, Label)> = folds
            .iter()
            .flat_map(|f| f.sample_probabilities.iter().map(move |&p| (p, f.true_label)))
            .collect();
        Self {
            seed,
            subject_confusion: ConfusionCounts::from_predictions(subject_scores.iter().map(|&(p, t)| (decide(p), t))),
            subject_metrics: metrics_from_scores(&subject_scores),
            window_metrics: metrics_from_scores(&window_scores),
            folds,
            failed_folds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Variant or baseline name.
    pub tag: String,
    pub config: serde_json::Value,
    pub parameter_count: usize,
    pub models_trained: usize,
    pub seeds: Vec<SeedResult>,
    pub subject_summary: MetricSummary,
    pub window_summary: MetricSummary,
}

impl RunReport {
    pub fn new(tag: &str, config: serde_json::Value, parameter_count: usize, seeds: Vec<SeedResult>) -> Self {
        let subject: Vec<MetricSet> = seeds.iter().map(|s| s.subject_metrics.clone()).collect();
        let window: Vec<MetricSet> = seeds.iter().map(|s| s.window_metrics.clone()).collect();
        Self {
            tag: tag.to_string(),
            config,
            parameter_count,
            models_trained: seeds.iter().map(|s| s.folds.len()).sum(),
            subject_summary: MetricSummary::from_sets(&subject),
            window_summary: MetricSummary::from_sets(&window),
            seeds,
        }
    }
}

/// Subject ids with labels, in subject order.
pub fn subject_labels(samples: &[Sample]) -> Vec<(String, Label)> {
    let mut out: Vec<(String, Label)> = Vec::new();
    for s in samples {
        if !out.iter().any(|o| o.0 == s.subject_id) {
            out.push((s.subject_id.clone(), s.label));
        }
    }
    out.sort_by_key(|s| subject_order_key(&s.0));
    out
}

/// Every `(seed, fold)` job for `seeds`.
pub fn fold_jobs(samples: &[Sample], seeds: &[u64]) -> Result<Vec<(u64, usize, FoldSpec)>> {
    let subjects = subject_labels(samples);
    let mut jobs = Vec::new();
    for &seed in seeds {
        for (k, f) in loso_folds(&subjects, seed)?.into_iter().enumerate() {
            jobs.push((seed, k, f));
        }
    }
    Ok(jobs)
}

/// Full LOSO for each seed on already prepared samples. Fold errors are
/// recorded in the report and do not stop the other folds.
pub fn run_experiment(samples: &[Sample], cfg: &ExperimentConfig, tag: &str) -> Result<RunReport> {
    let jobs = fold_jobs(samples, &cfg.seeds)?;
    let outcomes: Vec<(u64, std::result::Result<FoldResult, FoldFailure>)> = jobs
        .par_iter()
        .map(|(seed, k, fold)| {
            let out = train_fold(fold, *k, samples, &cfg.train, *seed)
                .map(|t| t.result)
                .map_err(|e| {
                    log::error!("seed {seed} fold {}: {e}", fold.test_subject);
                    FoldFailure {
                        test_subject: fold.test_subject.clone(),
                        error: e.to_string(),
                    }
                });
            (*seed, out)
        })
        .collect();
    let seeds = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let (mut ok, mut failed) = (Vec::new(), Vec::new());
            for (s, o) in &outcomes {
                if *s == seed {
                    match o {
                        Ok(r) => ok.push(r.clone()),
                        Err(f) => failed.push(f.clone()),
                    }
                }
            }
            SeedResult::from_folds(seed, ok, failed)
        })
        .collect();
    Ok(RunReport::new(
        tag,
        serde_json::to_value(cfg)?,
        parameter_count(&cfg.train.model),
        seeds,
    ))
}

/// Prepares the dataset under the variant's config and runs LOSO.
pub fn ablation(ds: &Dataset, base: &ExperimentConfig, variant: Variant) -> Result<RunReport> {
    let cfg = variant.apply(base);
    let samples = prepare_dataset(ds, &cfg.tasks, &cfg.pipeline)?;
    run_experiment(&samples, &cfg, variant.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diff_fields(a: &serde_json::Value, b: &serde_json::Value, path: String, out: &mut Vec<String>) {
        match (a, b) {
            (serde_json::Value::Object(x), serde_json::Value::Object(y)) => {
                for (k, v) in x {
                    diff_fields(v, &y[k], format!("{path}.{k}"), out);
                }
            }
            _ if a != b => out.push(path),
            _ => {}
        }
    }

    #[test]
    fn variants_change_one_field() {
        let base = ExperimentConfig::default();
        let full = serde_json::to_value(Variant::Full.apply(&base)).unwrap();
        assert_eq!(full, serde_json::to_value(&base).unwrap());
        for v in [Variant::SpatialOnly, Variant::FullyConnected] {
            let mut d = Vec::new();
            diff_fields(&full, &serde_json::to_value(v.apply(&base)).unwrap(), String::new(), &mut d);
            assert_eq!(d.len(), 1, "{v}: {d:?}");
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("both".parse::<Variant>().is_err());
    }
}
