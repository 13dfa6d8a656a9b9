//! Subject-level evaluation: LOSO folds, training, metrics, ablations,
//! baselines and group statistics.

pub mod baselines;
pub mod experiment;
pub mod folds;
pub mod metrics;
pub mod stats;
pub mod train;

pub use baselines::{run_baseline, BaselineConfig, BaselineKind};
pub use experiment::{ablation, run_experiment, ExperimentConfig, RunReport, SeedResult, Variant};
pub use folds::{derive_seed, loso_folds, validation_split, FoldSpec};
pub use metrics::{aggregate_subject, compute_metrics, mean_sd, ConfusionCounts, MetricSet, MetricSummary};
pub use stats::{group_stats, GroupStats, GroupTest};
pub use train::{train_all, train_fold, train_model, FoldResult, TrainConfig, TrainedModel};
