//! Recording → preprocessed windows → node features → graph sequence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{build_graph_sequence, pearson, DynamicGraphSequence, Metric, Thresholding};
use crate::dataset::{subject_order_key, Dataset, Label, Recording, TaskId};
use crate::error::{Error, Result};
use crate::features::{extract_node_features, WelchSpec};
use crate::preprocess::{filter_and_normalise, window_normalised, PreprocessConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub welch: WelchSpec,
    pub metric: Metric,
    pub thresholding: Thresholding,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            welch: WelchSpec::default(),
            metric: Metric::Pli,
            thresholding: Thresholding::Percentile(50.0),
        }
    }
}

/// One recording ready for training: the graph sequence plus the flat
/// channel-correlation vector the classical baselines use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub subject_id: String,
    pub task: TaskId,
    pub label: Label,
    pub sequence: DynamicGraphSequence,
    /// Pearson r of every channel pair (upper triangle, row-major) over the
    /// whole preprocessed recording.
    pub correlation: Vec<f64>,
}

pub fn channel_correlations(rec: &Recording) -> Vec<f64> {
    let cols = rec.data.columns();
    let mut out = Vec::with_capacity(cols.len() * cols.len().saturating_sub(1) / 2);
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            out.push(pearson(&cols[i], &cols[j]));
        }
    }
    out
}

pub fn prepare_recording(rec: &Recording, label: Label, cfg: &PipelineConfig) -> Result<Sample> {
    let (z, stats) = filter_and_normalise(rec, &cfg.preprocess)?;
    let correlation = channel_correlations(&z);
    let out = window_normalised(&z, stats, &cfg.preprocess)?;
    let feats = extract_node_features(&out.windowed, &cfg.welch)?;
    let sequence = build_graph_sequence(&out.windowed, &feats, cfg.metric, cfg.thresholding)?;
    Ok(Sample {
        subject_id: rec.subject_id.clone(),
        task: rec.task,
        label,
        sequence,
        correlation,
    })
}

/// Samples for every recording of the requested tasks, ordered by subject
/// then task.
pub fn prepare_dataset(ds: &Dataset, tasks: &[TaskId], cfg: &PipelineConfig) -> Result<Vec<Sample>> {
    let mut keys: Vec<(&String, TaskId)> = ds
        .recordings
        .keys()
        .filter(|(_, t)| tasks.contains(t))
        .map(|(s, t)| (s, *t))
        .collect();
    keys.sort_by(|a, b| subject_order_key(a.0).cmp(&subject_order_key(b.0)).then(a.1.cmp(&b.1)));
    if keys.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no recordings for tasks {}",
            tasks.iter().map(|t| t.code()).collect::<Vec<_>>().join(",")
        )));
    }
    keys.par_iter()
        .map(|&(s, t)| {
            let label = ds
                .label_of(s)
                .ok_or_else(|| Error::LabelMismatch(format!("no label for {s}")))?;
            let rec = ds.recording(s, t).expect("key from map");
            prepare_recording(rec, label, cfg)
        })
        .collect()
}
