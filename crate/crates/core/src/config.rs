//! Run configuration: one TOML file with flat dotted keys over defaults,
//! plus `key=value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::connectivity::{Metric, Thresholding};
use crate::dataset::TaskId;
use crate::error::{Error, Result};
use crate::eval::{BaselineConfig, BaselineKind, ExperimentConfig, GroupTest, TrainConfig};
use crate::explain::DEFAULT_STEPS;
use crate::features::WelchSpec;
use crate::nn::{AdamWConfig, ModelConfig};
use crate::pipeline::PipelineConfig;
use crate::preprocess::PreprocessConfig;
use crate::synth::PlantedSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub root: Option<PathBuf>,
    pub tasks: Vec<TaskId>,
    pub strict_lengths: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    Percentile,
    Absolute,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub metric: Metric,
    pub threshold: ThresholdKind,
    /// Percentile in `[0, 100]` or absolute cut, per `threshold`.
    pub threshold_value: f64,
}

impl GraphSection {
    pub fn thresholding(&self) -> Thresholding {
        match self.threshold {
            ThresholdKind::Percentile => Thresholding::Percentile(self.threshold_value),
            ThresholdKind::Absolute => Thresholding::Absolute(self.threshold_value),
            ThresholdKind::None => Thresholding::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub scale_features: bool,
    pub class_weighting: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub logreg_lr: f64,
    pub logreg_l2: f64,
    pub logreg_epochs: usize,
    pub mlp_hidden: Vec<usize>,
    pub mlp_lr: f64,
    pub mlp_l2: f64,
    pub mlp_epochs: usize,
    pub mlp_batch_size: usize,
}

impl BaselineSection {
    pub fn config(&self, kind: BaselineKind) -> BaselineConfig {
        let mut cfg = BaselineConfig::for_kind(kind);
        match kind {
            BaselineKind::Logreg => {
                cfg.lr = self.logreg_lr;
                cfg.l2 = self.logreg_l2;
                cfg.epochs = self.logreg_epochs;
            }
            BaselineKind::Mlp => {
                cfg.hidden = self.mlp_hidden.clone();
                cfg.lr = self.mlp_lr;
                cfg.l2 = self.mlp_l2;
                cfg.epochs = self.mlp_epochs;
                cfg.batch_size = self.mlp_batch_size;
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    pub test: GroupTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    pub steps: usize,
    pub top_k: usize,
    /// Defaults to `model.json` in the output directory.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub output: OutputSection,
    pub preprocess: PreprocessConfig,
    pub welch: WelchSpec,
    pub graph: GraphSection,
    pub model: ModelConfig,
    pub optim: AdamWConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub baseline: BaselineSection,
    pub stats: StatsSection,
    pub explain: ExplainSection,
    pub synth: PlantedSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        let (logreg, mlp) = (BaselineConfig::logreg(), BaselineConfig::mlp());
        let t = exp.train;
        Self {
            dataset: DatasetSection {
                root: None,
                tasks: exp.tasks,
                strict_lengths: true,
            },
            output: OutputSection { dir: PathBuf::from("out") },
            preprocess: exp.pipeline.preprocess,
            welch: exp.pipeline.welch,
            graph: GraphSection {
                metric: exp.pipeline.metric,
                threshold: ThresholdKind::Percentile,
                threshold_value: 50.0,
            },
            model: t.model,
            optim: t.optim,
            train: TrainSection {
                epochs: t.epochs,
                patience: t.patience,
                batch_size: t.batch_size,
                scale_features: t.scale_features,
                class_weighting: t.class_weighting,
            },
            eval: EvalSection { seeds: exp.seeds },
            baseline: BaselineSection {
                logreg_lr: logreg.lr,
                logreg_l2: logreg.l2,
                logreg_epochs: logreg.epochs,
                mlp_hidden: mlp.hidden,
                mlp_lr: mlp.lr,
                mlp_l2: mlp.l2,
                mlp_epochs: mlp.epochs,
                mlp_batch_size: mlp.batch_size,
            },
            stats: StatsSection { test: GroupTest::MannWhitney },
            explain: ExplainSection {
                steps: DEFAULT_STEPS,
                top_k: 15,
                checkpoint: None,
            },
            synth: PlantedSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            preprocess: self.preprocess.clone(),
            welch: self.welch,
            metric: self.graph.metric,
            thresholding: self.graph.thresholding(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model.clone(),
            optim: self.optim,
            epochs: self.train.epochs,
            patience: self.train.patience,
            batch_size: self.train.batch_size,
            scale_features: self.train.scale_features,
            class_weighting: self.train.class_weighting,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            pipeline: self.pipeline(),
            train: self.train_config(),
            tasks: self.dataset.tasks.clone(),
            seeds: self.eval.seeds.clone(),
        }
    }

    /// Every settable dotted key with its default.
    pub fn default_keys() -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten(&serde_json::to_value(RunConfig::default()).expect("config serialises"), "", &mut out);
        out
    }

    /// Applies dotted-key overrides on top of `self`, validating each key.
    pub fn with_overrides(&self, overrides: &[(String, Value)]) -> Result<RunConfig> {
        let known = Self::default_keys();
        let mut tree = serde_json::to_value(self)?;
        for (key, value) in overrides {
            let Some(default) = known.get(key) else {
                return Err(Error::UnknownKey(key.clone()));
            };
            let mut trial = tree.clone();
            set_path(&mut trial, key, value.clone());
            if let Err(e) = serde_json::from_value::<RunConfig>(trial.clone()) {
                return Err(Error::TypeError {
                    key: key.clone(),
                    expected: format!("{} ({e})", kind_of(default)),
                });
            }
            tree = trial;
        }
        Ok(serde_json::from_value(tree)?)
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Toml(e.to_string()))?;
        let mut flat = BTreeMap::new();
        flatten(&serde_json::to_value(&table)?, "", &mut flat);
        RunConfig::default().with_overrides(&flat.into_iter().collect::<Vec<_>>())
    }

    /// Empty or missing sections fall back to defaults.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_toml_str(&text)
    }

    /// Resolved config as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }
}

/// Parses a `key=value` override; the value is read as a TOML value and
/// falls back to a bare string.
pub fn parse_override(arg: &str) -> Result<(String, Value)> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override {arg:?} is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => serde_json::to_value(&t["v"])?,
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key, value))
}

fn flatten(v: &Value, prefix: &str, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) if !map.is_empty() || prefix.is_empty() => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(child, &key, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn set_path(tree: &mut Value, key: &str, value: Value) {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for p in &parts[..parts.len() - 1] {
        node = &mut node[*p];
    }
    node[parts[parts.len() - 1]] = value;
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "an optional value",
        Value::Bool(_) => "a boolean",
        Value::Number(n) if n.is_f64() => "a number",
        Value::Number(_) => "an integer",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "a table",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.optim.lr, 0.000668);
        assert_eq!(cfg.model.gat_hidden, 64);
        assert_eq!(cfg.model.gru_hidden, 128);
        assert_eq!(cfg.dataset.tasks, vec![TaskId::ET]);
        assert_eq!(cfg.eval.seeds, vec![42, 123, 456]);
        assert_eq!(cfg.experiment(), ExperimentConfig::default());
    }

    #[test]
    fn type_error_names_key() {
        match RunConfig::from_toml_str("optim.lr = \"fast\"") {
            Err(Error::TypeError { key, .. }) => assert_eq!(key, "optim.lr"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_toml_str("[graph]\nmetric = \"coherence\"") {
            Err(Error::TypeError { key, .. }) => assert_eq!(key, "graph.metric"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key() {
        match RunConfig::from_toml_str("model.flux = 1") {
            Err(Error::UnknownKey(k)) => assert_eq!(k, "model.flux"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::from_toml_str("[model]\ngat_hidden = 8\n[extra]\nx = 1"), Err(Error::UnknownKey(_))));
    }

    #[test]
    fn nested_and_dotted_forms_agree() {
        let a = RunConfig::from_toml_str("model.gat_hidden = 16\ntrain.epochs = 5\ndataset.root = \"data\"").unwrap();
        let b = RunConfig::from_toml_str("[model]\ngat_hidden = 16\n[train]\nepochs = 5\n[dataset]\nroot = \"data\"").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.model.gat_hidden, 16);
        assert_eq!(a.dataset.root, Some(PathBuf::from("data")));
    }

    #[test]
    fn overrides_and_thresholding() {
        let base = RunConfig::default();
        let cfg = base
            .with_overrides(&[
                parse_override("graph.threshold=none").unwrap(),
                parse_override("eval.seeds=[1, 2]").unwrap(),
                parse_override("model.temporal=mean").unwrap(),
            ])
            .unwrap();
        assert_eq!(cfg.pipeline().thresholding, Thresholding::None);
        assert_eq!(cfg.eval.seeds, vec![1, 2]);
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn missing_file() {
        assert!(matches!(RunConfig::load(Path::new("/nonexistent/run.toml")), Err(Error::FileNotFound(_))));
    }

    #[test]
    fn toml_snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.dataset.root = Some(PathBuf::from("d"));
        cfg.explain.checkpoint = Some(PathBuf::from("m.json"));
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn baseline_sections() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.baseline.config(BaselineKind::Logreg), BaselineConfig::logreg());
        assert_eq!(cfg.baseline.config(BaselineKind::Mlp), BaselineConfig::mlp());
    }
}
