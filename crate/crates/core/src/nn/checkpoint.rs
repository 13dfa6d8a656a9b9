//! JSON checkpoints: a config header plus named row-major parameter arrays.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ModelParams};
use super::tape::ParamStore;
use crate::error::{Error, Result};
use crate::features::ScalerStats;
use crate::matrix::Matrix;

pub const FORMAT: &str = "phasegraph-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: ModelConfig,
    /// Feature standardisation fitted on the training windows.
    pub scaler: ScalerStats,
    /// Free-form run description (resolved config, provenance of the fit).
    #[serde(default)]
    pub meta: serde_json::Value,
    pub params: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, scaler: &ScalerStats, meta: serde_json::Value) -> Self {
        Self {
            format: FORMAT.into(),
            model: params.config.clone(),
            scaler: scaler.clone(),
            meta,
            params: params
                .store
                .names
                .iter()
                .zip(&params.store.tensors)
                .map(|(name, t)| NamedArray {
                    name: name.clone(),
                    shape: [t.rows(), t.cols()],
                    values: t.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let mut store = ParamStore::default();
        for a in &self.params {
            let [r, c] = a.shape;
            if a.values.len() != r * c {
                return Err(Error::InvalidCheckpoint(format!(
                    "{}: {} values for shape {r}×{c}",
                    a.name,
                    a.values.len()
                )));
            }
            store.push(a.name.clone(), Matrix::from_vec(r, c, a.values.clone()));
        }
        ModelParams::from_store(&self.model, store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::CheckpointNotFound(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidCheckpoint(format!("{}: {e}", path.display())))?;
        if ck.format != FORMAT {
            return Err(Error::InvalidCheckpoint(format!("unknown format {}", ck.format)));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = ModelConfig {
            gat_hidden: 4,
            gru_hidden: 3,
            mlp_hidden: 5,
            ..ModelConfig::default()
        };
        let p = ModelParams::init(&cfg, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        Checkpoint::new(&p, &ScalerStats::identity(9), serde_json::json!({"seed": 3}))
            .save(&path)
            .unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.model_params().unwrap(), p);
        assert_eq!(back.meta["seed"], 3);
    }

    #[test]
    fn missing_file() {
        let err = Checkpoint::load(Path::new("/nonexistent/model.json")).unwrap_err();
        assert!(matches!(err, Error::CheckpointNotFound(_)));
        assert!(err.to_string().contains("checkpoint not found"));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let cfg = ModelConfig {
            gat_hidden: 4,
            gru_hidden: 3,
            mlp_hidden: 5,
            ..ModelConfig::default()
        };
        let mut ck = Checkpoint::new(&ModelParams::init(&cfg, 0), &ScalerStats::identity(9), serde_json::Value::Null);
        ck.model.gru_hidden = 4;
        assert!(matches!(ck.model_params(), Err(Error::InvalidCheckpoint(_))));
    }
}
