//! Per-window classical baselines: L2 logistic regression and a
//! 256-128-64 MLP, trained by gradient descent on flat feature vectors.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{fold_jobs, FoldFailure, RunReport, SeedResult};
use super::folds::{derive_seed, FoldSpec};
use super::metrics::decide;
use super::train::{FoldResult, TrainingLog};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::features::{apply_scaler, fit_feature_scaler, ScalerStats};
use crate::matrix::Matrix;
use crate::nn::{bce_with_logits, sigmoid, AdamWConfig, NodeId, OptimizerState, ParamStore, Tape};
use crate::pipeline::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Logreg,
    Mlp,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Logreg => "logreg",
            BaselineKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(BaselineKind::Logreg),
            "mlp" => Ok(BaselineKind::Mlp),
            _ => Err(Error::InvalidArgument(format!("unknown baseline {s:?} (logreg, mlp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub hidden: Vec<usize>,
    /// L2 penalty on weights (not biases), added to the mean loss.
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Windows per step; 0 means full batch.
    pub batch_size: usize,
}

impl BaselineConfig {
    pub fn logreg() -> Self {
        Self {
            kind: BaselineKind::Logreg,
            hidden: Vec::new(),
            l2: 1e-3,
            lr: 0.01,
            epochs: 200,
            batch_size: 0,
        }
    }

    pub fn mlp() -> Self {
        Self {
            kind: BaselineKind::Mlp,
            hidden: vec![256, 128, 64],
            l2: 0.0,
            lr: 1e-3,
            epochs: 60,
            batch_size: 32,
        }
    }

    pub fn for_kind(kind: BaselineKind) -> Self {
        match kind {
            BaselineKind::Logreg => Self::logreg(),
            BaselineKind::Mlp => Self::mlp(),
        }
    }
}

/// Flattened node features (channel-major) followed by the recording's
/// channel-correlation vector, one row per window.
pub fn window_vectors(sample: &Sample) -> Vec<Vec<f64>> {
    sample
        .sequence
        .frames
        .iter()
        .map(|f| {
            let mut v = f.features.as_slice().to_vec();
            v.extend_from_slice(&sample.correlation);
            v
        })
        .collect()
}

fn stack(rows: &[Vec<f64>]) -> Matrix {
    let cols = rows.first().map_or(0, |r| r.len());
    Matrix::from_vec(rows.len(), cols, rows.concat())
}

/// Dense network; no hidden layers gives logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub store: ParamStore,
    /// `(weight, bias)` indices per layer.
    pub layers: Vec<(usize, usize)>,
}

impl DenseNet {
    pub fn init(input: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let mut layers = Vec::new();
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(1);
        for (l, w) in dims.windows(2).enumerate() {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let wi = store.push(
                format!("dense{l}.W"),
                Matrix::from_fn(w[0], w[1], |_, _| rng.random_range(-limit..=limit)),
            );
            let bi = store.push(format!("dense{l}.b"), Matrix::zeros(1, w[1]));
            layers.push((wi, bi));
        }
        Self { store, layers }
    }

    fn build(&self, tape: &mut Tape, x: Matrix) -> NodeId {
        let mut h = tape.constant(x);
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let wn = tape.param(w);
            let bn = tape.param(b);
            let z = tape.matmul(h, wn);
            h = tape.add_row(z, bn);
            if l + 1 < self.layers.len() {
                h = tape.leaky_relu(h, 0.0);
            }
        }
        h
    }

    pub fn logits(&self, x: &Matrix) -> Vec<f64> {
        let mut tape = Tape::new(&self.store);
        let out = self.build(&mut tape, x.clone());
        tape.value(out).to_vec()
    }
}

/// A fitted baseline; `None` network means every input column was constant
/// on the training data and the predictor outputs probability 0.5.
pub struct FittedBaseline {
    pub scaler: ScalerStats,
    pub net: Option<DenseNet>,
}

impl FittedBaseline {
    pub fn probabilities(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        match &self.net {
            None => vec![0.5; rows.len()],
            Some(net) => {
                let x = apply_scaler(&stack(rows), &self.scaler);
                net.logits(&x).into_iter().map(sigmoid).collect()
            }
        }
    }
}

pub fn fit_baseline(rows: &[Vec<f64>], labels: &[Label], cfg: &BaselineConfig, seed: u64) -> Result<(FittedBaseline, Vec<f64>)> {
    let raw = stack(rows);
    let scaler = fit_feature_scaler(std::iter::once(&raw));
    if scaler.all_degenerate() {
        log::warn!("all baseline features are constant; using the 0.5 predictor");
        return Ok((FittedBaseline { scaler, net: None }, Vec::new()));
    }
    let x = apply_scaler(&raw, &scaler);
    let y: Vec<f64> = labels.iter().map(|l| l.target()).collect();
    let n = y.len();
    let n_pos = y.iter().filter(|&&v| v > 0.5).count();
    let weight = |t: f64| {
        let c = if t > 0.5 { n_pos } else { n - n_pos };
        if c == 0 {
            1.0
        } else {
            n as f64 / (2.0 * c as f64)
        }
    };

    let mut net = DenseNet::init(x.cols(), &cfg.hidden, derive_seed(seed, 0));
    let mut opt = OptimizerState::new(
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        },
        &net.store,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let batch = if cfg.batch_size == 0 { n } else { cfg.batch_size };
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xb = Matrix::from_fn(chunk.len(), x.cols(), |r, c| x.get(chunk[r], c));
            let (grads, loss) = {
                let mut tape = Tape::new(&net.store);
                let out = net.build(&mut tape, xb);
                let z = tape.value(out).to_vec();
                let mut loss = 0.0;
                let seed_grad: Vec<f64> = chunk
                    .iter()
                    .zip(&z)
                    .map(|(&i, &zi)| {
                        let w = weight(y[i]);
                        loss += w * bce_with_logits(zi, y[i]);
                        w * (sigmoid(zi) - y[i]) / chunk.len() as f64
                    })
                    .collect();
                let g = tape.backward(out, &seed_grad);
                let mut grads = net.store.zeros_like();
                tape.param_grads(&g, &mut grads);
                (grads, loss)
            };
            let mut grads = grads;
            if cfg.l2 > 0.0 {
                for &(w, _) in &net.layers {
                    for (g, p) in grads[w].as_mut_slice().iter_mut().zip(net.store.tensors[w].as_slice()) {
                        *g += cfg.l2 * p;
                    }
                }
            }
            opt.step(&mut net.store, &grads, cfg.lr)?;
            epoch_loss += loss;
        }
        curve.push(epoch_loss / n as f64);
    }
    Ok((FittedBaseline { scaler, net: Some(net) }, curve))
}

fn baseline_fold(fold: &FoldSpec, k: usize, samples: &[Sample], cfg: &BaselineConfig, seed: u64) -> Result<FoldResult> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for s in samples.iter().filter(|s| fold.train_subjects.contains(&s.subject_id)) {
        for v in window_vectors(s) {
            rows.push(v);
            labels.push(s.label);
        }
    }
    let (model, curve) = fit_baseline(&rows, &labels, cfg, derive_seed(seed, k as u64 + 100))?;
    let test: Vec<&Sample> = samples.iter().filter(|s| s.subject_id == fold.test_subject).collect();
    if test.is_empty() {
        return Err(Error::InvalidArgument(format!("no samples for test subject {}", fold.test_subject)));
    }
    let test_rows: Vec<Vec<f64>> = test.iter().flat_map(|s| window_vectors(s)).collect();
    let probs = model.probabilities(&test_rows);
    let probability = probs.iter().sum::<f64>() / probs.len() as f64;
    let predicted = decide(probability);
    let mut train_subjects = fold.train_subjects.clone();
    train_subjects.sort_by_key(|s| crate::dataset::subject_order_key(s));
    Ok(FoldResult {
        fold_index: k,
        test_subject: fold.test_subject.clone(),
        true_label: test[0].label,
        probability,
        predicted,
        sample_probabilities: probs,
        log: TrainingLog {
            epochs_run: curve.len(),
            best_epoch: curve.len().saturating_sub(1),
            best_val_loss: None,
            train_loss: curve,
            val_loss: Vec::new(),
            scaler_subjects: train_subjects.clone(),
            fit_subjects: train_subjects,
            val_subjects: Vec::new(),
        },
    })
}

/// LOSO over the same folds as the graph model; baselines train on all 13
/// training subjects for a fixed number of epochs.
pub fn run_baseline(samples: &[Sample], cfg: &BaselineConfig, seeds: &[u64]) -> Result<RunReport> {
    let jobs = fold_jobs(samples, seeds)?;
    let outcomes: Vec<(u64, std::result::Result<FoldResult, FoldFailure>)> = jobs
        .par_iter()
        .map(|(seed, k, fold)| {
            let r = baseline_fold(fold, *k, samples, cfg, *seed).map_err(|e| FoldFailure {
                test_subject: fold.test_subject.clone(),
                error: e.to_string(),
            });
            (*seed, r)
        })
        .collect();
    let seed_results = seeds
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
    let input = samples.first().map_or(0, |s| window_vectors(s).first().map_or(0, |v| v.len()));
    let count = DenseNet::init(input, &cfg.hidden, 0).store.scalar_count();
    Ok(RunReport::new(cfg.kind.as_str(), serde_json::to_value(cfg)?, count, seed_results))
}
