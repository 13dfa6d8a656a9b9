//! Training one model: AdamW with a per-epoch cosine schedule and
//! validation-loss early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folds::{derive_seed, FoldSpec};
use super::metrics::aggregate_subject;
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::features::{fit_feature_scaler, ScalerStats, N_FEATURES};
use crate::matrix::Matrix;
use crate::nn::{
    bce_with_logits, cosine_lr, forward_prepared, loss_and_grads, AdamWConfig, Mode, ModelConfig, ModelParams,
    OptimizerState, PreparedSequence,
};
use crate::pipeline::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optim: AdamWConfig,
    /// Epoch cap; also the cosine period.
    pub epochs: usize,
    pub patience: usize,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    /// Standardise node features with statistics from the fitting subjects.
    pub scale_features: bool,
    /// Weight the loss inversely to class frequency in the fitting set.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            optim: AdamWConfig::default(),
            epochs: 100,
            patience: 15,
            batch_size: 1,
            scale_features: true,
            class_weighting: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// `None` for models trained without a validation split.
    pub best_val_loss: Option<f64>,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Subjects whose windows fitted the feature scaler.
    pub scaler_subjects: Vec<String>,
    pub fit_subjects: Vec<String>,
    pub val_subjects: Vec<String>,
}

pub struct TrainedModel {
    pub params: ModelParams,
    pub scaler: ScalerStats,
    pub log: TrainingLog,
}

fn subjects_of(samples: &[&Sample]) -> Vec<String> {
    let mut s: Vec<String> = samples.iter().map(|x| x.subject_id.clone()).collect();
    s.sort_by_key(|id| crate::dataset::subject_order_key(id));
    s.dedup();
    s
}

pub fn fit_scaler(samples: &[&Sample], enabled: bool) -> ScalerStats {
    if !enabled {
        return ScalerStats::identity(N_FEATURES);
    }
    fit_feature_scaler(samples.iter().flat_map(|s| s.sequence.frames.iter().map(|f| &f.features)))
}

fn mean_eval_loss(params: &ModelParams, seqs: &[(PreparedSequence, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for (seq, y) in seqs {
        total += bce_with_logits(forward_prepared(seq, params, Mode::Eval)?, *y);
    }
    Ok(total / seqs.len() as f64)
}

/// Trains on `fit`, early-stopping on `val` (or on the training loss when
/// `val` is empty), and returns the best-validation parameters.
pub fn train_model(fit: &[&Sample], val: &[&Sample], cfg: &TrainConfig, seed: u64) -> Result<TrainedModel> {
    if fit.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let scaler = fit_scaler(fit, cfg.scale_features);
    let prep = |s: &&Sample| (PreparedSequence::new(&s.sequence, Some(&scaler)), s.label.target());
    let fit_seqs: Vec<(PreparedSequence, f64)> = fit.iter().map(prep).collect();
    let val_seqs: Vec<(PreparedSequence, f64)> = val.iter().map(prep).collect();

    let n_pos = fit.iter().filter(|s| s.label == Label::Addicted).count();
    let n = fit.len() as f64;
    let class_weight = |y: f64| {
        let n_class = if y > 0.5 { n_pos } else { fit.len() - n_pos };
        if cfg.class_weighting && n_class > 0 {
            n / (2.0 * n_class as f64)
        } else {
            1.0
        }
    };

    let mut params = ModelParams::init(&cfg.model, derive_seed(seed, 0));
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let mut opt = OptimizerState::new(cfg.optim, &params.store);
    let batch = cfg.batch_size.max(1);
    let patience = cfg.patience.max(1);

    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut bad_epochs = 0;
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut order: Vec<usize> = (0..fit_seqs.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.optim.lr);
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = params.store.zeros_like();
            for &i in chunk {
                let (seq, y) = &fit_seqs[i];
                let (loss, _, g) = loss_and_grads(&params, seq, *y, class_weight(*y), Mode::Train(&mut drop_rng))?;
                epoch_loss += loss;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    for (a, b) in acc.as_mut_slice().iter_mut().zip(gi.as_slice()) {
                        *a += b / chunk.len() as f64;
                    }
                }
            }
            opt.step(&mut params.store, &grads, lr)?;
        }
        let train_loss = epoch_loss / fit_seqs.len() as f64;
        let val_loss = if val_seqs.is_empty() {
            mean_eval_loss(&params, &fit_seqs)?
        } else {
            mean_eval_loss(&params, &val_seqs)?
        };
        train_curve.push(train_loss);
        val_curve.push(val_loss);
        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= patience {
                break;
            }
        }
    }
    let (best_val_loss, best_epoch, best_params) = best;
    Ok(TrainedModel {
        params: best_params,
        scaler,
        log: TrainingLog {
            epochs_run: train_curve.len(),
            best_epoch,
            best_val_loss: Some(best_val_loss),
            train_loss: train_curve,
            val_loss: val_curve,
            scaler_subjects: subjects_of(fit),
            fit_subjects: subjects_of(fit),
            val_subjects: subjects_of(val),
        },
    })
}

/// Logits of each sample under a trained model.
pub fn predict_logits(params: &ModelParams, scaler: &ScalerStats, samples: &[&Sample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| forward_prepared(&PreparedSequence::new(&s.sequence, Some(scaler)), params, Mode::Eval))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub test_subject: String,
    pub true_label: Label,
    pub probability: f64,
    pub predicted: Label,
    /// One probability per held-out recording.
    pub sample_probabilities: Vec<f64>,
    pub log: TrainingLog,
}

pub struct TrainedFold {
    pub result: FoldResult,
    pub params: ModelParams,
    pub scaler: ScalerStats,
}

/// Splits samples into fitting, validation and test sets for `fold`.
/// Trains one model on every subject, holding out a seeded validation
/// pair for early stopping.
pub fn train_all(samples: &[Sample], cfg: &TrainConfig, seed: u64) -> Result<TrainedModel> {
    let subjects = super::experiment::subject_labels(samples);
    let (fit_ids, val_ids) = super::folds::validation_split(&subjects, seed)?;
    let fit: Vec<&Sample> = samples.iter().filter(|s| fit_ids.contains(&s.subject_id)).collect();
    let val: Vec<&Sample> = samples.iter().filter(|s| val_ids.contains(&s.subject_id)).collect();
    train_model(&fit, &val, cfg, seed)
}

pub fn split_samples<'a>(fold: &FoldSpec, samples: &'a [Sample]) -> (Vec<&'a Sample>, Vec<&'a Sample>, Vec<&'a Sample>) {
    let fit_subjects = fold.fit_subjects();
    let pick = |ids: &[String]| samples.iter().filter(|s| ids.contains(&s.subject_id)).collect::<Vec<_>>();
    (
        pick(&fit_subjects),
        pick(&fold.val_subjects),
        pick(std::slice::from_ref(&fold.test_subject)),
    )
}

pub fn train_fold(fold: &FoldSpec, fold_index: usize, samples: &[Sample], cfg: &TrainConfig, seed: u64) -> Result<TrainedFold> {
    let (fit, val, test) = split_samples(fold, samples);
    if test.is_empty() {
        return Err(Error::InvalidArgument(format!("no samples for test subject {}", fold.test_subject)));
    }
    let trained = train_model(&fit, &val, cfg, derive_seed(seed, fold_index as u64 + 100))?;
    for used in [&trained.log.scaler_subjects, &trained.log.fit_subjects, &trained.log.val_subjects] {
        assert!(!used.contains(&fold.test_subject), "test subject leaked into training");
    }
    let logits = predict_logits(&trained.params, &trained.scaler, &test)?;
    let (probability, predicted) = aggregate_subject(&logits);
    Ok(TrainedFold {
        result: FoldResult {
            fold_index,
            test_subject: fold.test_subject.clone(),
            true_label: test[0].label,
            probability,
            predicted,
            sample_probabilities: logits.iter().map(|&z| crate::nn::sigmoid(z)).collect(),
            log: trained.log,
        },
        params: trained.params,
        scaler: trained.scaler,
    })
}

/// Feature matrices of a sequence after scaling; shared by explain.
pub fn scaled_features(sample: &Sample, scaler: &ScalerStats) -> Vec<Matrix> {
    sample
        .sequence
        .frames
        .iter()
        .map(|f| crate::features::apply_scaler(&f.features, scaler))
        .collect()
}
