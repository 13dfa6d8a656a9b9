use phasegraph::connectivity::{DynamicGraphSequence, GraphFrame, GraphTopology};
use phasegraph::dataset::{published_labels, Label, TaskId};
use phasegraph::eval::train::train_model;
use phasegraph::eval::{loso_folds, run_baseline, run_experiment, BaselineConfig, ExperimentConfig, TrainConfig};
use phasegraph::nn::gradcheck::toy_config;
use phasegraph::pipeline::Sample;
use phasegraph::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N_NODES: usize = 5;
const N_FEATURES: usize = 3;

/// One sample per published subject; `feature(label, rng)` fills each
/// node feature.
fn samples(windows: usize, mut feature: impl FnMut(Label, &mut ChaCha8Rng) -> f64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    published_labels()
        .into_iter()
        .map(|l| {
            let frames = (0..windows)
                .map(|_| {
                    let mut topology = GraphTopology::empty(N_NODES);
                    for i in 0..N_NODES {
                        for j in i + 1..N_NODES {
                            if rng.random::<f64>() < 0.5 {
                                topology.edges.push((i, j));
                                topology.weights.push(rng.random_range(0.1..1.0));
                            }
                        }
                    }
                    GraphFrame {
                        topology,
                        features: Matrix::from_fn(N_NODES, N_FEATURES, |_, _| feature(l.label, &mut rng)),
                    }
                })
                .collect();
            Sample {
                subject_id: l.subject_id.clone(),
                task: TaskId::ET,
                label: l.label,
                sequence: DynamicGraphSequence {
                    subject_id: l.subject_id,
                    frames,
                },
                correlation: vec![0.0; N_NODES * (N_NODES - 1) / 2],
            }
        })
        .collect()
}

fn separable(label: Label, rng: &mut ChaCha8Rng) -> f64 {
    let centre = if label == Label::Addicted { 1.0 } else { -1.0 };
    centre + 0.2 * rng.random_range(-1.0..1.0)
}

fn small_experiment() -> ExperimentConfig {
    ExperimentConfig {
        train: TrainConfig {
            model: toy_config(N_FEATURES),
            epochs: 3,
            ..TrainConfig::default()
        },
        seeds: vec![42, 7],
        ..ExperimentConfig::default()
    }
}

#[test]
fn loso_run_is_bit_identical_across_reruns() {
    let s = samples(3, separable);
    let cfg = small_experiment();
    let a = serde_json::to_string(&run_experiment(&s, &cfg, "full").unwrap()).unwrap();
    let b = serde_json::to_string(&run_experiment(&s, &cfg, "full").unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loso_report_counts_folds_and_never_trains_on_test_subject() {
    let s = samples(2, separable);
    let report = run_experiment(&s, &small_experiment(), "full").unwrap();
    assert_eq!(report.models_trained, 28);
    for seed in &report.seeds {
        assert_eq!(seed.folds.len(), 14);
        assert!(seed.failed_folds.is_empty());
        assert_eq!(seed.subject_confusion.total(), 14);
        for f in &seed.folds {
            assert!(!f.log.fit_subjects.contains(&f.test_subject));
            assert!(!f.log.val_subjects.contains(&f.test_subject));
            assert!(!f.log.scaler_subjects.contains(&f.test_subject));
            assert_eq!(f.log.fit_subjects.len() + f.log.val_subjects.len(), 13);
        }
    }
}

#[test]
fn folds_depend_only_on_seed() {
    let subjects: Vec<(String, Label)> = published_labels().into_iter().map(|l| (l.subject_id, l.label)).collect();
    assert_eq!(loso_folds(&subjects, 42).unwrap(), loso_folds(&subjects, 42).unwrap());
    assert_ne!(loso_folds(&subjects, 42).unwrap(), loso_folds(&subjects, 123).unwrap());
}

#[test]
fn patience_zero_stops_at_first_flat_epoch() {
    // With lr = 0 the validation loss never improves after epoch 0.
    let s = samples(2, separable);
    let fit: Vec<&Sample> = s[..10].iter().collect();
    let val: Vec<&Sample> = s[10..12].iter().collect();
    let mut cfg = TrainConfig {
        model: toy_config(N_FEATURES),
        epochs: 10,
        patience: 0,
        ..TrainConfig::default()
    };
    cfg.optim.lr = 0.0;
    let m = train_model(&fit, &val, &cfg, 1).unwrap();
    assert_eq!(m.log.epochs_run, 2);
    assert_eq!(m.log.best_epoch, 0);

    cfg.patience = 3;
    let m = train_model(&fit, &val, &cfg, 1).unwrap();
    assert_eq!(m.log.epochs_run, 4);
}

#[test]
fn early_stopping_restores_best_epoch_parameters() {
    let s = samples(2, separable);
    let fit: Vec<&Sample> = s[..10].iter().collect();
    let val: Vec<&Sample> = s[10..12].iter().collect();
    let mut cfg = TrainConfig {
        model: toy_config(N_FEATURES),
        epochs: 12,
        patience: 2,
        ..TrainConfig::default()
    };
    cfg.optim.lr = 0.05;
    let m = train_model(&fit, &val, &cfg, 5).unwrap();
    let best = m.log.val_loss[m.log.best_epoch];
    assert_eq!(Some(best), m.log.best_val_loss);
    assert!(m.log.val_loss.iter().all(|&v| v >= best));
}

#[test]
fn constant_features_give_chance_baseline() {
    let s = samples(4, |_, _| 2.5);
    let report = run_baseline(&s, &BaselineConfig::logreg(), &[42]).unwrap();
    let seed = &report.seeds[0];
    assert!(seed.folds.iter().all(|f| f.probability == 0.5));
    assert!((seed.subject_metrics.accuracy - 0.5).abs() < 1e-12);
}

#[test]
fn logreg_separates_separable_windows() {
    let s = samples(4, separable);
    let report = run_baseline(&s, &BaselineConfig::logreg(), &[42]).unwrap();
    assert_eq!(report.seeds[0].subject_metrics.accuracy, 1.0);
    assert_eq!(report.seeds[0].window_metrics.accuracy, 1.0);
}

#[test]
fn mlp_baseline_separates_separable_windows() {
    let s = samples(4, separable);
    let cfg = BaselineConfig {
        epochs: 20,
        ..BaselineConfig::mlp()
    };
    let report = run_baseline(&s, &cfg, &[42]).unwrap();
    assert_eq!(report.seeds[0].subject_metrics.accuracy, 1.0);
}
