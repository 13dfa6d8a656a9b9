use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use phasegraph::connectivity::{analytic_phase, pli, wpli};
use phasegraph::dataset::TaskId;
use phasegraph::explain::{integrated_gradients, zero_baseline};
use phasegraph::features::{extract_node_features, WelchSpec};
use phasegraph::nn::gradcheck::toy_sequence;
use phasegraph::nn::{forward_prepared, loss_and_grads, Mode, ModelConfig, ModelParams};
use phasegraph::pipeline::{prepare_recording, PipelineConfig};
use phasegraph::preprocess::preprocess_recording;
use phasegraph::synth::{planted_dataset, PlantedSpec};

fn bench_signal(c: &mut Criterion) {
    let ds = planted_dataset(&PlantedSpec::default()).unwrap();
    let rec = ds.recording("S1", TaskId::ET).unwrap();
    let cfg = PipelineConfig::default();
    let out = preprocess_recording(rec, &cfg.preprocess).unwrap();
    let phases = analytic_phase(&out.windowed.windows[0]).unwrap();

    let mut group = c.benchmark_group("signal");
    group.sample_size(10);
    group.bench_function("preprocess_120s", |b| b.iter(|| preprocess_recording(black_box(rec), &cfg.preprocess).unwrap()));
    group.bench_function("features_30_windows", |b| {
        b.iter(|| extract_node_features(black_box(&out.windowed), &WelchSpec::default()).unwrap())
    });
    group.bench_function("analytic_phase_window", |b| b.iter(|| analytic_phase(black_box(&out.windowed.windows[0])).unwrap()));
    group.bench_function("pli_window", |b| b.iter(|| pli(black_box(&phases))));
    group.bench_function("wpli_window", |b| b.iter(|| wpli(black_box(&phases))));
    group.bench_function("prepare_recording", |b| {
        b.iter(|| prepare_recording(black_box(rec), phasegraph::dataset::Label::Addicted, &cfg).unwrap())
    });
    group.finish();
}

fn bench_model(c: &mut Criterion) {
    let seq = toy_sequence(19, 9, 30, 1);
    let mut group = c.benchmark_group("model");
    group.sample_size(10);
    for (gat, gru) in [(16, 32), (64, 128)] {
        let cfg = ModelConfig {
            gat_hidden: gat,
            gru_hidden: gru,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&cfg, 7);
        let id = format!("{gat}x{gru}");
        group.bench_with_input(BenchmarkId::new("forward", &id), &params, |b, p| {
            b.iter(|| forward_prepared(black_box(&seq), p, Mode::Eval).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("loss_and_grads", &id), &params, |b, p| {
            b.iter(|| loss_and_grads(p, black_box(&seq), 1.0, 1.0, Mode::Eval).unwrap())
        });
    }
    let params = ModelParams::init(
        &ModelConfig {
            gat_hidden: 16,
            gru_hidden: 32,
            ..ModelConfig::default()
        },
        7,
    );
    let base = zero_baseline(&seq);
    group.bench_function("integrated_gradients_16_steps", |b| {
        b.iter(|| integrated_gradients(&params, black_box(&seq), &base, 16).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_signal, bench_model);
criterion_main!(benches);
