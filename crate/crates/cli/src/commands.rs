use std::path::PathBuf;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::json;

use phasegraph::config::RunConfig;
use phasegraph::dataset::{load_dataset_with, write_dataset, Dataset, LoadOptions};
use phasegraph::eval::{group_stats, run_baseline, run_experiment, train_all, BaselineKind, RunReport, Variant};
use phasegraph::explain::{
    channel_importance, edge_importance, feature_importance, integrated_gradients, top_connections, zero_baseline,
    AttributionMap,
};
use phasegraph::features::{extract_node_features, FEATURE_NAMES};
use phasegraph::montage::{channel_names, CHANNEL_NAMES};
use phasegraph::nn::{parameter_count, Checkpoint, PreparedSequence};
use phasegraph::pipeline::{prepare_dataset, Sample};
use phasegraph::preprocess::preprocess_recording;
use phasegraph::synth::planted_dataset;

use crate::output::{num, RunDir};

pub fn run_dir(cfg: &RunConfig, name: &str) -> Result<RunDir> {
    RunDir::create(cfg.output.dir.join(name), name, cfg.to_toml()?)
}

pub fn load(cfg: &RunConfig) -> Result<Dataset> {
    let root = cfg
        .dataset
        .root
        .as_ref()
        .context("dataset.root is not set (use --data or the config file)")?;
    let opts = LoadOptions {
        tasks: cfg.dataset.tasks.clone(),
        strict_lengths: cfg.dataset.strict_lengths,
    };
    Ok(load_dataset_with(root, &opts)?)
}

fn samples(cfg: &RunConfig, run: &mut RunDir) -> Result<Vec<Sample>> {
    let ds = run.time("load", || load(cfg))?;
    Ok(run.time("prepare", || prepare_dataset(&ds, &cfg.dataset.tasks, &cfg.pipeline()))?)
}

pub fn synth(cfg: &RunConfig, dest: Option<PathBuf>) -> Result<()> {
    let dest = dest
        .or_else(|| cfg.dataset.root.clone())
        .unwrap_or_else(|| cfg.output.dir.join("data"));
    let mut run = RunDir::create(dest.clone(), "synth", cfg.to_toml()?)?;
    let ds = run.time("generate", || planted_dataset(&cfg.synth))?;
    run.time("write", || write_dataset(&dest, &ds))?;
    run.write_json("synth_spec.json", &cfg.synth)?;
    run.finish()?;
    println!("wrote {} recordings to {}", ds.recordings.len(), dest.display());
    Ok(())
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let mut run = run_dir(cfg, "preprocess")?;
    let ds = run.time("load", || load(cfg))?;
    let recs: Vec<_> = ds.recordings.values().collect();
    let outs = run.time("preprocess", || {
        recs.par_iter()
            .map(|r| preprocess_recording(r, &cfg.preprocess))
            .collect::<phasegraph::Result<Vec<_>>>()
    })?;
    let rows = recs.iter().zip(&outs).map(|(r, o)| {
        let degenerate: Vec<&str> = o.zscore.degenerate.iter().map(|&c| CHANNEL_NAMES[c]).collect();
        vec![
            r.subject_id.clone(),
            r.task.code().to_string(),
            r.n_samples().to_string(),
            o.windowed.windows.len().to_string(),
            o.windowed.plan.window_len_samples.to_string(),
            o.windowed.plan.stride_samples.to_string(),
            degenerate.join(" "),
        ]
    });
    run.write_csv(
        "preprocess.csv",
        &["subject", "task", "n_samples", "n_windows", "window_len", "stride", "degenerate_channels"],
        rows,
    )?;
    run.finish()?;
    Ok(())
}

pub fn features(cfg: &RunConfig) -> Result<()> {
    let mut run = run_dir(cfg, "features")?;
    let ds = run.time("load", || load(cfg))?;
    let recs: Vec<_> = ds.recordings.values().collect();
    let feats = run.time("features", || {
        recs.par_iter()
            .map(|r| {
                let out = preprocess_recording(r, &cfg.preprocess)?;
                extract_node_features(&out.windowed, &cfg.welch)
            })
            .collect::<phasegraph::Result<Vec<_>>>()
    })?;
    let mut rows = Vec::new();
    for (r, windows) in recs.iter().zip(&feats) {
        for (w, m) in windows.iter().enumerate() {
            for (c, name) in CHANNEL_NAMES.iter().enumerate() {
                let mut row = vec![r.subject_id.clone(), r.task.code().to_string(), w.to_string(), name.to_string()];
                row.extend(m.row(c).iter().map(|&v| num(v)));
                rows.push(row);
            }
        }
    }
    let mut header = vec!["subject", "task", "window", "channel"];
    header.extend(FEATURE_NAMES);
    run.write_csv("features.csv", &header, rows)?;
    run.finish()?;
    Ok(())
}

pub fn graphs(cfg: &RunConfig) -> Result<()> {
    let mut run = run_dir(cfg, "graphs")?;
    let samples = samples(cfg, &mut run)?;
    let mut summary = Vec::new();
    let mut edges = Vec::new();
    for s in &samples {
        for (w, f) in s.sequence.frames.iter().enumerate() {
            let t = &f.topology;
            let n = t.n_nodes as f64;
            let mean = if t.weights.is_empty() { 0.0 } else { t.weights.iter().sum::<f64>() / t.weights.len() as f64 };
            summary.push(vec![
                s.subject_id.clone(),
                s.task.code().to_string(),
                w.to_string(),
                t.edge_count().to_string(),
                num(t.edge_count() as f64 / (n * (n - 1.0) / 2.0)),
                num(mean),
            ]);
            for (&(i, j), &wt) in t.edges.iter().zip(&t.weights) {
                edges.push(vec![
                    s.subject_id.clone(),
                    s.task.code().to_string(),
                    w.to_string(),
                    CHANNEL_NAMES[i].to_string(),
                    CHANNEL_NAMES[j].to_string(),
                    num(wt),
                ]);
            }
        }
    }
    run.write_csv("graphs.csv", &["subject", "task", "window", "edges", "density", "mean_weight"], summary)?;
    run.write_csv("edges.csv", &["subject", "task", "window", "channel_a", "channel_b", "weight"], edges)?;
    run.finish()?;
    Ok(())
}

pub fn train(cfg: &RunConfig, seed: Option<u64>) -> Result<()> {
    let seed = seed.or_else(|| cfg.eval.seeds.first().copied()).unwrap_or(42);
    let mut run = run_dir(cfg, "train")?;
    let samples = samples(cfg, &mut run)?;
    let trained = run.time("train", || train_all(&samples, &cfg.train_config(), seed))?;
    let meta = json!({
        "seed": seed,
        "tasks": cfg.dataset.tasks,
        "pipeline": cfg.pipeline(),
        "fit_subjects": trained.log.fit_subjects,
        "val_subjects": trained.log.val_subjects,
    });
    let ck = Checkpoint::new(&trained.params, &trained.scaler, meta);
    run.write("model.json", serde_json::to_string(&ck)?.as_bytes())?;
    run.write_json("training_log.json", &trained.log)?;
    run.finish()?;
    println!(
        "trained {} parameters for {} epochs (best {}); checkpoint in {}",
        trained.params.count(),
        trained.log.epochs_run,
        trained.log.best_epoch,
        run_path(cfg, "train/model.json").display()
    );
    Ok(())
}

fn run_path(cfg: &RunConfig, rel: &str) -> PathBuf {
    cfg.output.dir.join(rel)
}

fn write_report(run: &mut RunDir, report: &RunReport) -> Result<()> {
    run.write_json("run_report.json", report)?;
    let mut rows = Vec::new();
    for s in &report.seeds {
        for (level, m) in [("subject", &s.subject_metrics), ("window", &s.window_metrics)] {
            for (name, v) in phasegraph::eval::metrics::METRIC_NAMES.iter().zip(m.values()) {
                rows.push(vec![s.seed.to_string(), level.to_string(), name.to_string(), num(v)]);
            }
        }
    }
    for (level, summary) in [("subject", &report.subject_summary), ("window", &report.window_summary)] {
        for (name, ms) in summary.entries() {
            rows.push(vec!["mean".into(), level.into(), name.into(), num(ms.mean)]);
            rows.push(vec!["sd".into(), level.into(), name.into(), num(ms.sd)]);
        }
    }
    run.write_csv("metrics.csv", &["seed", "level", "metric", "value"], rows)?;
    let folds = report.seeds.iter().flat_map(|s| {
        s.folds.iter().map(move |f| {
            vec![
                s.seed.to_string(),
                f.fold_index.to_string(),
                f.test_subject.clone(),
                f.true_label.as_str().to_string(),
                num(f.probability),
                f.predicted.as_str().to_string(),
                f.log.epochs_run.to_string(),
                f.log.best_epoch.to_string(),
            ]
        })
    });
    run.write_csv(
        "folds.csv",
        &["seed", "fold", "test_subject", "true_label", "probability", "predicted", "epochs_run", "best_epoch"],
        folds,
    )?;
    Ok(())
}

fn print_summary(report: &RunReport) {
    let s = &report.subject_summary;
    println!(
        "{}: {} models; subject accuracy {:.2} ± {:.2}%, recall {:.2} ± {:.2}%, F1 {:.2} ± {:.2}%",
        report.tag,
        report.models_trained,
        100.0 * s.accuracy.mean,
        100.0 * s.accuracy.sd,
        100.0 * s.recall.mean,
        100.0 * s.recall.sd,
        100.0 * s.f1.mean,
        100.0 * s.f1.sd
    );
    for seed in &report.seeds {
        for f in &seed.failed_folds {
            eprintln!("warning: seed {} fold {} failed: {}", seed.seed, f.test_subject, f.error);
        }
    }
}

pub fn loso(cfg: &RunConfig, variant: Variant, dir: &str) -> Result<()> {
    let mut run = run_dir(cfg, dir)?;
    let exp = variant.apply(&cfg.experiment());
    let ds = run.time("load", || load(cfg))?;
    let samples = run.time("prepare", || prepare_dataset(&ds, &exp.tasks, &exp.pipeline))?;
    let report = run.time("loso", || run_experiment(&samples, &exp, variant.as_str()))?;
    write_report(&mut run, &report)?;
    run.finish()?;
    print_summary(&report);
    Ok(())
}

pub fn baseline(cfg: &RunConfig, kind: BaselineKind) -> Result<()> {
    let mut run = run_dir(cfg, &format!("baseline/{kind}"))?;
    let samples = samples(cfg, &mut run)?;
    let bcfg = cfg.baseline.config(kind);
    let report = run.time("loso", || run_baseline(&samples, &bcfg, &cfg.eval.seeds))?;
    write_report(&mut run, &report)?;
    run.finish()?;
    print_summary(&report);
    Ok(())
}

pub fn stats(cfg: &RunConfig) -> Result<()> {
    let mut run = run_dir(cfg, "stats")?;
    let ds = run.time("load", || load(cfg))?;
    let gs = run.time("stats", || group_stats(&ds, &cfg.dataset.tasks, &cfg.pipeline(), cfg.stats.test))?;
    run.write_json("group_stats/group_stats.json", &gs)?;
    for c in &gs.connectivity {
        let mut rows = Vec::new();
        for i in 0..c.difference.rows() {
            for j in i + 1..c.difference.cols() {
                rows.push(vec![
                    CHANNEL_NAMES[i].to_string(),
                    CHANNEL_NAMES[j].to_string(),
                    num(c.addicted.get(i, j)),
                    num(c.control.get(i, j)),
                    num(c.difference.get(i, j)),
                ]);
            }
        }
        run.write_csv(
            &format!("group_stats/wpli_{}.csv", c.task.code()),
            &["channel_a", "channel_b", "addicted", "control", "difference"],
            rows,
        )?;
    }
    let band_rows = gs.band_tests.iter().map(|b| {
        vec![
            b.task.code().to_string(),
            format!("{:?}", b.band),
            b.test.to_string(),
            num(b.mean_addicted),
            num(b.mean_control),
            num(b.statistic),
            num(b.p_value),
        ]
    });
    run.write_csv(
        "group_stats/band_tests.csv",
        &["task", "band", "test", "mean_addicted", "mean_control", "statistic", "p_value"],
        band_rows,
    )?;
    let pw_rows = gs.pli_wpli.iter().map(|r| {
        vec![r.subject_id.clone(), r.task.code().to_string(), num(r.pearson_r), num(r.mean_pli), num(r.mean_wpli)]
    });
    run.write_csv("group_stats/pli_wpli.csv", &["subject", "task", "pearson_r", "mean_pli", "mean_wpli"], pw_rows)?;
    run.finish()?;
    println!(
        "group statistics for {} condition(s); mean PLI–wPLI r = {:.3}, wPLI/PLI = {:.2}",
        gs.connectivity.len(),
        gs.mean_pli_wpli_r,
        gs.wpli_pli_ratio
    );
    Ok(())
}

pub fn explain(cfg: &RunConfig) -> Result<()> {
    let ck_path = cfg.explain.checkpoint.clone().unwrap_or_else(|| run_path(cfg, "train/model.json"));
    let ck = Checkpoint::load(&ck_path)?;
    let params = ck.model_params()?;
    let mut run = run_dir(cfg, "explain")?;
    let samples = samples(cfg, &mut run)?;
    let steps = cfg.explain.steps;
    let attrs: Vec<AttributionMap> = run.time("integrated_gradients", || {
        samples
            .par_iter()
            .map(|s| {
                let seq = PreparedSequence::new(&s.sequence, Some(&ck.scaler));
                integrated_gradients(&params, &seq, &zero_baseline(&seq), steps)
            })
            .collect::<phasegraph::Result<Vec<_>>>()
    })?;
    let edges = run.time("edge_importance", || {
        let seqs: Vec<PreparedSequence> = samples.iter().map(|s| PreparedSequence::new(&s.sequence, Some(&ck.scaler))).collect();
        edge_importance(&params, &seqs)
    })?;

    let mut ig_rows = Vec::new();
    let mut completeness = Vec::new();
    for (s, a) in samples.iter().zip(&attrs) {
        for (w, m) in a.values.iter().enumerate() {
            for (c, ch) in CHANNEL_NAMES.iter().enumerate().take(m.rows()) {
                for (f, feat) in FEATURE_NAMES.iter().enumerate().take(m.cols()) {
                    ig_rows.push(vec![
                        s.subject_id.clone(),
                        s.task.code().to_string(),
                        w.to_string(),
                        ch.to_string(),
                        feat.to_string(),
                        num(m.get(c, f)),
                    ]);
                }
            }
        }
        completeness.push(vec![
            s.subject_id.clone(),
            s.task.code().to_string(),
            num(a.logit),
            num(a.baseline_logit),
            num(a.total()),
            a.completeness_error().map(num).unwrap_or_default(),
        ]);
    }
    run.write_csv("ig_attributions.csv", &["subject", "task", "window", "channel", "feature", "value"], ig_rows)?;
    run.write_csv(
        "completeness.csv",
        &["subject", "task", "logit", "baseline_logit", "attribution_sum", "relative_error"],
        completeness,
    )?;

    let pooled = AttributionMap::pooled(&attrs).context("no samples to explain")?;
    let ch = channel_importance(&pooled);
    let fe = feature_importance(&pooled);
    run.write_csv(
        "channel_importance.csv",
        &["channel", "importance"],
        CHANNEL_NAMES.iter().zip(&ch).map(|(n, v)| vec![n.to_string(), num(*v)]),
    )?;
    run.write_csv(
        "feature_importance.csv",
        &["feature", "importance"],
        FEATURE_NAMES.iter().zip(&fe).map(|(n, v)| vec![n.to_string(), num(*v)]),
    )?;
    let mut header = vec!["channel"];
    header.extend(CHANNEL_NAMES);
    run.write_csv(
        "edge_importance.csv",
        &header,
        (0..edges.values.rows()).map(|i| {
            let mut row = vec![CHANNEL_NAMES[i].to_string()];
            row.extend(edges.values.row(i).iter().map(|&v| num(v)));
            row
        }),
    )?;
    let top = top_connections(&edges, &channel_names(), cfg.explain.top_k);
    run.write_csv(
        "top_edges.csv",
        &["rank", "channel_a", "channel_b", "importance"],
        top.iter().map(|e| vec![e.rank.to_string(), e.channel_a.clone(), e.channel_b.clone(), num(e.importance)]),
    )?;

    let errors: Vec<f64> = attrs.iter().filter_map(|a| a.completeness_error()).collect();
    let max_error = errors.iter().cloned().fold(0.0, f64::max);
    let share = |idx: &[usize]| idx.iter().map(|&i| fe[i]).sum::<f64>();
    let mut ranked: Vec<(&str, f64)> = CHANNEL_NAMES.iter().copied().zip(ch.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    let summary = json!({
        "checkpoint": ck_path,
        "parameter_count": parameter_count(&params.config),
        "samples": attrs.len(),
        "steps": steps,
        "baseline": pooled.baseline,
        "max_completeness_error": max_error,
        "completeness_checked": errors.len(),
        "channel_ranking": ranked.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
        "channel_importance": CHANNEL_NAMES.iter().zip(&ch).map(|(n, v)| (n.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
        "feature_importance": FEATURE_NAMES.iter().zip(&fe).map(|(n, v)| (n.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
        "beta_share": share(&[3]),
        "hjorth_share": share(&[5, 6, 7]),
        "top_edges": top,
    });
    run.write_json("summary.json", &summary)?;
    run.finish()?;
    println!(
        "explained {} samples; top channels {}; max IG completeness error {:.2e}",
        attrs.len(),
        ranked.iter().take(3).map(|r| r.0).collect::<Vec<_>>().join(", "),
        max_error
    );
    Ok(())
}
