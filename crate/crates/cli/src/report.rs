//! Merges finished runs into `report/report.json`, each measured value next
//! to its published counterpart. Nothing here asserts agreement; the only
//! flag raised is a recall below 70% on every seed.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use phasegraph::config::RunConfig;
use phasegraph::eval::{GroupStats, MetricSet, RunReport};

use crate::commands::run_dir;

/// Accuracy, precision, recall, F1, ROC-AUC in percent.
const PUBLISHED_LOGREG: [f64; 5] = [62.14, 50.00, 29.29, 34.73, 50.00];
const PUBLISHED_MLP: [f64; 5] = [51.90, 50.00, 26.19, 32.46, 50.00];
const PUBLISHED_SEEDS: [(u64, [f64; 5]); 3] = [
    (42, [57.14, 54.55, 85.71, 66.67, 59.18]),
    (123, [78.57, 77.78, 100.00, 87.50, 89.80]),
    (456, [57.14, 50.00, 71.43, 58.82, 44.90]),
];
const PUBLISHED_MEAN_SD: [(f64, f64); 5] = [(64.29, 15.43), (60.77, 12.17), (85.71, 11.66), (71.00, 12.10), (64.63, 18.73)];
/// Accuracy, F1, F1 change (percentage points).
const PUBLISHED_ABLATION: [(&str, [f64; 3]); 3] = [
    ("full", [64.29, 71.00, 0.0]),
    ("spatial_only", [42.86, 50.00, -21.00]),
    ("fully_connected", [14.29, 14.29, -56.71]),
];
const PUBLISHED_PLI_WPLI_R: f64 = 0.623;
const PUBLISHED_WPLI_PLI_RATIO: f64 = 2.5;
const PUBLISHED_BETA_SHARE: f64 = 0.589;
const PUBLISHED_HJORTH_SHARE: f64 = 0.312;
const RECALL_FLAG: f64 = 0.70;

const METRICS: [&str; 5] = ["accuracy", "precision", "recall", "f1", "roc_auc"];

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

fn pct(v: f64) -> f64 {
    (v * 1e4).round() / 1e2
}

fn metric_obj(values: [f64; 5]) -> Value {
    METRICS.iter().zip(values).map(|(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>().into()
}

fn ours_mean_sd(r: &RunReport) -> Value {
    r.subject_summary
        .entries()
        .iter()
        .map(|(k, ms)| (k.to_string(), json!({"mean": pct(ms.mean), "sd": pct(ms.sd)})))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn ours_set(m: &MetricSet) -> Value {
    metric_obj(m.values().map(pct))
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let out = &cfg.output.dir;
    let loso: Option<RunReport> = read_json(&out.join("loso/run_report.json"))?;
    let logreg: Option<RunReport> = read_json(&out.join("baseline/logreg/run_report.json"))?;
    let mlp: Option<RunReport> = read_json(&out.join("baseline/mlp/run_report.json"))?;
    let stats: Option<GroupStats> = read_json(&out.join("stats/group_stats/group_stats.json"))?;
    let explain: Option<Value> = read_json(&out.join("explain/summary.json"))?;
    let mut ablations = Vec::new();
    for (name, _) in PUBLISHED_ABLATION {
        let r: Option<RunReport> = read_json(&out.join(format!("ablate/{name}/run_report.json")))?;
        ablations.push((name, r));
    }

    let mut missing = Vec::new();
    let mut flags = Vec::new();
    let mut doc = serde_json::Map::new();

    let mut models = Vec::new();
    for (model, run, published) in [
        ("logistic_regression", &logreg, Some(PUBLISHED_LOGREG)),
        ("mlp", &mlp, Some(PUBLISHED_MLP)),
        ("phasegraph", &loso, None),
    ] {
        match run {
            Some(r) => models.push(json!({
                "model": model,
                "ours": ours_mean_sd(r),
                "published": published.map(metric_obj).unwrap_or_else(|| metric_obj(PUBLISHED_MEAN_SD.map(|m| m.0))),
            })),
            None => missing.push(model),
        }
    }
    doc.insert("models".into(), models.into());

    if let Some(r) = &loso {
        let seeds: Vec<Value> = r
            .seeds
            .iter()
            .map(|s| {
                let published = PUBLISHED_SEEDS.iter().find(|p| p.0 == s.seed).map(|p| metric_obj(p.1));
                json!({
                    "seed": s.seed,
                    "ours": ours_set(&s.subject_metrics),
                    "ours_window": ours_set(&s.window_metrics),
                    "confusion": s.subject_confusion,
                    "published": published,
                })
            })
            .collect();
        doc.insert(
            "seeds".into(),
            json!({
                "seeds": seeds,
                "ours_mean_sd": ours_mean_sd(r),
                "published_mean_sd": METRICS.iter().zip(PUBLISHED_MEAN_SD).map(|(k, (m, s))| (k.to_string(), json!({"mean": m, "sd": s}))).collect::<serde_json::Map<_, _>>(),
            }),
        );
        let best_recall = r.seeds.iter().map(|s| s.subject_metrics.recall).fold(f64::NEG_INFINITY, f64::max);
        if r.seeds.is_empty() || best_recall < RECALL_FLAG {
            flags.push(format!(
                "subject recall below {:.0}% on every seed (best {:.2}%)",
                100.0 * RECALL_FLAG,
                100.0 * best_recall.max(0.0)
            ));
        }
    }

    let full_f1 = ablations
        .iter()
        .find(|a| a.0 == "full")
        .and_then(|a| a.1.as_ref())
        .or(loso.as_ref())
        .map(|r| r.subject_summary.f1.mean);
    let mut ablation = Vec::new();
    for ((name, run), (_, published)) in ablations.iter().zip(PUBLISHED_ABLATION) {
        let run = run.as_ref().or(if *name == "full" { loso.as_ref() } else { None });
        match run {
            Some(r) => {
                let f1 = r.subject_summary.f1.mean;
                ablation.push(json!({
                    "configuration": name,
                    "ours": {
                        "accuracy": pct(r.subject_summary.accuracy.mean),
                        "f1": pct(f1),
                        "f1_change": full_f1.map(|b| pct(f1 - b)),
                    },
                    "published": {"accuracy": published[0], "f1": published[1], "f1_change": published[2]},
                }));
            }
            None => missing.push(name),
        }
    }
    doc.insert("ablation".into(), ablation.into());

    match &stats {
        Some(gs) => {
            doc.insert(
                "pli_wpli".into(),
                json!({
                    "ours_mean_r": gs.mean_pli_wpli_r,
                    "published_mean_r": PUBLISHED_PLI_WPLI_R,
                    "ours_wpli_pli_ratio": gs.wpli_pli_ratio,
                    "published_wpli_pli_ratio": PUBLISHED_WPLI_PLI_RATIO,
                }),
            );
            doc.insert("band_tests".into(), serde_json::to_value(&gs.band_tests)?);
        }
        None => missing.push("stats"),
    }

    match &explain {
        Some(e) => {
            doc.insert(
                "feature_shares".into(),
                json!({
                    "ours_beta": e["beta_share"],
                    "published_beta": PUBLISHED_BETA_SHARE,
                    "ours_hjorth": e["hjorth_share"],
                    "published_hjorth": PUBLISHED_HJORTH_SHARE,
                    "channel_ranking": e["channel_ranking"],
                    "top_edges": e["top_edges"],
                }),
            );
        }
        None => missing.push("explain"),
    }

    doc.insert("flags".into(), json!(flags));
    doc.insert("missing".into(), json!(missing));
    let mut run = run_dir(cfg, "report")?;
    run.write_json("report.json", &Value::Object(doc))?;
    run.finish()?;

    if let Some(r) = &loso {
        println!("{:<8}{:>10}{:>11}{:>9}{:>9}{:>9}", "seed", "accuracy", "precision", "recall", "f1", "auc");
        for s in &r.seeds {
            let v = s.subject_metrics.values().map(pct);
            println!("{:<8}{:>10.2}{:>11.2}{:>9.2}{:>9.2}{:>9.2}", s.seed, v[0], v[1], v[2], v[3], v[4]);
        }
        let p = PUBLISHED_MEAN_SD.map(|m| m.0);
        let o = r.subject_summary.entries().map(|e| pct(e.1.mean));
        println!("{:<8}{:>10.2}{:>11.2}{:>9.2}{:>9.2}{:>9.2}", "mean", o[0], o[1], o[2], o[3], o[4]);
        println!("{:<8}{:>10.2}{:>11.2}{:>9.2}{:>9.2}{:>9.2}", "published", p[0], p[1], p[2], p[3], p[4]);
    }
    for f in &flags {
        println!("flag: {f}");
    }
    if !missing.is_empty() {
        println!("not yet run: {}", missing.join(", "));
    }
    Ok(())
}
