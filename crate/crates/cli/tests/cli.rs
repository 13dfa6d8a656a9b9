use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phasegraph::dataset::{load_dataset_with, LoadOptions, TaskId};
use phasegraph::eval::RunReport;

fn phasegraph(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasegraph"))
        .current_dir(cwd)
        .env("PHASEGRAPH_THREADS", "1")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Short planted recordings and a tiny model so each run takes seconds.
const FAST: [&str; 16] = [
    "--set",
    "synth.duration_s=12.0",
    "--set",
    "dataset.strict_lengths=false",
    "--set",
    "model.gat_hidden=4",
    "--set",
    "model.gru_hidden=4",
    "--set",
    "model.mlp_hidden=4",
    "--set",
    "train.epochs=1",
    "--out",
    "out",
    "--data",
    "out/data",
];

fn run(cwd: &Path, args: &[&str]) -> Output {
    let all: Vec<&str> = args.iter().chain(FAST.iter()).copied().collect();
    let o = phasegraph(cwd, &all);
    assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    o
}

#[test]
fn explain_without_checkpoint_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    run(tmp.path(), &["synth"]);
    let o = phasegraph(tmp.path(), &["explain", "--out", "out"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("checkpoint not found"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = phasegraph(tmp.path(), &["stats", "--set", "model.flux=3"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("model.flux"), "{}", stderr(&o));
}

#[test]
fn mistyped_config_value_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let o = phasegraph(tmp.path(), &["stats", "--set", "optim.lr=\"fast\""]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("optim.lr"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let o = phasegraph(tmp.path(), &["stats", "-c", "nope.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope.toml"), "{}", stderr(&o));
}

#[test]
fn synth_output_loads_as_a_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    run(tmp.path(), &["synth"]);
    let opts = LoadOptions {
        tasks: vec![TaskId::ET],
        strict_lengths: false,
    };
    let ds = load_dataset_with(&tmp.path().join("out/data"), &opts).unwrap();
    assert_eq!(ds.subjects().len(), 14);
    assert_eq!(ds.class_counts(), (7, 7));
    assert!(tmp.path().join("out/data/manifest.json").exists());
}

#[test]
fn loso_writes_every_fold_of_every_seed() {
    let tmp = tempfile::tempdir().unwrap();
    run(tmp.path(), &["synth"]);
    run(tmp.path(), &["loso"]);
    let report: RunReport = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/loso/run_report.json")).unwrap()).unwrap();
    assert_eq!(report.tag, "full");
    assert_eq!(report.seeds.iter().map(|s| s.seed).collect::<Vec<_>>(), [42, 123, 456]);
    assert!(report.seeds.iter().all(|s| s.folds.len() == 14));
    let folds = fs::read_to_string(tmp.path().join("out/loso/folds.csv")).unwrap();
    assert_eq!(folds.lines().count(), 1 + 3 * 14);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/loso/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["threads"], 1);
    assert!(tmp.path().join("out/loso/config.toml").exists());
}

#[test]
fn ablation_run_is_tagged_with_its_variant() {
    let tmp = tempfile::tempdir().unwrap();
    run(tmp.path(), &["synth"]);
    run(tmp.path(), &["ablate", "--variant", "fully_connected", "--set", "eval.seeds=[42]"]);
    let report: RunReport =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/ablate/fully_connected/run_report.json")).unwrap()).unwrap();
    assert_eq!(report.tag, "fully_connected");
}

#[test]
fn report_lists_runs_not_yet_made() {
    let tmp = tempfile::tempdir().unwrap();
    run(tmp.path(), &["report"]);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/report/report.json")).unwrap()).unwrap();
    assert!(doc["missing"].as_array().unwrap().iter().any(|m| m == "stats"));
}
