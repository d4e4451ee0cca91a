use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &[&str] = &["--revolutions", "40", "--conditions", "10", "--seed", "3"];

fn tireforce(out: &Path, args: &[&str]) -> Output {
    let o = Command::new(env!("CARGO_BIN_EXE_tireforce"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    o
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = tireforce(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn with(base: &[&str], extra: &[&'static str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn ok_v(out: &Path, args: &[String]) -> String {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(out, &refs)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn prepared(extra: &[&'static str]) -> TempDir {
    let dir = TempDir::new().unwrap();
    ok_v(dir.path(), &with(SMALL, &[&["generate"][..], extra].concat()));
    ok_v(dir.path(), &with(SMALL, &[&["preprocess"][..], extra].concat()));
    dir
}

fn checksums(dir: &Path) -> std::collections::BTreeMap<String, String> {
    tireforce::workflow::artifact_checksums(dir).unwrap()
}

#[test]
fn smoke_dataset_has_ten_traces_and_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["--revolutions", "10", "--conditions", "1", "generate"];
    ok(a.path(), &args);
    ok(b.path(), &args);
    let m = json(&a.path().join("raw/manifest.json"));
    assert_eq!(m["traces"], 10);
    assert_eq!(m["seed"], 1);
    assert!(m["schedule_digest"].as_str().unwrap().len() == 64);
    assert!(m["version"].is_string());
    let traces = std::fs::read_to_string(a.path().join("raw/traces.csv")).unwrap();
    assert_eq!(traces.lines().count(), 11);
    assert_eq!(checksums(a.path()), checksums(b.path()));
    ok(a.path(), &args);
    assert_eq!(checksums(a.path()), checksums(b.path()));
}

#[test]
fn default_manifest_lists_full_schedule_counts() {
    let dir = TempDir::new().unwrap();
    let out = ok(dir.path(), &["--print-config"]);
    assert!(out.contains("forest_n_trees = 100"));
    let cfg = tireforce::config::RunConfig::from_toml(&out).unwrap();
    let s = cfg.schedule().unwrap();
    assert_eq!(s.total_revolutions(), 6833);
    assert_eq!(s.revolutions_of(tireforce::simulator::ManeuverKind::Cornering), 2713);
    assert_eq!(s.revolutions_of(tireforce::simulator::ManeuverKind::Driving), 352);
}

#[test]
fn noiseless_preprocess_skips_nothing_and_is_idempotent() {
    let dir = prepared(&["--set", "noise_kind=std", "--set", "noise_level=0"]);
    let m = json(&dir.path().join("processed/manifest.json"));
    assert_eq!(m["skipped"], 0);
    assert_eq!(m["traces"], 400);
    let skipped = std::fs::read_to_string(dir.path().join("processed/skipped.csv")).unwrap();
    assert_eq!(skipped.lines().count(), 1);
    for axis in ["fx", "fy", "fz"] {
        let stats = std::fs::read_to_string(dir.path().join(format!("processed/stats_{axis}.txt"))).unwrap();
        let lines: Vec<&str> = stats.lines().collect();
        assert_eq!(lines.len(), 3);
        for l in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            assert_eq!(f.len(), 3, "{l}");
            let (lo, hi): (f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
            assert!(lo <= hi);
        }
    }
    let before = checksums(&dir.path().join("processed"));
    ok_v(dir.path(), &with(SMALL, &["--set", "noise_kind=std", "--set", "noise_level=0", "preprocess"]));
    assert_eq!(before, checksums(&dir.path().join("processed")));
}

#[test]
fn train_mlp_writes_model_and_best_validation_record() {
    let dir = prepared(&[]);
    ok_v(dir.path(), &with(SMALL, &["--set", "mlp_max_epochs=150", "train", "mlp", "fz"]));
    let models = dir.path().join("models");
    assert!(models.join("mlp_fz.model").exists());
    let m = json(&models.join("mlp_fz.json"));
    assert_eq!(m["hyperparameters"]["max_epochs"], 150);
    assert_eq!(m["hyperparameters"]["hidden"], serde_json::json!([10, 5, 1]));
    let history = std::fs::read_to_string(models.join("mlp_fz.history.csv")).unwrap();
    let val: Vec<f64> = history
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(val.len(), m["epochs_run"].as_u64().unwrap() as usize);
    let best = val.iter().cloned().fold(f64::INFINITY, f64::min);
    let recorded = m["best_validation_mse"].as_f64().unwrap();
    assert!(recorded <= best, "{recorded} vs {best}");
    if m["best_epoch"].as_u64().unwrap() > 0 {
        assert_eq!(recorded, best);
    }
}

#[test]
fn forest_tree_count_flag_reaches_manifest() {
    let dir = prepared(&[]);
    ok_v(dir.path(), &with(SMALL, &["train", "forest", "fy", "--n-trees", "150"]));
    let m = json(&dir.path().join("models/forest_fy.json"));
    assert_eq!(m["hyperparameters"]["n_trees"], 150);
    assert!(!dir.path().join("models/forest_fy.history.csv").exists());
}

#[test]
fn rnn_defaults_reach_manifest() {
    let dir = prepared(&[]);
    ok_v(dir.path(), &with(SMALL, &["train", "rnn", "fx"]));
    let h = &json(&dir.path().join("models/rnn_fx.json"))["hyperparameters"];
    assert_eq!(h["batch_size"], 50);
    assert_eq!(h["epochs"], 10000);
    assert_eq!(h["learning_rate"], 0.001);
    assert_eq!(h["sequence_length"], 10);
    assert_eq!(h["hidden"], serde_json::json!([10, 5]));
}

#[test]
fn compare_emits_one_plot_per_method() {
    let dir = prepared(&[]);
    let out = ok_v(
        dir.path(),
        &with(SMALL, &["--set", "mlp_max_epochs=100", "--set", "rnn_epochs=20", "--set", "forest_n_trees=10", "compare", "--axis", "fz"]),
    );
    assert!(out.contains("mlp") && out.contains("forest") && out.contains("rnn"));
    let reports = dir.path().join("reports/compare");
    let plots: Vec<String> = std::fs::read_dir(&reports)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("plot_"))
        .collect();
    assert_eq!(plots.len(), 3, "{plots:?}");
    for m in ["mlp", "forest", "rnn"] {
        let p = std::fs::read_to_string(reports.join(format!("plot_{m}_fz.csv"))).unwrap();
        assert_eq!(p.lines().next().unwrap(), "sample_index,measured_n,estimated_n");
    }
    let r = json(&reports.join("report.json"));
    assert_eq!(r["methods"].as_array().unwrap().len(), 3);
    assert!(reports.join("report.txt").exists());
    assert!(json(&reports.join("timings.json")).as_object().unwrap().len() == 3);
}

#[test]
fn crossval_writes_ten_fold_rows_per_axis() {
    let dir = prepared(&[]);
    ok_v(dir.path(), &with(SMALL, &["--set", "mlp_cv_max_epochs=30", "crossval", "--axis", "fz,fy"]));
    let reports = dir.path().join("reports/crossval");
    for axis in ["fz", "fy"] {
        let folds = std::fs::read_to_string(reports.join(format!("cv_folds_mlp_{axis}.csv"))).unwrap();
        assert_eq!(folds.lines().count(), 11, "{folds}");
        let total: usize = folds.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(total, if axis == "fz" { 400 } else { 320 });
        let bx = std::fs::read_to_string(reports.join(format!("cv_boxplot_mlp_{axis}.csv"))).unwrap();
        assert_eq!(bx.lines().next().unwrap(), "min,q1,median,q3,max,mean");
        assert_eq!(bx.lines().nth(1).unwrap().split(',').count(), 6);
    }
}

#[test]
fn oracle_evaluates_to_zero() {
    let dir = prepared(&[]);
    let out = ok_v(dir.path(), &with(SMALL, &["evaluate", "--method", "oracle"]));
    assert_eq!(out.matches("0.00%").count(), 3, "{out}");
    let r = json(&dir.path().join("reports/evaluate/report.json"));
    for m in r["methods"].as_array().unwrap() {
        assert_eq!(m["nrms_pct"], 0.0);
    }
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "forest_trees = 3\n").unwrap();
    assert_eq!(tireforce(dir.path(), &["--config", cfg.to_str().unwrap(), "generate"]).status.code(), Some(2));
    assert_eq!(tireforce(dir.path(), &["--set", "train_fraction=0.9", "generate"]).status.code(), Some(2));
    assert_eq!(tireforce(dir.path(), &["train", "svm", "fz"]).status.code(), Some(2));
    assert_eq!(tireforce(dir.path(), &["preprocess"]).status.code(), Some(3));

    let dir = prepared(&[]);
    let missing = tireforce(dir.path(), &with(SMALL, &["evaluate", "--method", "mlp", "--axis", "fz"]).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(missing.status.code(), Some(3));
    let diverge = with(SMALL, &["--set", "rnn_learning_rate=1e300", "--set", "rnn_clip_norm=0", "--set", "rnn_epochs=20", "train", "rnn", "fz"]);
    let o = tireforce(dir.path(), &diverge.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
