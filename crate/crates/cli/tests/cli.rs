use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn chaosib(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaosib"))
        .current_dir(dir)
        .env_remove("CHAOSIB_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

const SHORT: &[&str] = &["--t-total", "60", "--trajectories", "5"];

fn tiny_train_config(dir: &Path) -> String {
    let cfg = r#"{
        "batch-size": 16,
        "eval-every": 10,
        "eval-batches": 2,
        "encoder-widths": [8],
        "shared-widths": [8],
        "future-widths": [8],
        "bottleneck-dim": 4,
        "shared-dim": 4
    }"#;
    std::fs::write(dir.join("tiny.json"), cfg).unwrap();
    "tiny.json".into()
}

#[test]
fn simulate_writes_full_length_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let out = chaosib(
        dir.path(),
        &[
            "simulate",
            "--energy-over-g",
            "3",
            "--l1",
            "1",
            "--l2",
            "1",
            "--trajectories",
            "5",
            "--seed",
            "7",
            "--out",
            "d.dpib",
            "--json",
        ],
    );
    let summary: serde_json::Value = serde_json::from_str(&ok(&out)).unwrap();
    assert_eq!(summary["accepted"], 5);
    assert_eq!(summary["states_per_trajectory"], 2500);
}

#[test]
fn missing_out_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = chaosib(dir.path(), &["simulate", "--trajectories", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.dpib", "b.dpib"] {
        let mut args = vec!["simulate", "--seed", "3", "--out", name];
        args.extend(SHORT);
        ok(&chaosib(dir.path(), &args));
    }
    assert_eq!(digest(&dir.path().join("a.dpib")), digest(&dir.path().join("b.dpib")));
}

#[test]
fn out_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--out", "d.dpib"];
    args.extend(SHORT);
    let out = Command::new(env!("CARGO_BIN_EXE_chaosib"))
        .current_dir(dir.path())
        .env("CHAOSIB_OUT_DIR", "nested")
        .args(&args)
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("nested/d.dpib").exists());
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sim.json"),
        r#"{"trajectories": 3, "t-total": 60, "out": "from_file.dpib", "seed": 4}"#,
    )
    .unwrap();
    let out = ok(&chaosib(
        dir.path(),
        &["simulate", "--config", "sim.json", "--trajectories", "2", "--json"],
    ));
    let summary: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["accepted"], 2);
    assert_eq!(summary["states_per_trajectory"], 500);
    assert!(dir.path().join("from_file.dpib").exists());

    std::fs::write(dir.path().join("bad.json"), r#"{"no-such-flag": 1}"#).unwrap();
    let out = chaosib(dir.path(), &["simulate", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_table_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(&chaosib(dir.path(), &["train", "--help"]));
    for needle in [
        "[default: 256]",
        "[default: 0.0003]",
        "[default: 0.0005]",
        "[default: 2]",
        "[default: 50000]",
        "[default: 128,128]",
        "[default: 256,256]",
        "[default: 1,2,4,8,16,32,64,128]",
        "[default: 32]",
        "[default: 64]",
        "[default: 0.2]",
    ] {
        assert!(help.contains(needle), "missing {needle}");
    }
    let sim = ok(&chaosib(dir.path(), &["simulate", "--help"]));
    for needle in ["[default: 0.001]", "[default: 0.02]", "[default: 100]", "[default: 50]", "[default: 3]"] {
        assert!(sim.contains(needle), "missing {needle}");
    }
}

#[test]
fn train_defaults_echo_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--out", "d.dpib"];
    args.extend(SHORT);
    ok(&chaosib(dir.path(), &args));
    ok(&chaosib(
        dir.path(),
        &["train", "--data", "d.dpib", "--steps", "0", "--run-dir", "run"],
    ));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    let c = &manifest["config"];
    assert_eq!(c["batch_size"], 256);
    assert_eq!(c["learning_rate"], 3e-4);
    assert_eq!(c["schedule"]["beta_initial"], 5e-4);
    assert_eq!(c["schedule"]["beta_final"], 2.0);
    assert_eq!(c["model"]["encoder_widths"], serde_json::json!([128, 128]));
    assert_eq!(c["model"]["shared_widths"], serde_json::json!([256, 256]));
    assert_eq!(c["model"]["bottleneck_dim"], 32);
    assert_eq!(c["model"]["shared_dim"], 64);
    assert_eq!(c["model"]["leaky_slope"], 0.2);
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["n_points"], 0);
    assert!(dir.path().join("run/checkpoint.json").exists());
    assert!(dir.path().join("run/checkpoint.bin").exists());
    let log = std::fs::read_to_string(dir.path().join("run/runlog.csv")).unwrap();
    assert_eq!(log.lines().count(), 1);
}

#[test]
fn sweep_reruns_are_skipped_and_analyses_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--out", "d.dpib"];
    args.extend(SHORT);
    ok(&chaosib(dir.path(), &args));
    let cfg = tiny_train_config(dir.path());
    let sweep = [
        "sweep",
        "--config",
        &cfg,
        "--data",
        "d.dpib",
        "--mode",
        "dib",
        "--deltas",
        "0.2,0.4",
        "--split-indices",
        "0",
        "--steps",
        "30",
        "--out-dir",
        "runs",
    ];
    let first = ok(&chaosib(dir.path(), &sweep));
    assert_eq!(first.lines().filter(|l| l.starts_with("completed")).count(), 2);
    let again = ok(&chaosib(dir.path(), &sweep));
    assert_eq!(again.lines().filter(|l| l.starts_with("skipped")).count(), 2);

    ok(&chaosib(dir.path(), &["plot", "infoplane", "--runs", "runs", "--out-dir", "figs"]));
    let svg = std::fs::read_to_string(dir.path().join("figs/infoplane.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    let run = "runs/dib_delta0.2_split0of5_seed0";
    ok(&chaosib(dir.path(), &["analyze", "allocation", "--run", run, "--out-dir", "figs"]));
    assert!(dir.path().join("figs/allocation.csv").exists());

    let out = ok(&chaosib(
        dir.path(),
        &[
            "analyze",
            "coembed",
            "--checkpoint",
            &format!("{run}/checkpoint.json"),
            "--data",
            "d.dpib",
            "--state",
            "0.5,0.0,-1.0,0.0",
            "--sample",
            "100",
            "--out-dir",
            "figs",
            "--json",
        ],
    ));
    let summary: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["bc_threshold"], 0.5);
    assert_eq!(summary["sample"], 100);
}

#[test]
fn single_run_plots_one_curve() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--out", "d.dpib"];
    args.extend(SHORT);
    ok(&chaosib(dir.path(), &args));
    let cfg = tiny_train_config(dir.path());
    ok(&chaosib(
        dir.path(),
        &["train", "--config", &cfg, "--data", "d.dpib", "--steps", "20", "--run-dir", "one"],
    ));
    ok(&chaosib(dir.path(), &["plot", "infoplane", "--runs", "one"]));
    let svg = std::fs::read_to_string(dir.path().join("infoplane.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
}

#[test]
fn allocation_of_ib_log_names_dib() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--out", "d.dpib"];
    args.extend(SHORT);
    ok(&chaosib(dir.path(), &args));
    let cfg = tiny_train_config(dir.path());
    ok(&chaosib(
        dir.path(),
        &["train", "--config", &cfg, "--data", "d.dpib", "--steps", "20", "--run-dir", "ib"],
    ));
    let out = chaosib(dir.path(), &["analyze", "allocation", "--run", "ib"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DIB"));
}

#[test]
fn failed_sweep_run_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--out", "d.dpib"];
    args.extend(SHORT);
    ok(&chaosib(dir.path(), &args));
    let cfg = tiny_train_config(dir.path());
    // A 20 s horizon is longer than the 10 s trajectories.
    let out = chaosib(
        dir.path(),
        &[
            "sweep", "--config", &cfg, "--data", "d.dpib", "--deltas", "0.2,20", "--split-indices", "0", "--steps", "10",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("completed") && stdout.contains("failed"));
}
