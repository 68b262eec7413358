use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use redslds::cli::{build_dataset, checkpoint_name, cmd_evaluate, cmd_generate, DATA_FILE};
use redslds::config::RunConfig;
use redslds::gibbs::{chain_seed, Chain};
use redslds::Error;
use serde_json::{json, Value};
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redslds"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn tiny_config(iterations: usize, chains: usize) -> Value {
    json!({
        "model": {"variant": "redslds", "num_modes": 4, "latent_dim": 2, "max_duration": 10},
        "prior": {"dynamics_s0_scale": 1e-4},
        "run": {"seed": 3, "iterations": iterations, "chains": chains, "scheme": "II"},
        "data": {
            "source": {"kind": "nascar", "runs": 1, "length": 300, "obs_dim": 5},
            "splits": 3,
            "fraction": 0.67
        }
    })
}

#[test]
fn default_generation_yields_forty_chunks() {
    let config = RunConfig::from_json(
        &json!({
            "model": {"variant": "redslds", "num_modes": 4, "latent_dim": 2},
            "run": {"seed": 1},
            "data": {"source": {"kind": "nascar"}, "splits": 5, "fraction": 0.8}
        })
        .to_string(),
    )
    .unwrap();
    let data = build_dataset(&config).unwrap();
    assert_eq!(data.sequences.len(), 40);
    assert!(data.sequences.iter().all(|s| s.len() == 2400));
    assert_eq!(data.total_len(), 96_000);
    assert!(data.labels.as_ref().unwrap().iter().all(|l| l.len() == 2400));
}

#[test]
fn generation_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.json", &tiny_config(1, 1));
    for dir in ["a", "b"] {
        let out = bin(&["generate", "--config", path_arg(&config), "--out", path_arg(&tmp.path().join(dir))]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in [DATA_FILE, "data.manifest.json"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let out = bin(&["generate", "--config", path_arg(&config), "--out", path_arg(&tmp.path().join("c")), "--seed", "4"]);
    assert!(out.status.success());
    assert_ne!(
        fs::read(tmp.path().join("a").join(DATA_FILE)).unwrap(),
        fs::read(tmp.path().join("c").join(DATA_FILE)).unwrap()
    );
}

#[test]
fn too_many_splits_name_both_sizes() {
    let mut value = tiny_config(1, 1);
    value["data"]["splits"] = json!(400);
    let config = RunConfig::from_json(&value.to_string()).unwrap();
    let err = cmd_generate(&config, &TempDir::new().unwrap().path().join("x")).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("S = 400") && msg.contains("T = 300"), "{msg}");
    assert_eq!(err.exit_code(), 2);
}

fn read_report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn single_iteration_fit_emits_every_file() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.json", &tiny_config(1, 1));
    let out_dir = tmp.path().join("fit");
    let out = bin(&["fit", "--config", path_arg(&config), "--out", path_arg(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in [&checkpoint_name(0), "diagnostics.csv", "segmentation.csv", "report.json", "report.txt"] {
        assert!(out_dir.join(file).exists(), "{file}");
    }
    let diag = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 2);
    assert!(diag.starts_with("chain,iteration,joint_log_density,evidence_proxy,jitter_retries,occupancy_0"));
    let seg = fs::read_to_string(out_dir.join("segmentation.csv")).unwrap();
    assert_eq!(seg.lines().count(), 1 + 2 * 100);
    let report = read_report(&out_dir);
    assert!(report["summary"].as_array().unwrap().iter().all(|s| s["std"].is_null()));
}

#[test]
fn two_chains_report_spread() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.json", &tiny_config(2, 1));
    let out_dir = tmp.path().join("fit");
    let out = bin(&["fit", "--config", path_arg(&config), "--out", path_arg(&out_dir), "--chains", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(&out_dir);
    assert_eq!(report["chains"].as_array().unwrap().len(), 2);
    let summary = report["summary"].as_array().unwrap();
    assert!(summary.iter().any(|s| s["metric"] == "accuracy"));
    assert!(summary.iter().all(|s| s["std"].as_f64().is_some_and(|v| v >= 0.0)));
    let joints: Vec<f64> = report["chains"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["joint_log_density"].as_f64().unwrap())
        .collect();
    assert_ne!(joints[0], joints[1]);
    assert!(fs::read_to_string(out_dir.join("report.txt")).unwrap().contains("std"));
}

#[test]
fn resumed_fit_matches_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let value = tiny_config(6, 1);
    let config_path = write_config(tmp.path(), "c.json", &value);
    let whole = tmp.path().join("whole");
    assert!(bin(&["fit", "--config", path_arg(&config_path), "--out", path_arg(&whole)]).status.success());

    // An interrupted run: three sweeps done, checkpoint on disk.
    let config = RunConfig::from_json(&value.to_string()).unwrap();
    let data = build_dataset(&config).unwrap();
    let model = config.model.model_config(data.obs_dim());
    let (mut chain, priors) = Chain::start(
        &data.sequences,
        &model,
        &config.prior,
        &config.run.fit_options(),
        chain_seed(config.run.seed, 0),
    )
    .unwrap();
    for _ in 0..3 {
        chain.step(&data.sequences, &priors).unwrap();
    }
    let partial = tmp.path().join("partial");
    fs::create_dir_all(&partial).unwrap();
    fs::write(partial.join(checkpoint_name(0)), chain.to_json().unwrap()).unwrap();

    let resumed = tmp.path().join("resumed");
    let out = bin(&[
        "fit",
        "--config",
        path_arg(&config_path),
        "--out",
        path_arg(&resumed),
        "--resume",
        path_arg(&partial),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in [&checkpoint_name(0), "diagnostics.csv", "segmentation.csv", "report.json", "report.txt"] {
        assert_eq!(fs::read(whole.join(file)).unwrap(), fs::read(resumed.join(file)).unwrap(), "{file}");
    }

    let moved = bin(&[
        "fit",
        "--config",
        path_arg(&config_path),
        "--out",
        path_arg(&tmp.path().join("moved")),
        "--resume",
        path_arg(&partial),
        "--iters",
        "4",
    ]);
    assert_eq!(moved.status.code(), Some(2));
}

fn write_labels(path: &Path, column: &str, seqs: &[(&str, Vec<usize>)]) {
    let mut text = format!("seq,{column}\n");
    for (id, labels) in seqs {
        for l in labels {
            text += &format!("{id},{l}\n");
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn evaluate_scores_files() {
    let tmp = TempDir::new().unwrap();
    let truth = tmp.path().join("truth.csv");
    let mut t = vec![0; 10];
    t.extend(vec![1; 10]);
    write_labels(&truth, "label", &[("a", t.clone())]);

    let perfect = tmp.path().join("perfect.csv");
    write_labels(&perfect, "label", &[("a", t.clone())]);
    assert_eq!(cmd_evaluate(&perfect, &truth, None).unwrap().accuracy, 1.0);

    let renamed = tmp.path().join("renamed.csv");
    write_labels(&renamed, "s", &[("a", t.iter().map(|l| 7 - l).collect())]);
    assert_eq!(cmd_evaluate(&renamed, &truth, None).unwrap().accuracy, 1.0);

    // Confusion [[9, 1], [2, 8]].
    let mut p = vec![0; 9];
    p.push(1);
    p.extend([0, 0]);
    p.extend(vec![1; 8]);
    let noisy = tmp.path().join("noisy.csv");
    write_labels(&noisy, "s", &[("a", p)]);
    let score = cmd_evaluate(&noisy, &truth, None).unwrap();
    assert!((score.accuracy - 0.85).abs() < 1e-12);
    assert!((score.macro_f1 - 0.8496).abs() < 1e-3);
    assert!((score.weighted_f1 - 0.8497).abs() < 1e-3);

    let out = tmp.path().join("score.json");
    let run = bin(&["evaluate", "--pred", path_arg(&noisy), "--truth", path_arg(&truth), "--out", path_arg(&out)]);
    assert!(run.status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!((v["accuracy"].as_f64().unwrap() - 0.85).abs() < 1e-12);

    let short = tmp.path().join("short.csv");
    write_labels(&short, "s", &[("a", vec![0; 19])]);
    let err = cmd_evaluate(&short, &truth, None).unwrap_err();
    assert!(err.to_string().contains("sequence a"), "{err}");
    let run = bin(&["evaluate", "--pred", path_arg(&short), "--truth", path_arg(&truth)]);
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"model\": {}}").unwrap();
    let run = bin(&["fit", "--config", path_arg(&bad), "--out", path_arg(&tmp.path().join("o"))]);
    assert_eq!(run.status.code(), Some(2));

    let config = write_config(tmp.path(), "c.json", &tiny_config(1, 1));
    let missing = tmp.path().join("nope.csv");
    let run = bin(&[
        "fit",
        "--config",
        path_arg(&config),
        "--data",
        path_arg(&missing),
        "--out",
        path_arg(&tmp.path().join("o")),
    ]);
    assert_eq!(run.status.code(), Some(3));

    let numerical = Error::Numerical {
        sequence: 0,
        t: 3,
        message: "x".into(),
    };
    assert_eq!(numerical.exit_code(), 4);
}

#[test]
fn pipeline_is_reproducible_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.json", &tiny_config(3, 2));
    let mut reports = Vec::new();
    for run in ["one", "two"] {
        let dir = tmp.path().join(run);
        assert!(bin(&["generate", "--config", path_arg(&config), "--out", path_arg(&dir)]).status.success());
        let data = dir.join(DATA_FILE);
        let fit_dir = dir.join("fit");
        let out = bin(&[
            "fit",
            "--config",
            path_arg(&config),
            "--data",
            path_arg(&data),
            "--out",
            path_arg(&fit_dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let score = dir.join("score.json");
        let out = bin(&[
            "evaluate",
            "--pred",
            path_arg(&fit_dir.join("segmentation.csv")),
            "--truth",
            path_arg(&data),
            "--chain",
            "1",
            "--out",
            path_arg(&score),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push([
            fs::read(fit_dir.join("report.json")).unwrap(),
            fs::read(fit_dir.join("diagnostics.csv")).unwrap(),
            fs::read(score).unwrap(),
        ]);
    }
    assert_eq!(reports[0], reports[1]);
}
