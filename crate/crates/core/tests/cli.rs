use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
  "seed": 5,
  "data": {"image_size": [16, 16], "synthetic": {"n_normal": 60, "n_defect": 40}},
  "pretrain": {"epochs": 2, "per_class": 20},
  "train": {"epochs": 4, "lr": 0.05},
  "consistency": {"window": 2},
  "ensemble": {"n": 2},
  "backbones": [
    {"name": "a", "channels": [4], "pool": [true], "hidden": null},
    {"name": "b", "channels": [3, 4], "pool": [true, true], "hidden": null}
  ]
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ensemblefit"));
    c.env_remove("ENSEMBLEFIT_OUT");
    c
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    std::fs::write(&path, TINY).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(output: &Output) {
    assert!(
        output.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("exp3"));
}

#[test]
fn misspelled_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"trian": {"epochs": 2}}"#).unwrap();
    let out = run(&["synth"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trian"));
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, "{\n  \"seed\": 1,\n  \"train\": {\n}").unwrap();
    let out = run(&["synth"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn missing_model_is_a_stage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = run(&["eval", "--model", "/nonexistent/m.json"], &cfg, &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage load"));
}

#[test]
fn synth_is_deterministic_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run(&["synth"], &cfg, &a));
    ok(&run(&["synth"], &cfg, &b));
    let manifest = std::fs::read(a.join("manifest.csv")).unwrap();
    assert_eq!(manifest, std::fs::read(b.join("manifest.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&manifest).lines().count(), 101);

    let resolved = json(a.join("config.resolved.json"));
    assert_eq!(resolved["seed"], 5);
    assert_eq!(resolved["ensemble"]["mode"], "min_loss");
    assert_eq!(resolved["consistency"]["epsilon"], 0.001);
    assert!(a.join("run.log").exists());
}

#[test]
fn seed_flag_and_override_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("o");
    let status = bin()
        .args([
            "synth",
            "--seed",
            "9",
            "--override",
            r#"{"train": {"epochs": 7}}"#,
            "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let resolved = json(out.join("config.resolved.json"));
    assert_eq!(resolved["seed"], 9);
    assert_eq!(resolved["train"]["epochs"], 7);
    assert_eq!(resolved["train"]["lr"], 0.05);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("from-env");
    let status = bin()
        .arg("synth")
        .arg("--config")
        .arg(&cfg)
        .env("ENSEMBLEFIT_OUT", &out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("manifest.csv").exists());
}

#[test]
fn stage_by_stage_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let p = dir.path().join("pre");
    ok(&run(&["pretrain", "--member", "1"], &cfg, &p));
    assert!(json(p.join("pretrain.json"))["source_task_id"].is_string());

    let f = dir.path().join("ft");
    let pretrained = p.join("pretrained.model.json");
    ok(&run(
        &[
            "finetune",
            "--member",
            "1",
            "--pretrained",
            pretrained.to_str().unwrap(),
        ],
        &cfg,
        &f,
    ));
    for file in ["model.json", "history.csv", "report.json", "consistency.json"] {
        assert!(f.join(file).exists(), "{file}");
    }
    let report = json(f.join("report.json"));
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let e = dir.path().join("ens");
    let model = f.join("model.json");
    ok(&run(
        &[
            "ensemble",
            "--model",
            model.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
        ],
        &cfg,
        &e,
    ));
    let manifest = json(e.join("ensemble.json"));
    assert_eq!(manifest["members"].as_array().unwrap().len(), 2);

    let ev = dir.path().join("eval");
    ok(&run(
        &["eval", "--model", e.join("ensemble.json").to_str().unwrap()],
        &cfg,
        &ev,
    ));
    assert!(ev.join("confidence.csv").exists());
    assert_eq!(json(ev.join("report.json"))["accuracy"], report["accuracy"]);

    let m = dir.path().join("mon");
    ok(&run(
        &["monitor", "--history", f.join("history.csv").to_str().unwrap()],
        &cfg,
        &m,
    ));
    assert!(json(m.join("consistency.json"))["empirical_epsilon"].is_number());

    let r = dir.path().join("rep");
    let history = f.join("history.csv");
    let args = [
        "report",
        "--model",
        model.to_str().unwrap(),
        "--history",
        history.to_str().unwrap(),
    ];
    ok(&run(&args, &cfg, &r));
    for file in [
        "curves.csv",
        "heatmap_normal.pgm",
        "heatmap_defect.pgm",
        "features.json",
    ] {
        assert!(r.join(file).exists(), "{file}");
    }
}

#[test]
fn exp3_resumed_from_exp2_matches_a_direct_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let two = dir.path().join("exp2");
    ok(&run(&["exp2", "--override", r#"{"train": {"epochs": 3}}"#], &cfg, &two));
    let summary = json(two.join("summary.json"));
    assert_eq!(summary.as_array().unwrap().len(), 2);

    let resumed = dir.path().join("resumed");
    ok(&run(&["exp3", "--resume-from", two.to_str().unwrap()], &cfg, &resumed));
    let direct = dir.path().join("direct");
    ok(&run(&["exp3"], &cfg, &direct));
    for file in ["report.json", "history.csv", "ensemble.json"] {
        assert_eq!(
            std::fs::read(resumed.join(file)).unwrap(),
            std::fs::read(direct.join(file)).unwrap(),
            "{file}"
        );
    }
    assert_eq!(json(direct.join("members.json")).as_array().unwrap().len(), 2);
}

#[test]
fn exp1_trains_from_scratch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("exp1");
    ok(&run(&["exp1", "--override", r#"{"train": {"epochs": 3}}"#], &cfg, &out));
    let resolved = json(out.join("config.resolved.json"));
    assert_eq!(resolved["augment"]["enabled"], true);
    assert!(out.join("report.json").exists());
}
