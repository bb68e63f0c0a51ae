use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tempdens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempdens"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).expect("summary json");
    assert_eq!(summary["status"], "ok");
    summary["outputs"].clone()
}

fn fixture(dir: &Path) -> String {
    let root = dir.join("data");
    let root_s = root.to_str().unwrap().to_string();
    ok(tempdens(&[
        "synth",
        "--out",
        &root_s,
        "--subjects",
        "1",
        "--duration-s",
        "150",
        "--seed",
        "5",
    ]));
    root_s
}

fn artifact(path: &Path) -> Value {
    let env: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert!(env["provenance"]["content_sha256"].as_str().unwrap().len() == 64);
    assert!(env["provenance"]["config"].is_object());
    env["artifact"].clone()
}

#[test]
fn full_pipeline_on_synthetic_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let root = fixture(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let common = ["--data-root", root.as_str(), "--out", out_s, "--seed", "3"];
    let run = |cmd: &str, extra: &[&str]| ok(tempdens(&[&[cmd][..], &common[..], extra].concat()));

    run("train", &[]);
    assert!(out.join("models/synthetic/S01.json").exists());
    run("calibrate", &[]);
    let pack = artifact(&out.join("packs/synthetic/S01.json"));
    assert!(pack["tau"].as_f64().unwrap().is_finite());

    let replayed = run("replay", &[]);
    let jsonl = out.join(replayed[0].as_str().unwrap());
    let first = fs::read(&jsonl).unwrap();
    assert!(out
        .join(format!("{}.provenance.json", replayed[0].as_str().unwrap()))
        .exists());
    for line in String::from_utf8(first.clone()).unwrap().lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert!(["no_action", "class", "reject"].contains(&rec["decision"]["kind"].as_str().unwrap()));
    }
    fs::remove_dir_all(out.join("models")).unwrap();
    fs::remove_dir_all(out.join("packs")).unwrap();
    run("replay", &[]);
    assert_eq!(fs::read(&jsonl).unwrap(), first, "replay is deterministic");

    run("eval", &["--no-sweep"]);
    let report = artifact(&out.join("report.json"));
    let subject = &report[0]["subjects"][0];
    assert!(subject["auroc"]["tempdens"].as_f64().is_some());
    let table = fs::read_to_string(out.join("auroc_synthetic.csv")).unwrap();
    assert!(table.starts_with("subject,tempdens,msp"));
    assert!(table.lines().last().unwrap().starts_with("average,"));
    assert!(out.join("ablation_synthetic.csv").exists());
    assert!(out.join("coverage_synthetic.csv").exists());

    run("ablate", &["--metrics", "second-order,cosine"]);
    let ablation = artifact(&out.join("ablation.json"));
    assert_eq!(ablation[0]["ablation"]["rows"].as_array().unwrap().len(), 7);
    assert_eq!(ablation[0]["metric_sweep"]["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn energy_only_weights_reproduce_the_energy_column() {
    let dir = tempfile::tempdir().unwrap();
    let root = fixture(dir.path());
    let out = dir.path().join("out");
    ok(tempdens(&[
        "eval",
        "--data-root",
        &root,
        "--out",
        out.to_str().unwrap(),
        "--fusion-weights",
        "1,0,0",
        "--methods",
        "tempdens,ebo",
        "--no-sweep",
    ]));
    let report = artifact(&out.join("report.json"));
    for s in report[0]["subjects"].as_array().unwrap() {
        for key in ["auroc", "auroc_all_task"] {
            let t = s[key]["tempdens"].as_f64().unwrap();
            let e = s[key]["ebo"].as_f64().unwrap();
            assert!((t - e).abs() < 1e-12, "{key}: tempdens {t} vs ebo {e}");
        }
    }
}

#[test]
fn missing_data_root_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = tempdens(&[
        "eval",
        "--data-root",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).expect("error json on stderr");
    assert_eq!(err["status"], "error");
    assert_eq!(err["error"]["kind"], "io");
}

#[test]
fn invalid_config_is_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"gate_threshold": 2.0}"#).unwrap();
    let out = tempdens(&[
        "train",
        "--data-root",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_parameter");
    assert!(!dir.path().join("o").exists());
}
