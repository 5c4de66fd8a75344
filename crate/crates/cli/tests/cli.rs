use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
env = "corridor-walk"
seed = 3
runs = 2

[learner]
hidden = [8, 8]
total_steps = 600
n_checkpoints = 2
start_steps = 100
batch_size = 16
buffer_capacity = 1000

[analysis]
n = 16
n_boot = 50
"#;

fn retland(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retland")).args(args).output().expect("spawn retland")
}

fn stderr_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no record in {text}"));
    serde_json::from_str(line).unwrap()
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_2_with_a_record() {
    let out = retland(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_record(&out)["error"]["kind"], "usage");
    let out = retland(&["purd", "--n", "many"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_checkpoints_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("none");
    fs::create_dir(&empty).unwrap();
    let out = retland(&["purd", "--out", dir.path().to_str().unwrap(), "--ckpt", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let rec = stderr_record(&out);
    assert_eq!(rec["error"]["command"], "purd");
    assert_eq!(rec["error"]["kind"], "empty");
    assert!(rec["error"]["message"].as_str().unwrap().len() > 0);
}

#[test]
fn bad_config_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = retland(&["purd", "--config", &cfg, "--alpha", "1.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_record(&out)["error"]["kind"], "invalid_config");
    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "seed = \"three\"\n").unwrap();
    let out = retland(&["train", "--config", broken.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_record(&out)["error"]["kind"], "config_parse");
}

#[test]
fn train_then_purd_writes_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let root = dir.path().join("out");
    let root_s = root.to_str().unwrap();

    let out = retland(&["train", "--config", &cfg, "--out", root_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["command"], "train");
    assert!(root.join("train/config.toml").is_file());
    assert!(root.join("train/training.csv").is_file());

    let out = retland(&["purd", "--config", &cfg, "--out", root_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["command"], "purd");
    assert!(summary["files"].as_u64().unwrap() > 0);
    let scatter = fs::read_to_string(root.join("purd/scatter.csv")).unwrap();
    assert!(scatter.starts_with("checkpoint_id,step,n,mean"));
    // two runs × two checkpoints
    assert_eq!(scatter.lines().count(), 5);
}
