use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ncde(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncde"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "gen.json", r#"{"n_paths": 4, "n_points": 9, "hurst": 0.3}"#);
    for out in ["a", "b"] {
        let o = ncde(&["generate", "--config", &cfg, "--seed", "5", "--out", out], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a/paths.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/paths.csv")).unwrap());
    assert!(a.starts_with(b"path_id,t,ch0,ch1,seed\n"));
    let manifest = fs::read_to_string(dir.path().join("a/dataset.json")).unwrap();
    assert!(manifest.contains("\"seed\": 5"));
}

#[test]
fn train_on_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncde(&["generate", "--out", "data", "--seed", "1"], dir.path());
    assert_eq!(code(&o), 0);
    let mut labels = String::from("path_id,y\n");
    for i in 0..100 {
        labels.push_str(&format!("{i},{}\n", (i % 2) as f64));
    }
    write(&dir.path().join("data"), "labels.csv", &labels);
    let job = write(
        &dir.path().join("data"),
        "train.json",
        r#"{"paths": "paths.csv", "labels": "labels.csv", "q": 1, "p": 3,
            "loss": "binary_cross_entropy_with_logit",
            "train": {"learning_rate": 0.01, "iterations": 5}}"#,
    );
    let o = ncde(&["train", "--config", &job, "--out", "model"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.json", "train_log.csv", "norms_normalized.csv"] {
        assert!(dir.path().join("model").join(f).is_file(), "missing {f}");
    }
}

#[test]
fn train_without_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ncde(&["train"], dir.path())), 2);
}

#[test]
fn bounds_reference_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncde(&["bounds", "--out", "b"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("b/bounds.csv")).unwrap();
    assert!(csv.lines().count() > 5);
    let bad = write(dir.path(), "bad.json", r#"{"spaec": {}}"#);
    assert_eq!(code(&ncde(&["bounds", "--config", &bad], dir.path())), 2);
}

#[test]
fn bounds_outside_their_domain_are_numeric_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "tiny.json",
        r#"{"space": {"b_a": 1e-9, "b_b": 1e-9, "b_u": 1e-9, "b_v": 1e-9, "b_phi": 1e-9,
                      "q": 1, "p": 2, "d": 1, "l_sigma": 1.0, "l_x": 1.0, "b_x": 1.0},
            "grid": {"mesh": 0.5, "n_intervals": 2}, "n": 1, "loss": "squared_error", "b_y": 1.0}"#,
    );
    assert_eq!(code(&ncde(&["bounds", "--config", &cfg], dir.path())), 3);
}

#[test]
fn verify_selected_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = ncde(&["verify", "--trials", "25", "--checks", "output,field,flow", "--out", "v"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("v/verify.csv")).unwrap();
    assert!(csv.starts_with("name,trials,violations,max_ratio,gating,seed\n"));
    assert!(csv.contains("flow_continuity_printed_form"));
    assert_eq!(code(&ncde(&["verify", "--checks", "bogus"], dir.path())), 2);
}

#[test]
fn experiment_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flow.json", r#"{"n_points": 20, "n_deltas": 3}"#);
    let o = ncde(&["exp", "flow", "--config", &cfg, "--seed", "3", "--out", "run"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = dir.path().join("run/manifest.json");
    let m = manifest.to_str().unwrap();
    assert_eq!(code(&ncde(&["rerun", "--manifest", m, "--out", "again"], dir.path())), 0);

    let text = fs::read_to_string(&manifest).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["artifacts"][0]["sha256"] = serde_json::Value::String("0".repeat(64));
    fs::write(&manifest, serde_json::to_string(&doc).unwrap()).unwrap();
    assert_eq!(code(&ncde(&["rerun", "--manifest", m, "--out", "third"], dir.path())), 4);
}

#[test]
fn experiment_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.json", r#"{"n_point": 20}"#);
    assert_eq!(code(&ncde(&["exp", "flow", "--config", &unknown], dir.path())), 2);
    let wrong_kind = write(dir.path(), "k.json", r#"{"kind": "flow_interpolation"}"#);
    assert_eq!(code(&ncde(&["exp", "teacher-student", "--config", &wrong_kind], dir.path())), 2);
    let invalid = write(dir.path(), "i.json", r#"{"n_deltas": 1}"#);
    assert_eq!(code(&ncde(&["exp", "flow", "--config", &invalid], dir.path())), 2);
}
