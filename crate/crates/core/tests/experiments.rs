use std::fs;
use std::path::Path;

use ncde::experiments::*;
use ncde::Error;

fn tiny_teacher_student() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{"kind": "teacher_student", "seed": 4, "n": 10, "n_points": 12, "iterations": 30,
            "repeats": 3, "snapshot_iters": [0, 30], "latent_paths": 2}"#,
    )
    .unwrap()
}

fn tiny_rough_smooth(k_points: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"kind": "rough_smooth", "seed": 2, "n_points": 20, "n_train": 6, "n_test": 6,
            "k_points": {k_points}, "runs": 5, "iterations": 10, "single_model": null}}"#
    ))
    .unwrap()
}

fn tiny_flow(identical: bool) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"kind": "flow_interpolation", "seed": 6, "n_points": 25, "identical_endpoints": {identical}}}"#
    ))
    .unwrap()
}

fn tiny_sweep() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{"kind": "discretization_sweep", "seed": 1, "n_paths": 3, "fine_intervals": 256,
            "ladder": [4, 16, 64], "m_theta_ladder": [100, 1000]}"#,
    )
    .unwrap()
}

fn read(dir: &Path, rel: &str) -> String {
    fs::read_to_string(dir.join(rel)).unwrap()
}

fn assert_rerun_identical(cfg: &ExperimentConfig) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let m = run_experiment(cfg, a.path()).unwrap();
    assert!(!m.artifacts.is_empty());
    assert_eq!(m.config.seed(), cfg.seed());
    for art in &m.artifacts {
        let bytes = fs::read(a.path().join(&art.file)).unwrap();
        assert_eq!(sha256_hex(&bytes), art.sha256, "{}", art.file);
        if art.file.ends_with(".csv") {
            let text = String::from_utf8(bytes).unwrap();
            let header = text.lines().next().unwrap();
            assert!(header.split(',').any(|c| c == "seed"), "{} lacks a seed column", art.file);
        }
    }
    let report = rerun(&a.path().join(MANIFEST_FILE), b.path()).unwrap();
    assert!(report.identical(), "mismatched: {:?}", report.mismatched);
}

#[test]
fn teacher_student_reruns_identically() {
    assert_rerun_identical(&tiny_teacher_student());
}

#[test]
fn rough_smooth_reruns_identically() {
    assert_rerun_identical(&tiny_rough_smooth(5));
}

#[test]
fn flow_reruns_identically() {
    assert_rerun_identical(&tiny_flow(false));
}

#[test]
fn sweep_reruns_identically() {
    assert_rerun_identical(&tiny_sweep());
}

#[test]
fn unknown_keys_and_kinds_are_config_errors() {
    for text in [
        r#"{"kind": "teacher_student", "learning_rat": 0.1}"#,
        r#"{"kind": "nonsense"}"#,
        r#"{"seed": 1}"#,
        r#"{"kind": "flow_interpolation", "n_deltas": 1}"#,
    ] {
        assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))), "{text}");
    }
}

#[test]
fn defaults_follow_the_reference_settings() {
    let ExperimentConfig::TeacherStudent(ts) = ExperimentConfig::from_json(r#"{"kind": "teacher_student"}"#).unwrap()
    else {
        panic!()
    };
    assert_eq!((ts.n, ts.channels, ts.p, ts.q, ts.iterations, ts.repeats), (100, 4, 3, 1, 2000, 25));
    assert_eq!(ts.hurst, 0.7);
    assert_eq!(ts.learning_rate, 5e-3);
    let ExperimentConfig::RoughSmooth(rs) = ExperimentConfig::from_json(r#"{"kind": "rough_smooth"}"#).unwrap() else {
        panic!()
    };
    assert_eq!((rs.runs, rs.k_points, rs.iterations, rs.n_train, rs.n_test), (50, 5, 600, 50, 50));
    assert_eq!(rs.hurst, [0.4, 0.6]);
}

#[test]
fn full_grid_downsampling_reports_not_applicable() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&tiny_rough_smooth(20), dir.path()).unwrap();
    let summary: RoughSmoothSummary = serde_json::from_value(m.summary).unwrap();
    let mesh = summary.correlations.iter().find(|c| c.variable == "mesh").unwrap();
    assert_eq!(mesh.rho, None);
    let csv = read(dir.path(), "correlations.csv");
    let mesh_row = csv.lines().find(|l| l.starts_with("mesh,")).unwrap();
    assert!(mesh_row.contains("NA"), "{mesh_row}");
}

#[test]
fn flow_endpoints_and_continuity() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&tiny_flow(false), dir.path()).unwrap();
    let summary: FlowSummary = serde_json::from_value(m.summary).unwrap();
    assert_eq!(summary.families.len(), 3);
    for f in &summary.families {
        assert_eq!(f.violations, 0, "{:?}", f.family);
        assert!(f.max_adjacent_gap > 0.0);
    }
    let gaps = read(dir.path(), "endpoint_gaps.csv");
    for line in gaps.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1].parse::<f64>().unwrap() == 0.0 {
            assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn identical_endpoints_give_identical_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&tiny_flow(true), dir.path()).unwrap();
    let summary: FlowSummary = serde_json::from_value(m.summary).unwrap();
    for f in &summary.families {
        assert_eq!(f.max_adjacent_gap, 0.0, "{:?}", f.family);
    }
}

#[test]
fn sweep_bound_is_linear_and_dominates() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&tiny_sweep(), dir.path()).unwrap();
    let summary: DiscSweepSummary = serde_json::from_value(m.summary).unwrap();
    let rows = &summary.table.rows;
    assert_eq!(rows.len(), 3);
    assert_eq!(summary.table.violations(), 0);
    for w in rows.windows(2) {
        assert!(w[1].mesh < w[0].mesh);
        let r = (w[1].bound / w[1].mesh) / (w[0].bound / w[0].mesh);
        assert!((r - 1.0).abs() < 1e-12);
    }
}

#[test]
fn teacher_student_emits_curves() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&tiny_teacher_student(), dir.path()).unwrap();
    let files: Vec<&str> = m.artifacts.iter().map(|a| a.file.as_str()).collect();
    for want in ["runs/run_000/train_log.csv", "runs/run_000/norms_normalized.csv", "final_norms.csv", "latent.csv"] {
        assert!(files.contains(&want), "missing {want}");
    }
    let summary: TeacherStudentSummary = serde_json::from_value(m.summary).unwrap();
    assert_eq!(summary.runs.len(), 3);
    assert!(summary.runs.iter().all(|r| r.final_loss < r.initial_loss));
}

#[test]
fn spearman_known_values() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(spearman(&x, &[5.0, 6.0, 7.0, 8.0, 7.5]), Some(0.9));
    assert_eq!(spearman(&x, &[1.0; 5]), None);
    assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
}
