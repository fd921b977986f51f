use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skyreel_core::{Mission, PlanDoc};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name).to_string_lossy().into_owned()
}

fn skyreel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skyreel")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = skyreel(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn plan_writes_json_and_gantt() {
    let dir = tempfile::tempdir().unwrap();
    let (json, gantt) = (path(&dir, "plan.json"), path(&dir, "plan.csv"));
    let out =
        ok(&["plan", &fixture("field1.json"), "--out", json.to_str().unwrap(), "--gantt", gantt.to_str().unwrap()]);
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("CR = 1.0000"), "{summary}");
    assert!(summary.contains("median of 5"));

    let doc = PlanDoc::from_json(&fs::read(&json).unwrap()).unwrap();
    assert_eq!(doc.plans.len(), 3);
    let (ft, cr) = doc.recompute_metrics();
    assert!((ft - doc.total_filming_time).abs() < 1e-9);
    assert_eq!(cr, doc.coverage_ratio);

    let csv = fs::read_to_string(&gantt).unwrap();
    assert_eq!(csv.lines().next(), Some("uav_id,kind,t_start,t_end,task_id"));
    assert_eq!(csv.lines().count(), 1 + doc.plans.iter().map(|p| p.segments.len()).sum::<usize>());
}

#[test]
fn quiet_plan_prints_only_json() {
    let out = ok(&["plan", &fixture("field2.json"), "--relay-gap", "8", "--quiet"]);
    assert!(out.stderr.is_empty());
    let doc = PlanDoc::from_json(&out.stdout).unwrap();
    assert_eq!(doc.relay_gap, 8.0);
    assert!((doc.coverage_ratio - 40.0 / 48.0).abs() < 1e-9);
}

#[test]
fn schema_flags_print_headers() {
    let out = ok(&["plan", "--schema", "unused.json"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "uav_id,kind,t_start,t_end,task_id");
    let out = ok(&["experiment", "coverage", "--schema"]);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("row,seed,n,x,k"));
    let out = ok(&["experiment", "optimal", "--schema"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("greedy_cr,optimal_cr,ratio"));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = skyreel(&["plan", "missing.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let bad = path(&dir, "bad.json");
    fs::write(&bad, r#"{"tasks": [], "base_stations": [], "uavs": [{"id": "u"}]}"#).unwrap();
    let out = skyreel(&["validate", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("uavs[0]"));

    let out = skyreel(&["plan", &fixture("field2.json"), "--relay-gap", "-1"]);
    assert!(!out.status.success());
    let out = skyreel(&["plan", &fixture("field2.json"), "--alpha", "0"]);
    assert!(!out.status.success());
}

#[test]
fn validate_reports_graph_size() {
    let out = ok(&["validate", &fixture("field1.json")]);
    let text = String::from_utf8(out.stderr).unwrap();
    assert!(text.starts_with("ok: 5 tasks, 1 stations, 3 UAVs"), "{text}");
}

#[test]
fn replan_at_epoch_matches_plan() {
    let dir = tempfile::tempdir().unwrap();
    let state = path(&dir, "state.json");
    fs::write(
        &state,
        r#"{"clock": 0, "uavs": [
            {"uav_id": "uav1", "x": 0, "y": 0, "z": 0, "battery": 62},
            {"uav_id": "uav2", "x": 0, "y": 0, "z": 0, "battery": 62}]}"#,
    )
    .unwrap();
    let plan = PlanDoc::from_json(&ok(&["plan", &fixture("field2.json"), "--quiet"]).stdout).unwrap();
    let mut re =
        PlanDoc::from_json(&ok(&["replan", &fixture("field2.json"), state.to_str().unwrap(), "--quiet"]).stdout)
            .unwrap();
    assert_eq!(re.replanned_from, Some(0.0));
    re.replanned_from = None;
    assert_eq!(re, plan);
}

#[test]
fn replan_without_a_uav_and_with_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let state = path(&dir, "state.json");
    fs::write(&state, r#"{"clock": 0, "uavs": [{"uav_id": "uav1", "x": 0, "y": 0, "z": 0, "battery": 62}]}"#).unwrap();
    let doc = PlanDoc::from_json(&ok(&["replan", &fixture("field2.json"), state.to_str().unwrap(), "--quiet"]).stdout)
        .unwrap();
    assert_eq!(doc.plans.len(), 1);
    assert!(doc.coverage_ratio < 1.0);

    fs::write(
        &state,
        r#"{"clock": 70, "uavs": [{"uav_id": "uav1", "x": 0, "y": 0, "z": 0, "battery": 62}],
            "covered": [{"task_id": "chase", "start": 20, "end": 68}]}"#,
    )
    .unwrap();
    let doc = PlanDoc::from_json(&ok(&["replan", &fixture("field2.json"), state.to_str().unwrap(), "--quiet"]).stdout)
        .unwrap();
    assert_eq!(doc.coverage_ratio, 1.0);
    assert!(doc.plans.iter().all(|p| p.segments.is_empty()));
    assert_eq!(doc.recompute_metrics().1, 1.0);

    fs::write(&state, r#"{"clock": 0, "uavs": [{"uav_id": "ghost", "x": 0, "y": 0, "z": 0, "battery": 1}]}"#).unwrap();
    assert!(!skyreel(&["replan", &fixture("field2.json"), state.to_str().unwrap()]).status.success());
}

#[test]
fn generate_writes_mission_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "mix.json");
    ok(&["generate", "mix", "--n", "5", "--x", "2", "--uavs", "2", "--seed", "4", "--out", out.to_str().unwrap()]);
    let m = Mission::load(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(m.tasks.len(), 5);
    assert_eq!(m.uavs.len(), 2);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(path(&dir, "mix.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["family"], "mix");
    assert_eq!(manifest["params"]["seed"], 4);

    let again = ok(&["generate", "mix", "--n", "5", "--x", "2", "--uavs", "2", "--seed", "4"]).stdout;
    assert_eq!(again, fs::read(&out).unwrap());
    ok(&["plan", out.to_str().unwrap(), "--quiet"]);
}

#[test]
fn coverage_csv_has_mean_rows() {
    let out = ok(&["experiment", "coverage", "--n", "6", "--x", "2", "--repetitions", "2", "--k-max", "3", "--quiet"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 3 + 3);
    assert_eq!(lines.iter().filter(|l| l.starts_with("mean,")).count(), 3);
}

#[test]
fn graph_dump_lists_vertices() {
    let text = String::from_utf8(ok(&["graph-dump", &fixture("field2.json"), "--alpha", "10"]).stdout).unwrap();
    assert!(text.starts_with("# alpha=10"));
    assert!(text.contains("task:chase"));
}
