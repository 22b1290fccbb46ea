use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dadp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dadp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, kind: &str) -> PathBuf {
    let path = dir.join(format!("{kind}.json"));
    let o = dadp(&["generate", kind, "--output", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generated_problems_validate() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["tiny", "three-unit", "independent", "multistock", "strugarek"] {
        let p = generate(dir.path(), kind);
        let o = dadp(&["validate", s(&p)]);
        assert!(o.status.success(), "{kind}: {}", stderr(&o));
        assert_eq!(stdout(&o).trim(), "OK");
    }
}

#[test]
fn solve_dp_writes_value_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate(dir.path(), "tiny");
    let out = dir.path().join("dp");
    let o = dadp(&["solve-dp", "--problem", s(&p), "--out", s(&out), "--sequential"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "value 4.5");
    let csv = std::fs::read_to_string(out.join("value_function.csv")).unwrap();
    assert!(csv.starts_with("t,x0,value"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve-dp");
    assert_eq!(manifest["config"]["sequential"], true);
    assert_eq!(manifest["results"]["initial_value"], 4.5);
}

#[test]
fn solve_dadp_with_perfect_memory_reaches_residual_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate(dir.path(), "tiny");
    let out = dir.path().join("dadp");
    let o = dadp(&[
        "solve-dadp", "--problem", s(&p), "--out", s(&out), "--exhaustive", "--step", "0.25", "--iters", "200",
        "--residual-tol", "1e-9", "--info", "perfect-memory", "--info-coords", "0", "--estimator", "binned",
        "--slack-unit", "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("(Residual)"), "{}", stdout(&o));
    for f in ["iterations.csv", "trajectories.csv", "manifest.json", "value_function_u0.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate(dir.path(), "tiny");
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, format!(r#"{{"problem": "{}", "scenarios": 7, "seed": 3}}"#, s(&p))).unwrap();
    let out = dir.path().join("sim");
    let o = dadp(&["simulate", "--config", s(&cfg), "--scenarios", "9", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("over 9 scenarios"), "{}", stdout(&o));
}

#[test]
fn oracle_prices_every_tree_path() {
    let dir = tempfile::tempdir().unwrap();
    let params = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/strugarek_params.json");
    let out = dir.path().join("oracle");
    let o = dadp(&["oracle", "--strugarek", s(&params), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "prices along 16 scenarios");
    let csv = std::fs::read_to_string(out.join("prices.csv")).unwrap();
    assert!(csv.starts_with("scenario_id,t,price"));
    assert_eq!(csv.lines().count(), 1 + 16 * 2);
}

#[test]
fn bad_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, r#"{"horizon": 3}"#).unwrap();
    assert_eq!(dadp(&["validate", s(&broken)]).status.code(), Some(2));
    assert_eq!(dadp(&["validate", s(&dir.path().join("missing.json"))]).status.code(), Some(2));

    let p = generate(dir.path(), "tiny");
    let cfg = dir.path().join("typo.json");
    std::fs::write(&cfg, r#"{"scenarioz": 3}"#).unwrap();
    let o = dadp(&["solve-dp", "--problem", s(&p), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenarioz"));
}

#[test]
fn infeasible_grid_names_the_module() {
    let dir = tempfile::tempdir().unwrap();
    let p = generate(dir.path(), "tiny");
    let grid = dir.path().join("grid.json");
    std::fs::write(
        &grid,
        r#"{"units": [{"state_nodes": [9], "control_nodes": [2]}, {"state_nodes": [], "control_nodes": [2]}]}"#,
    )
    .unwrap();
    let o = dadp(&["solve-dp", "--problem", s(&p), "--grid-file", s(&grid), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("module `dp`"), "{}", stderr(&o));
}
