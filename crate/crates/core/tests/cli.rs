use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optopulse"))
}

fn scenarios() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"))
}

fn only_dir(p: &Path) -> std::path::PathBuf {
    let mut dirs: Vec<_> = std::fs::read_dir(p).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs.pop().unwrap()
}

#[test]
fn simulate_free_evolution_writes_run_directory() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["simulate", "--scenario"])
        .arg(scenarios().join("free_evolution.json"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let run = only_dir(out.path());
    for f in ["scenario.json", "trajectory.csv", "summary.json", "manifest.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(run.join("trajectory.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| {
        let n: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        (n - 10.0).abs() < 1e-9
    }));
}

#[test]
fn schema_error_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"time_budget": 1, "params": {"kappa_nu": "fast"}}"#).unwrap();
    let out = bin()
        .args(["simulate", "--scenario"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.kappa_nu"));
}

#[test]
fn numeric_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let long = dir.path().join("long.json");
    std::fs::write(
        &long,
        r#"{"time_budget": 1, "control": {"kind": "segments", "segments": [[0.1, 0.0, 5.0]]}}"#,
    )
    .unwrap();
    let out = bin()
        .args(["simulate", "--scenario"])
        .arg(&long)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn compile_bch_emits_predicted_terms() {
    let out = bin()
        .args([
            "compile-bch",
            "--g",
            "100",
            "--t1",
            "0.001",
            "--tf",
            "0.1",
            "--emit-predicted",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let terms: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let bs = terms
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["operator"] == "p_c*p_m")
        .unwrap();
    assert!((bs["coefficient"].as_f64().unwrap() - 0.1).abs() < 1e-12);
}

#[test]
fn reproduce_feasibility_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["reproduce", "feasibility", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("g0_membrane,"));
    assert!(only_dir(dir.path()).join("feasibility.csv").is_file());
}

#[test]
fn optimize_is_reproducible_from_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let report = dir.path().join(name);
        let out = bin()
            .args(["optimize", "--scenario"])
            .arg(scenarios().join("fig2_template.json"))
            .args(["--budget", "200", "--seed", "3", "--out"])
            .arg(&report)
            .arg("--run-dir")
            .arg(dir.path().join("runs"))
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(report).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}
