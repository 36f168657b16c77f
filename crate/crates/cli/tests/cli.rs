use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gridsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn three_houses_text() -> String {
    fs::read_to_string(scenario("three_houses.toml")).unwrap()
}

#[test]
fn shipped_scenarios_validate() {
    for name in ["three_houses.toml", "tracking.toml", "daily.toml"] {
        let o = gridsim(&["validate", scenario(name).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        assert!(stdout(&o).starts_with("ok: "));
    }
}

#[test]
fn negative_weight_is_one_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = three_houses_text();
    let bad = text.replacen("w = 20", "w = -20", 1);
    assert_ne!(bad, text, "fixture changed shape");
    fs::write(&path, bad).unwrap();
    let o = gridsim(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1, "{out}");
    assert!(out.contains("Device"), "{out}");
}

#[test]
fn syntax_error_reports_a_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    fs::write(&path, "[config\nseed = 1\n").unwrap();
    let o = gridsim(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("broken.toml:1:"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_an_io_error() {
    let o = gridsim(&["validate", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gridsim(&[
        "run",
        scenario("three_houses.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["metrics.csv", "flows.csv", "summary.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(
        metrics.lines().nth(1).unwrap().starts_with("0,,29,"),
        "{metrics}"
    );

    let o = gridsim(&["report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("scenario:"));
}

#[test]
fn report_rejects_an_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridsim(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("manifest.json"), "{}", stderr(&o));
}

#[test]
fn report_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gridsim(&[
        "run",
        scenario("three_houses.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    fs::write(out.join("summary.csv"), "tampered\n").unwrap();
    let o = gridsim(&["report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn same_seed_same_checksums_across_modes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tracking.toml");
    let o = gridsim(&["example", "tracking", "--seed", "3", "--iterations", "40"]);
    assert!(o.status.success());
    fs::write(&path, &o.stdout).unwrap();
    let mut manifests = Vec::new();
    for (name, extra) in [("a", None), ("b", None), ("c", Some("--sequential"))] {
        let out = dir.path().join(name);
        let mut args = vec![
            "run",
            path.to_str().unwrap(),
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend(extra);
        let o = gridsim(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        manifests.push(m["checksums"].clone());
    }
    assert_eq!(manifests[0], manifests[1]);
    assert_eq!(manifests[0], manifests[2]);
}

#[test]
fn run_options_are_checked() {
    let path = scenario("three_houses.toml");
    let o = gridsim(&["run", path.to_str().unwrap(), "--epsilon", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("between 0 and 1"));
}

#[test]
fn examples_print_valid_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["three-houses", "tracking", "daily"] {
        let o = gridsim(&["example", name, "--iterations", "24", "--days", "1"]);
        assert!(o.status.success());
        let path = dir.path().join(format!("{name}.toml"));
        fs::write(&path, &o.stdout).unwrap();
        let o = gridsim(&["validate", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
    }
}
