use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const UNIT: [&str; 12] = [
    "--alpha", "1", "--beta", "1", "--gamma", "1", "--lambda-b", "1", "--lambda-s", "1", "--seed", "42",
];

fn lobfluid(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobfluid"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn with_unit<'a>(head: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend(UNIT);
    v
}

#[test]
fn solve_prints_the_two_level_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = lobfluid(&with_unit(&["solve", "--n", "2", "--out-dir", "o"]), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("x* = (0.4285714286, 0.1428571429)"), "{stdout}");
    assert!(stdout.contains("y* = (0.1428571429, 0.4285714286)"), "{stdout}");
    for f in ["fixed_point_shooting.csv", "fixed_point_recursive.csv", "fixed_point_summary.csv", "manifest.json"] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }
}

#[test]
fn zero_levels_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lobfluid(&with_unit(&["solve", "--n", "0"]), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("`n`"), "{stderr}");
}

#[test]
fn missing_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lobfluid(&["solve", "--n", "2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("lambda_b"));
}

#[test]
fn event_budget_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = lobfluid(&with_unit(&["simulate", "--n", "1", "--max-events", "10"]), dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn solver_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = lobfluid(
        &with_unit(&["solve", "--n", "4", "--method", "recursive", "--max-iter", "1"]),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_flag_and_bad_file_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lobfluid(&["solve", "--bogus"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("bad.toml"), "[model]\nn = \"two\"\n").unwrap();
    assert_eq!(lobfluid(&["solve", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(lobfluid(&["solve", "--config", "absent.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "out_dir = \"from-file\"\nseed = 3\n[model]\nn = 1\nlambda_b = 2.0\nlambda_s = 1.0\nalpha = 1.0\nbeta = 1.0\ngamma = 1.0\n[solve]\nmethod = \"shooting\"\n",
    )
    .unwrap();
    let out = lobfluid(&["solve", "--config", "run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("x* = (0.8333333333)"), "{stdout}");
    assert!(!stdout.contains("recursive"));

    let out = lobfluid(&["solve", "--config", "run.toml", "--lambda-b", "1", "--out-dir", "flag"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("x* = (0.3333333333)"));
    let manifest = fs::read_to_string(dir.path().join("flag/manifest.json")).unwrap();
    assert!(manifest.contains("\"lambda_b\": 1.0"), "{manifest}");
    assert!(manifest.contains("\"seed\": 3"));
    assert!(dir.path().join("from-file/manifest.json").exists());
}

#[test]
fn example_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/example.toml");
    let out = lobfluid(
        &["sweep", "--config", example.to_str().unwrap(), "--out-dir", "sw"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("lambda_s,ell,regime,trade_volume,residual"));
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn outputs_stay_inside_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = lobfluid(
        &with_unit(&["integrate", "--n", "2", "--tau-max", "1", "--out-dir", "only-here"]),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec!["only-here"]);
}

#[test]
fn trajectory_header_and_precision() {
    let dir = tempfile::tempdir().unwrap();
    let out = lobfluid(
        &with_unit(&["simulate", "--n", "2", "--scale", "50", "--tau-max", "1", "--out-dir", "o"]),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("o/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("tau,x_1,x_2,y_1,y_2"));
    let row = lines.nth(1).unwrap();
    let tau = row.split(',').next().unwrap();
    assert_eq!(tau, "1.0000000000000000e-2");
}
