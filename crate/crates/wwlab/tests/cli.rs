use std::path::Path;
use std::process::{Command, Output};

fn wwlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wwlab"))
        .current_dir(dir)
        .env_remove("WWLAB_BUDGET")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn ww_of_a_constant_on_one_point_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = wwlab(
        dir.path(),
        &["run", "--system", "identity:1", "--op", "ww", "--function", "table:1", "--N", "4,8", "--out", "res"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/series.csv")).unwrap();
    let lowers: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(lowers, vec![1.0, 1.0]);
}

#[test]
fn vdc_check_is_cached_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--check", "vdc", "--H", "1", "--N", "4", "--function", "table:1,1,1,1", "--seed", "1"];
    let first = wwlab(dir.path(), &args);
    assert_eq!(first.status.code(), Some(0));
    assert!(stdout(&first).contains("9.375000e-2"));
    assert!(stdout(&first).contains("vdc: PASS"));
    let second = wwlab(dir.path(), &args);
    assert_eq!(second.status.code(), Some(0));
    assert!(stdout(&second).contains("(cached)"));
}

#[test]
fn configuration_errors_and_budget_refusals_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = wwlab(dir.path(), &["run", "--system", "cyclic:31", "--op", "ww", "--N", "8,4"]);
    assert_eq!(bad.status.code(), Some(2));

    let refused = wwlab(dir.path(), &["run", "--system", "cyclic:31", "--op", "ww", "--N", "64", "--budget", "1"]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("exceeds budget"));

    let empty = wwlab(dir.path(), &["report", "--format", "csv"]);
    assert_eq!(empty.status.code(), Some(2));
}

#[test]
fn failed_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // For the alternating character c_N keeps growing, so no stable constant exists.
    let out = wwlab(
        dir.path(),
        &[
            "run", "--system", "cyclic:520", "--check", "cond_exp", "--partition-modulus", "2",
            "--function", "char:260", "--N", "64,128,256,512",
        ],
    );
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("cond_exp: FAIL"));
}

#[test]
fn boxsweep_reports_no_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let out = wwlab(dir.path(), &["boxsweep", "--max-dim", "2", "--max-side", "3", "--max-q", "4"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("0 exact/brute mismatches"));
}
