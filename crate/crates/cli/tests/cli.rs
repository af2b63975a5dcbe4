use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn smw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("output line")).expect("json output")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn line_files(dir: &Path) -> Vec<String> {
    vec![
        write(dir, "a.csv", "0\n1\n"),
        write(dir, "b.csv", "2\n3\n"),
        write(dir, "c.csv", "4\n5\n"),
    ]
}

#[test]
fn three_lines_distance() {
    let dir = tempfile::tempdir().unwrap();
    let files = line_files(dir.path());
    let out = smw(&[
        "dist",
        "--measures",
        &files[0],
        &files[1],
        &files[2],
        "--projections",
        "1",
        "--seed",
        "0",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["estimate"].as_f64().unwrap(), 2.6666666666666665);
    assert_eq!(v["p"], 3);
    assert_eq!(v["n"], 2);
    assert_eq!(v["d"], 1);
    assert_eq!(v["k"], 1);
    assert_eq!(v["seed"], 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("2.6666666666666665"));
}

#[test]
fn identical_files_are_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "0.5,1\n-2,3\n7,0\n");
    let out = smw(&["dist", "--measures", &a, &a, &a, "--projections", "17"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["estimate"].as_f64().unwrap(), 0.0);
    let out = smw(&["dist", "--measures", &a, &a, "--pairwise"]);
    assert_eq!(json(&out)["estimate"].as_f64().unwrap(), 0.0);
}

#[test]
fn weights_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let files = line_files(dir.path());
    let ok = smw(&[
        "dist",
        "--measures",
        &files[0],
        &files[1],
        &files[2],
        "--weights",
        "0.5,0.3,0.2",
    ]);
    assert!(ok.status.success());
    let bad = smw(&[
        "dist",
        "--measures",
        &files[0],
        &files[1],
        "--weights",
        "0.5,0.6",
    ]);
    assert_eq!(bad.status.code(), Some(2));
    let missing = smw(&["dist", "--measures", &files[0], "/nonexistent/x.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    let ragged = write(dir.path(), "r.csv", "1,2\n3\n");
    let out = smw(&["dist", "--measures", &files[0], &ragged]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(smw(&["dist", "--no-such-flag"]).status.code(), Some(2));
    let three = smw(&[
        "dist",
        "--measures",
        &files[0],
        &files[1],
        &files[2],
        "--pairwise",
    ]);
    assert_eq!(three.status.code(), Some(2));
}

#[test]
fn singleton_barycenter_is_the_mean() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "1,2\n");
    let b = write(dir.path(), "b.csv", "3,-1\n");
    let c = write(dir.path(), "c.csv", "-1,5\n");
    let out_dir = dir.path().join("out");
    let out = smw(&[
        "bary",
        "--measures",
        &a,
        &b,
        &c,
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(out_dir.join("final_0.csv")).unwrap();
    let atom: Vec<f64> = text.trim().split(',').map(|s| s.parse().unwrap()).collect();
    assert!(
        (atom[0] - 1.0).abs() < 1e-3 && (atom[1] - 2.0).abs() < 1e-3,
        "{atom:?}"
    );
    let trace = fs::read_to_string(out_dir.join("trace.jsonl")).unwrap();
    let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["iteration"], 0);
}

fn gaussians(dir: &Path) -> Vec<String> {
    let out = smw(&[
        "gen",
        "gaussians",
        "--p",
        "3",
        "--n",
        "30",
        "--d",
        "2",
        "--seed",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    json(&out)["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_owned())
        .collect()
}

#[test]
fn decoupled_mtde_fits_each_task() {
    let dir = tempfile::tempdir().unwrap();
    let files = gaussians(dir.path());
    let mut args = vec!["mtde", "--gamma", "0", "--iters", "400", "--measures"];
    args.extend(files.iter().map(String::as_str));
    args.push("--reference");
    args.extend(files.iter().map(String::as_str));
    let out = smw(&args);
    assert!(out.status.success());
    let v = json(&out);
    // the score sums unsquared distances, so per-task SW² is at most its square
    let score = v["score"].as_f64().unwrap();
    assert!(score * score <= 1e-3, "{score}");
}

#[test]
fn reward_matrices_written() {
    let dir = tempfile::tempdir().unwrap();
    let files = gaussians(dir.path());
    let out_dir = dir.path().join("rewards");
    let mut args = vec![
        "reward",
        "--gamma",
        "0",
        "--k",
        "16",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--trajectories",
    ];
    args.extend(files.iter().map(String::as_str));
    let out = smw(&args);
    assert!(out.status.success());
    let v = json(&out);
    let sum = v["multitask_sum"].as_f64().unwrap();
    let smw2 = v["smw_squared"].as_f64().unwrap();
    assert!((sum - 30.0 * smw2).abs() <= 1e-9 * sum.max(1.0));
    assert_eq!(v["shaped_sum"].as_f64().unwrap(), 0.0);
    let shaped = fs::read_to_string(out_dir.join("shaped.csv")).unwrap();
    assert_eq!(shaped.lines().count(), 3);
    assert_eq!(shaped.lines().next().unwrap().split(',').count(), 30);
}

#[test]
fn verify_suite_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.jsonl");
    let out = smw(&[
        "verify",
        "--trials",
        "500",
        "--seed",
        "1",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines: Vec<Value> = fs::read_to_string(&report)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(lines[..lines.len() - 1].iter().all(|c| c["passed"] == true));
    assert_eq!(lines.last().unwrap()["passed"], true);
}

#[test]
fn bench_csv_columns() {
    let out = smw(&[
        "bench",
        "--mode",
        "samples",
        "--grid",
        "2^6,128",
        "--p",
        "3",
        "--d",
        "2",
        "--k",
        "3",
        "--repeats",
        "3",
        "--threads",
        "1",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("axis,median_s,min_s,max_s"));
    let axes: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(axes, ["64", "128"]);

    let out = smw(&[
        "bench",
        "--mode",
        "projections",
        "--grid",
        "5,20",
        "--p",
        "3",
        "--n",
        "20",
        "--d",
        "2",
        "--repeats",
        "4",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("k,mean,std"));

    let out = smw(&[
        "bench",
        "--mode",
        "samples",
        "--grid",
        "64",
        "--repeats",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = smw(&[
        "gen",
        "ellipses",
        "--p",
        "2",
        "--n",
        "12",
        "--format",
        "bin",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let bin: PathBuf = dir.path().join("clean_0.bin");
    assert_eq!(&fs::read(&bin).unwrap()[..4], b"SMW1");
    let p = bin.to_str().unwrap();
    let out = smw(&["dist", "--measures", p, p]);
    assert_eq!(json(&out)["estimate"].as_f64().unwrap(), 0.0);
}
