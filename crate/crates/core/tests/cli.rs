use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn proxbundle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxbundle")).args(args).env_remove("BUNDLE_SEED").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn solve_to(dir: &Path, extra: &[&str]) -> (Output, String) {
    let trace = dir.join("t.csv");
    let trace_arg = trace.to_str().unwrap().to_string();
    let mut args = vec!["solve", "--trace", &trace_arg];
    args.extend_from_slice(extra);
    let out = proxbundle(&args);
    let csv = std::fs::read_to_string(&trace).unwrap_or_default();
    (out, csv)
}

#[test]
fn solve_writes_a_header_and_one_row_per_iteration() {
    let dir = tempdir().unwrap();
    let (out, csv) = solve_to(dir.path(), &["--problem", "l1quad", "--eps", "1e-6", "--variant", "aggregate"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "k,step_kind,f_center,f_znext,model_val,v,eta,dist_sq,norm_s_minus_g");
    let text = stdout(&out);
    let iterations: usize =
        text.split_whitespace().find_map(|w| w.strip_prefix("iterations=")).unwrap().parse().unwrap();
    assert_eq!(data_rows(&csv).len(), iterations);
    assert!(text.contains("status=Converged") && text.contains("gap="), "{text}");
    assert!(text.contains("config: {"), "{text}");
}

#[test]
fn solve_rejects_unknown_problems_and_bad_config() {
    let out = proxbundle(&["solve", "--problem", "nosuch"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("norm-plus-quad"));

    let out = proxbundle(&["solve", "--problem", "l1quad", "--eps", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("eps must be positive"));

    let out = proxbundle(&["solve", "--problem", "l1quad", "--unknown-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_invocations_give_identical_traces() {
    let dir = tempdir().unwrap();
    let args = ["--problem", "maxquad", "--dim", "3", "--seed", "11", "--variant", "multi-cut", "--eps", "1e-5"];
    let (_, first) = solve_to(dir.path(), &args);
    let (_, second) = solve_to(dir.path(), &args);
    assert!(!first.is_empty());
    assert_eq!(first, second);
}

#[test]
fn seed_comes_from_the_environment() {
    let from_env = Command::new(env!("CARGO_BIN_EXE_proxbundle"))
        .args(["solve", "--problem", "maxquad", "--eps", "1e-3"])
        .env("BUNDLE_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(from_env.status.code(), Some(0), "{}", stderr(&from_env));
    let explicit = proxbundle(&["solve", "--problem", "maxquad", "--eps", "1e-3", "--seed", "5"]);
    let default = proxbundle(&["solve", "--problem", "maxquad", "--eps", "1e-3"]);
    assert_eq!(stdout(&from_env), stdout(&explicit));
    assert_ne!(stdout(&from_env), stdout(&default));
}

#[test]
fn verify_passes_a_fresh_trace_with_vectors() {
    let dir = tempdir().unwrap();
    let vectors = dir.path().join("v.json");
    let report = dir.path().join("r.json");
    let (out, _) = solve_to(
        dir.path(),
        &["--problem", "maxq", "--dim", "3", "--variant", "multi-cut", "--vectors", vectors.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0));
    let trace = dir.path().join("t.csv");
    let out = proxbundle(&[
        "verify",
        "--trace",
        trace.to_str().unwrap(),
        "--vectors",
        vectors.to_str().unwrap(),
        "--problem",
        "maxq",
        "--report",
        report.to_str().unwrap(),
    ]);
    // the stated envelope bound may fail on its own; everything else must pass
    let text = stdout(&out);
    let failing: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert!(failing.iter().all(|l| l.contains("moreau_bound ")), "{text}");
    assert_eq!(out.status.code(), Some(if failing.is_empty() { 0 } else { 1 }));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert!(json["entries"].as_array().unwrap().len() >= 13);
    assert!(text.contains("null_step_increment "), "{text}");
}

#[test]
fn verify_flags_a_planted_eta_decrease() {
    let dir = tempdir().unwrap();
    let (_, csv) = solve_to(dir.path(), &["--problem", "maxq", "--dim", "3", "--eps", "1e-4"]);
    let mut lines: Vec<String> = csv.lines().map(str::to_string).collect();
    let first_row = lines.iter().position(|l| !l.starts_with('#')).unwrap() + 1;
    let null_row = (first_row..lines.len()).find(|&i| lines[i].split(',').nth(1) == Some("null")).unwrap();
    // set eta after the null step to the previous eta minus one
    let eta_prev: f64 = lines[null_row].split(',').nth(6).unwrap().parse().unwrap();
    let mut fields: Vec<String> = lines[null_row + 1].split(',').map(str::to_string).collect();
    fields[6] = format!("{:.16e}", eta_prev - 1.0);
    lines[null_row + 1] = fields.join(",");
    let planted = dir.path().join("planted.csv");
    std::fs::write(&planted, lines.join("\n") + "\n").unwrap();

    let out = proxbundle(&["verify", "--trace", planted.to_str().unwrap(), "--problem", "maxq"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stdout(&out).lines().any(|l| l.starts_with("FAIL") && l.contains("null_step_increment ")));
}

#[test]
fn verify_rejects_a_mismatched_problem_and_malformed_traces() {
    let dir = tempdir().unwrap();
    let (_, csv) = solve_to(dir.path(), &["--problem", "l1quad"]);
    let trace = dir.path().join("t.csv");
    let out = proxbundle(&["verify", "--trace", trace.to_str().unwrap(), "--problem", "maxq"]);
    assert_eq!(out.status.code(), Some(2));

    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, csv.replace(",null,", ",sideways,").replace(",descent,", ",sideways,")).unwrap();
    let out = proxbundle(&["verify", "--trace", broken.to_str().unwrap(), "--problem", "l1quad"]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
}

#[test]
fn sweep_reports_one_row_per_tolerance() {
    let dir = tempdir().unwrap();
    let table = dir.path().join("sweep.csv");
    let out = proxbundle(&[
        "sweep",
        "--problem",
        "l1quad",
        "--eps",
        "1e-2,1e-3,1e-4,1e-5",
        "--output",
        table.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(table).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 4);
    let totals: Vec<usize> = rows.iter().map(|r| r.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert!(totals.windows(2).all(|w| w[1] >= w[0]), "{totals:?}");
    assert!(text.contains("# fit: constant="));

    let out = proxbundle(&["sweep", "--problem", "l1quad", "--eps", "1e-2,1e-3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_on_maxq_stays_within_the_series_bound() {
    let out = proxbundle(&["sweep", "--problem", "maxq", "--dim", "10", "--eps", "1e-2,1e-3,1e-4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines().skip_while(|l| !l.starts_with("eps,"));
    lines.next();
    for row in lines.filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = row.split(',').collect();
        let series: f64 = f[2].parse().unwrap();
        let bound: f64 = f[5].parse().unwrap();
        assert!(series <= bound, "{row}");
    }
}

#[test]
fn problem_files_are_accepted() {
    let dir = tempdir().unwrap();
    let file = dir.path().join("p.json");
    std::fs::write(
        &file,
        r#"{"name": "bowl", "dim": 2,
            "pieces": [{"A": [[2.0], [0.0, 2.0]], "b": [-2.0, 0.0], "c": 1.0},
                       {"A": "zero", "b": [1.0, 1.0], "c": -3.0}],
            "default_x1": [3.0, -1.0]}"#,
    )
    .unwrap();
    let out = proxbundle(&["solve", "--problem", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("problem: bowl"));
}

#[test]
fn list_problems_shows_every_builtin() {
    let out = proxbundle(&["list-problems"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for name in ["l1quad", "maxq", "maxquad", "norm-plus-quad"] {
        assert!(text.contains(name));
    }
}
