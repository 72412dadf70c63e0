use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn oversketch(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oversketch"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn blocked_multiply_is_exact() {
    let dir = TempDir::new().unwrap();
    let out = oversketch(&["multiply", "--scheme", "blocked", "--m", "32", "--n", "96", "--l", "32", "--b", "16"], dir.path());
    assert!(out.status.success());
    let (h, rows) = read_csv(&dir.path().join("multiply.csv"));
    let err: f64 = rows[0][column(&h, "relative_error")].parse().unwrap();
    assert!(err < 1e-12);
    assert!(dir.path().join("trace_tasks.csv").exists());
    assert!(dir.path().join("trace_waves.json").exists());
    assert!(dir.path().join("cost.csv").exists());
}

#[test]
fn validation_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let out = oversketch(&["multiply", "--scheme", "naive", "--a", "0"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("block size must be at least 1"));

    let out = oversketch(&["multiply", "--scheme", "strassen"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = oversketch(&["multiply", "--m", "10", "--l", "20"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("l = m"));
}

#[test]
fn help_exits_zero() {
    let dir = TempDir::new().unwrap();
    let out = oversketch(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("error-sweep"));
}

#[test]
fn sweep_e_zero_matches_multiply() {
    let dir = TempDir::new().unwrap();
    let shape = ["--m", "32", "--n", "192", "--l", "32", "--seed", "7"];
    let mut sweep = vec!["error-sweep", "--N", "8", "--e", "2", "--e-max", "2", "--trials", "1"];
    sweep.extend(shape);
    let out = oversketch(&sweep, dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("single trial"));
    let (h, rows) = read_csv(&dir.path().join("error_sweep.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][column(&h, "std_relative_error")], "");
    let sweep_err = &rows[0][column(&h, "mean_relative_error")];

    let mut single = vec!["multiply", "--N", "10", "--e", "0"];
    single.extend(shape);
    assert!(oversketch(&single, dir.path()).status.success());
    let (h, rows) = read_csv(&dir.path().join("multiply.csv"));
    assert_eq!(&rows[0][column(&h, "relative_error")], sweep_err);
}

#[test]
fn sweep_error_grows_with_e() {
    let dir = TempDir::new().unwrap();
    let out = oversketch(&["error-sweep", "--m", "32", "--n", "192", "--l", "32", "--N", "8", "--e", "4", "--e-max", "6"], dir.path());
    assert!(out.status.success());
    let (h, rows) = read_csv(&dir.path().join("error_sweep.csv"));
    let means: Vec<f64> = rows.iter().map(|r| r[column(&h, "mean_relative_error")].parse().unwrap()).collect();
    assert!(means[6] > means[0], "{means:?}");
}

#[test]
fn cost_compare_trends() {
    let dir = TempDir::new().unwrap();
    assert!(oversketch(&["cost-compare"], dir.path()).status.success());
    let (h, rows) = read_csv(&dir.path().join("cost_compare.csv"));
    let (n, scheme, dollars, workers) = (column(&h, "n"), column(&h, "scheme"), column(&h, "dollars"), column(&h, "workers"));
    let pick = |size: &str, s: &str| rows.iter().find(|r| r[n] == size && r[scheme] == s).unwrap().clone();
    // smallest size fits one block: naive and blocked coincide
    let (nv, bl) = (pick("1000", "naive"), pick("1000", "blocked"));
    assert_eq!(nv[workers..], bl[workers..]);
    for size in ["2000", "4000", "8000", "16000"] {
        let nd: f64 = pick(size, "naive")[dollars].parse().unwrap();
        let bd: f64 = pick(size, "blocked")[dollars].parse().unwrap();
        assert!(bd < nd, "n = {size}");
    }

    assert!(oversketch(&["cost-compare", "--shapes", "coded"], dir.path()).status.success());
    let (h, rows) = read_csv(&dir.path().join("cost_compare.csv"));
    let (scheme, workers) = (column(&h, "scheme"), column(&h, "workers"));
    for pair in rows.chunks(2) {
        assert_eq!(pair[0][scheme], "coded-naive");
        let coded: u64 = pair[0][workers].parse().unwrap();
        let os: u64 = pair[1][workers].parse().unwrap();
        assert!(os < coded);
    }
}

#[test]
fn infeasible_memory_is_flagged() {
    let dir = TempDir::new().unwrap();
    let out = oversketch(&["cost-compare", "--ns", "100,1000", "--memory", "1000"], dir.path());
    assert!(out.status.success());
    let (h, rows) = read_csv(&dir.path().join("cost_compare.csv"));
    let feasible = column(&h, "feasible");
    assert!(rows.iter().any(|r| r[feasible] == "false"));
    assert!(rows.iter().any(|r| r[feasible] == "true"));
}

#[test]
fn lp_zero_iterations_is_header_only() {
    let dir = TempDir::new().unwrap();
    let out = oversketch(&["lp", "--iterations", "0", "--constraints", "40", "--variables", "8", "--block", "4"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("lp.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("hessian,e,iteration"));
}

#[test]
fn lp_rows_per_run() {
    let dir = TempDir::new().unwrap();
    let out = oversketch(
        &["lp", "--iterations", "5", "--constraints", "80", "--variables", "10", "--block", "4", "--es", "0,1", "--exact"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("lp.csv"));
    assert_eq!(rows.len(), 15);
    let hess = column(&h, "hessian");
    assert_eq!(rows.iter().filter(|r| r[hess] == "exact").count(), 5);
    let wall = column(&h, "cumulative_wall_clock");
    let compute = column(&h, "cumulative_compute_time");
    let last = &rows[14];
    assert!(last[wall].parse::<f64>().unwrap() > last[compute].parse::<f64>().unwrap());
}

#[test]
fn lp_infeasible_start_is_reported() {
    let dir = TempDir::new().unwrap();
    let problem = dir.path().join("lp.txt");
    // x <= -1 and -x <= 3: the origin is infeasible
    std::fs::write(&problem, "2 1\n1\n-1\n-1 3\n1\n").unwrap();
    let out = oversketch(&["lp", "--problem", problem.to_str().unwrap(), "--iterations", "3"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not strictly feasible"));
}

#[test]
fn verify_passes_and_flags_low_power() {
    let dir = TempDir::new().unwrap();
    let out = oversketch(&["verify"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let (h, rows) = read_csv(&dir.path().join("verify.csv"));
    assert!(rows.iter().all(|r| r[column(&h, "passed")] == "true"));

    let out = oversketch(&["verify", "--trials", "10"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient statistical power"));
}

#[test]
fn corrupt_signs_fail_unbiasedness() {
    let dir = TempDir::new().unwrap();
    let out = oversketch(&["verify", "--corrupt-signs", "--trials", "2000"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let (h, rows) = read_csv(&dir.path().join("verify.csv"));
    let (suite, stat, passed) = (column(&h, "suite"), column(&h, "statistic"), column(&h, "passed"));
    assert!(rows.iter().any(|r| r[suite] == "stragglers" && r[stat] == "bias" && r[passed] == "false"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"scheme": "naive", "m": 16, "n": 32, "l": 16, "a": 4, "seed": 3}"#).unwrap();
    let out = oversketch(&["multiply", "--config", cfg.to_str().unwrap(), "--m", "24", "--l", "24", "--format", "json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("multiply.json")).unwrap()).unwrap();
    assert_eq!(rows[0]["scheme"], "naive");
    assert_eq!(rows[0]["m"], 24);
    assert_eq!(rows[0]["block"], 4);

    std::fs::write(&cfg, r#"{"nonsense": 1}"#).unwrap();
    let out = oversketch(&["multiply", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
