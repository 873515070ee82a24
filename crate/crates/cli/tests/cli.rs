use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fraclattice"));
    cmd.args(args).env_remove("FRACLATTICE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn cholesky_sample_writes_one_row_per_increment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("paths.csv");
    let o = run(&[
        "sample", "--method", "cholesky", "--n", "64", "--hurst", "0.7", "--seed", "1", "--count", "10", "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sample,k,t,increment,path"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 640);
    // path is the running sum of increments within each sample
    let mut sum = 0.0;
    for r in &rows[..64] {
        let f: Vec<f64> = r.split(',').map(|x| x.parse().unwrap()).collect();
        sum += f[3];
        assert!((f[4] - sum).abs() < 1e-12);
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("paths.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["parameters"]["count"], 10);
    assert!(meta["versions"]["fraclattice"].is_string());
}

#[test]
fn usage_errors_exit_two() {
    let o = run(&["sample", "--hurst", "1.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("(0, 1)"), "{}", stderr(&o));

    let o = run(&["sample", "--method", "lightcone", "--hurst", "0.3"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("(0.5, 1)"), "{}", stderr(&o));

    let o = run(&["calibrate", "--n", "60"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("power of two"));

    assert_eq!(code(&run(&["verify", "--suite", "nonsense"])), 2);
    assert_eq!(code(&run(&["bench", "--methods", "bogus", "--sizes", "8"])), 2);
    assert_eq!(code(&run(&["sample", "--count", "0"])), 2);
    assert_eq!(code(&run(&["replay", "/nonexistent/x.meta.json"])), 2);
}

#[test]
fn help_exits_zero() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("FRACLATTICE_THREADS"));
}

#[test]
fn replay_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (method, extra) in [
        ("lightcone", &["--n", "16", "--hurst", "0.8"][..]),
        ("circulant", &["--n", "33", "--hurst", "0.3"][..]),
        ("multifractal", &["--n", "16", "--multiplier", "cascade", "--m0", "0.7", "--levels", "3"][..]),
    ] {
        let first = dir.path().join(format!("{method}.csv"));
        let mut args = vec!["sample", "--method", method, "--seed", "7", "--count", "4", "--out", p(&first)];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{method}: {}", stderr(&o));
        let second = dir.path().join(format!("{method}-replay.csv"));
        let meta = dir.path().join(format!("{method}.meta.json"));
        let o = run(&["replay", p(&meta), "--out", p(&second)]);
        assert_eq!(code(&o), 0, "{method}: {}", stderr(&o));
        assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap(), "{method}");
    }
}

#[test]
fn multifractal_output_records_multiplier_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mf.csv");
    let o = run(&[
        "sample", "--method", "multifractal", "--n", "8", "--seed", "3", "--multiplier-seed", "11",
        "--frozen-multiplier", "--count", "2", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# multiplier_seed=11\nsample,k,t,increment,path\n"));
    assert_eq!(text.lines().count(), 2 + 16);
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let args = ["sample", "--method", "lightcone", "--n", "16", "--count", "40", "--seed", "5"];
    let one = run_env(&args, &[("FRACLATTICE_THREADS", "1")]);
    let four = run_env(&args, &[("FRACLATTICE_THREADS", "4")]);
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout);
    let other = run(&["sample", "--method", "lightcone", "--n", "16", "--count", "40", "--seed", "6"]);
    assert_ne!(one.stdout, other.stdout);
    assert_eq!(code(&run_env(&args, &[("FRACLATTICE_THREADS", "many")])), 2);
}

#[test]
fn calibrated_parameters_drive_the_tree_sampler() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    let o = run(&["calibrate", "--n", "16", "--hurst", "0.7", "--max-iter", "60", "--out", p(&params)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let err = summary["frobenius_rel_error"].as_f64().unwrap();
    assert!(err < 0.2, "{err}");

    let out = dir.path().join("tree.csv");
    let o = run(&["sample", "--method", "tree", "--params", p(&params), "--count", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 3 * 16);

    // a fit that cannot reach the tolerance fails only under --strict
    let strict = dir.path().join("strict.json");
    let args = ["calibrate", "--n", "8", "--hurst", "0.7", "--max-iter", "5", "--tol", "1e-9", "--out", p(&strict)];
    assert_eq!(code(&run(&args)), 0);
    let mut with_strict = args.to_vec();
    with_strict.push("--strict");
    assert_eq!(code(&run(&with_strict)), 1);
}

#[test]
fn single_size_bench_leaves_slope_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = run(&["bench", "--methods", "cholesky,tree", "--sizes", "8", "--reps", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let timings = std::fs::read_to_string(&out).unwrap();
    assert_eq!(timings.lines().next(), Some("method,n,median_seconds"));
    assert_eq!(timings.lines().count(), 3);
    let slopes = std::fs::read_to_string(dir.path().join("bench.slopes.csv")).unwrap();
    assert_eq!(slopes, "method,slope\ncholesky,\ntree,\n");
}

#[test]
fn identities_suite_passes() {
    let o = run(&["verify", "--suite", "identities"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    assert_eq!(table.lines().next(), Some("check,value,bound,status"));
    let vander: Vec<&str> = table.lines().filter(|l| l.starts_with("vandermonde")).collect();
    assert_eq!(vander.len(), 61);
    assert!(table.lines().skip(1).all(|l| l.ends_with(",PASS")));
}

#[test]
fn covariance_suite_reports_truncation_error() {
    let o = run(&[
        "verify", "--suite", "covariance", "--n", "16", "--hurst", "0.7", "--depth", "256", "--samples", "4000",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    let row = table
        .lines()
        .find(|l| l.starts_with("truncation delta depth=256,"))
        .expect("delta row");
    let delta: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(delta < 0.05, "{delta}");
}

#[test]
fn config_file_supplies_defaults_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# shared settings\nmethod=circulant\nn=8\ncount=2\nhurst=1.5\n").unwrap();
    let o = run(&["sample", "--config", p(&cfg)]);
    assert_eq!(code(&o), 2, "config value reaches validation");
    let o = run(&["sample", "--config", p(&cfg), "--hurst", "0.4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + 2 * 8);
}
