use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracbvp::sweep::SweepTable;
use fracbvp::WeightedSpline;
use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracbvp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

/// Writes a variant of a shipped config with textual replacements.
fn variant(dir: &TempDir, base: &str, edits: &[(&str, &str)]) -> String {
    let mut text = std::fs::read_to_string(configs().join(base)).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "{from} not in {base}");
        text = text.replace(from, to);
    }
    let path = dir.path().join(format!("variant_{}.toml", edits.len()));
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn key_value(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {text}"));
    line.split('=').nth(1).unwrap().trim().parse().unwrap()
}

#[test]
fn check_reports_constants() {
    let o = run(&["check", "--config", &config("linear.toml")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(key_value(&stdout(&o), "rho(Q) "), 0.0);

    for name in ["nonlinear.toml", "nonlinear_expr.toml"] {
        let o = run(&["check", "--config", &config(name)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let text = stdout(&o);
        assert!(key_value(&text, "Xi + Omega") <= 0.7064);
        assert!(!text.contains(" fail "));
    }
}

#[test]
fn check_without_lipschitz_is_not_certified() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "nonlinear.toml", &[("K = [[1.0]]", "")]);
    let o = run(&["check", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("not-checkable"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let graded = variant(&dir, "nonlinear.toml", &[("c = 1.5", "c = 1.0")]);
    assert_eq!(run(&["check", "--config", &graded]).status.code(), Some(1));

    let bad = variant(&dir, "nonlinear_expr.toml", &[("cos(x1*4*pi*t)/(2*pi)", "1/(1")]);
    let o = run(&["solve", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("offset 4"), "{}", stderr(&o));

    assert_eq!(run(&["solve", "--config", "/nonexistent.toml"]).status.code(), Some(1));
    assert_eq!(run(&["solve"]).status.code(), Some(1));
}

#[test]
fn solve_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("linear");
    let o = run(&["solve", "--config", &config("linear.toml"), "--out", out.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("delta_T            -1.5997"), "{}", stdout(&o));
    let diag = read_json(&out.join("diagnostics.json"));
    assert_eq!(diag["iterations"], 2);
    assert_eq!(diag["seed"], 7);
    assert!((diag["delta_t"][0].as_f64().unwrap() + 1.600).abs() < 0.005);
    let csv = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,x_1,w_1"));
    assert_eq!(csv.lines().count(), 2002);
    assert!(out.join("plot.dat").exists());
    assert!(std::fs::read_to_string(out.join("plot.gp")).unwrap().contains("plot.dat"));

    let json_out = dir.path().join("json");
    let o = run(&["solve", "--config", &config("linear.toml"), "--out", json_out.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&json_out.join("solution.json")).as_array().unwrap().len(), 2001);
}

#[test]
fn nonlinear_solution_value_at_eps() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "nonlinear.toml", &[("beta = 0.5", "beta = 0.8"), ("m = [0.14595]", "m = [0.15]")]);
    let out = dir.path().join("o");
    let o = run(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let x = read_json(&out.join("diagnostics.json"))["x_at_eps"][0].as_f64().unwrap();
    assert!((x - 3.066).abs() < 1e-3, "x(eps) = {x}");
}

#[test]
fn zero_forcing_converges_at_once() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "nonlinear_expr.toml", &[("cos(x1*4*pi*t)/(2*pi)", "0")]);
    let out = dir.path().join("o");
    let o = run(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let diag = read_json(&out.join("diagnostics.json"));
    assert_eq!(diag["iterations"], 1);
    assert_eq!(diag["delta_t"][0].as_f64(), Some(0.0));
}

#[test]
fn solver_failures_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let stalled = variant(&dir, "nonlinear.toml", &[("tol = 1e-12", "tol = 1e-12\nmax_iter = 2")]);
    assert_eq!(run(&["solve", "--config", &stalled, "--out", dir.path().to_str().unwrap()]).status.code(), Some(2));

    let boxed = variant(&dir, "nonlinear.toml", &[("K = [[1.0]]", "K = [[1.0]]\ndomain = { lower = [0.0], upper = [0.5] }")]);
    let o = run(&["solve", "--config", &boxed, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = run(&[
        "gridsearch", "--config", &stalled, "--out", dir.path().to_str().unwrap(),
        "--grid-start", "0.1", "--grid-stop", "0.2", "--grid-step", "0.05",
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn single_value_sweep_matches_solve() {
    let dir = TempDir::new().unwrap();
    let solve_out = dir.path().join("solve");
    let sweep_out = dir.path().join("sweep");
    let cfg = config("linear.toml");
    assert_eq!(run(&["solve", "--config", &cfg, "--out", solve_out.to_str().unwrap()]).status.code(), Some(0));
    let o = run(&["sweep", "--config", &cfg, "--out", sweep_out.to_str().unwrap(), "--param", "h", "--values", "0.00390625"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let diag = read_json(&solve_out.join("diagnostics.json"));
    let table = SweepTable::from_csv(&std::fs::read_to_string(sweep_out.join("sweep.csv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    assert_eq!(row.delta_t[0], diag["delta_t"][0].as_f64().unwrap());
    assert_eq!(row.iterations as u64, diag["iterations"].as_u64().unwrap());
    assert_eq!(row.knots as u64, diag["knots"].as_u64().unwrap());
    assert_eq!(row.x_at_start[0], diag["x_at_eps"][0].as_f64().unwrap());
}

#[test]
fn sweep_reports_order_and_rereads() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let o = run(&[
        "sweep", "--config", &config("linear.toml"), "--out", out.to_str().unwrap(),
        "--param", "q", "--values", "1,2,4", "--threads", "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("fitted order"));
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let table = SweepTable::from_csv(&text).unwrap();
    assert_eq!(table.to_csv(), text);
    let sups: Vec<f64> = table.rows.iter().map(|r| r.error.unwrap().sup).collect();
    assert!(sups.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn sweep_without_oracle_exits_with_four() {
    let dir = TempDir::new().unwrap();
    let system = dir.path().join("system.toml");
    std::fs::write(
        &system,
        r#"
[problem]
alpha = 0.5
beta = 0.5
T = 1.0
x0_tilde = [1.0, 0.0]

[problem.forcing]
expressions = ["0.1*x2", "-0.1*x1"]

[solver]
eps = 1e-8
h = 0.1
"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = run(&["sweep", "--config", system.to_str().unwrap(), "--out", out.to_str().unwrap(), "--param", "h", "--values", "0.2,0.1"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(out.join("sweep.csv").exists());
    let o = run(&[
        "sweep", "--config", system.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--param", "h", "--values", "0.2", "--no-errors",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn gridsearch_finds_root_and_dumps() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let o = run(&[
        "gridsearch", "--config", &config("nonlinear.toml"), "--out", out.to_str().unwrap(),
        "--grid-start", "0.1", "--grid-stop", "0.3", "--grid-step", "0.01", "--refine", "4", "--dump-at", "0.19",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let argmin: f64 = text.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((argmin - 0.185).abs() <= 0.01, "{text}");
    let table = std::fs::read_to_string(out.join("gridsearch.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("value,delta_1,abs_delta,converged,iterations"));
    assert_eq!(table.lines().count(), 22);
    assert!(out.join("gridsearch_refined.csv").exists());
    assert!(out.join("solution_0.19.csv").exists());
}

#[test]
fn dump_spline_round_trips() {
    let dir = TempDir::new().unwrap();
    for format in ["csv", "json"] {
        let out = dir.path().join(format);
        let o = run(&["dump-spline", "--config", &config("nonlinear.toml"), "--out", out.to_str().unwrap(), "--format", format]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let text = std::fs::read_to_string(out.join(format!("spline.{format}"))).unwrap();
        let ws = if format == "csv" { WeightedSpline::from_csv(&text) } else { WeightedSpline::from_json(&text) }.unwrap();
        assert_eq!(ws.knots().len(), 55);
    }
}
