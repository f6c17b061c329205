use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fracbvp::shooting::{grid_search, refine, solve_at, GridSearchResult};
use fracbvp::solver::solve_perturbed_ivp;
use fracbvp::sweep::{run_sweep, ErrorOracle, SweepParameter, SweepTable};
use fracbvp::{Error, GridSearchSpec, GridVariable, SolveResult, WeightedSpline};
use serde_json::json;

use crate::config::{ForcingKind, LoadedConfig};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Config = 1,
    NonConvergence = 2,
    DomainEscape = 3,
    OracleUnavailable = 4,
    EmptyGrid = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl Failure {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::NonConvergence { .. } | Error::BoundUnavailable(_) => Exit::NonConvergence,
            Error::DomainEscape { .. } | Error::Domain(_) => Exit::DomainEscape,
            Error::Quadrature { .. } => Exit::OracleUnavailable,
            Error::NoCandidate => Exit::EmptyGrid,
            Error::Parameter(_) | Error::DegenerateInterval { .. } | Error::Format(_) => Exit::Config,
        };
        Failure::new(exit, e.to_string())
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::new(Exit::Config, format!("cannot write {}: {e}", path.display()))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io(&path))?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    parts.join(" ")
}

pub fn check(cfg: &LoadedConfig) -> Result<Exit, Failure> {
    let report = fracbvp::constants::check_assumptions(&cfg.problem, &cfg.solver)?;
    print!("{}", report.to_text());
    if report.all_checkable_pass() {
        println!("all assumptions pass");
        Ok(Exit::Ok)
    } else {
        println!("convergence is not certified");
        Ok(Exit::NonConvergence)
    }
}

/// Samples `t, x_1..x_d, w_1..w_d` on a uniform grid over `[ε, T]`.
fn samples(ws: &WeightedSpline, points: usize) -> Result<Vec<(f64, Vec<f64>, Vec<f64>)>, Failure> {
    let (a, b) = (ws.knots().start(), ws.knots().end());
    (0..points)
        .map(|i| {
            let t = if i + 1 == points { b } else { a + (b - a) * i as f64 / (points - 1) as f64 };
            Ok((t, ws.eval(t)?, ws.weighted_part(t)?))
        })
        .collect()
}

fn solution_csv(ws: &WeightedSpline) -> Result<String, Failure> {
    let d = ws.dim();
    let mut out = String::from("t");
    for c in 1..=d {
        let _ = write!(out, ",x_{c}");
    }
    for c in 1..=d {
        let _ = write!(out, ",w_{c}");
    }
    out.push('\n');
    for (t, x, w) in samples(ws, SAMPLE_POINTS)? {
        let _ = write!(out, "{t:e}");
        for v in x.iter().chain(&w) {
            let _ = write!(out, ",{v:e}");
        }
        out.push('\n');
    }
    Ok(out)
}

fn solution_json(ws: &WeightedSpline) -> Result<String, Failure> {
    let rows: Vec<_> = samples(ws, SAMPLE_POINTS)?
        .into_iter()
        .map(|(t, x, w)| json!({"t": t, "x": x, "w": w}))
        .collect();
    Ok(serde_json::to_string_pretty(&rows).unwrap())
}

const SAMPLE_POINTS: usize = 2001;

fn plot_files(ws: &WeightedSpline) -> Result<(String, String), Failure> {
    let d = ws.dim();
    let mut dat = String::from("# t");
    for c in 1..=d {
        let _ = write!(dat, " x_{c}");
    }
    for c in 1..=d {
        let _ = write!(dat, " w_{c}");
    }
    dat.push('\n');
    for (t, x, w) in samples(ws, SAMPLE_POINTS)? {
        let _ = write!(dat, "{t:e}");
        for v in x.iter().chain(&w) {
            let _ = write!(dat, " {v:e}");
        }
        dat.push('\n');
    }
    let mut gp = String::from("set xlabel \"t\"\nset key top right\nplot ");
    let series: Vec<String> = (1..=d)
        .map(|c| format!("\"plot.dat\" using 1:{} with lines title \"x_{c}\"", c + 1))
        .collect();
    gp.push_str(&series.join(", \\\n     "));
    gp.push('\n');
    Ok((dat, gp))
}

fn diagnostics(cfg: &LoadedConfig, r: &SolveResult, seed: Option<u64>) -> serde_json::Value {
    let report = r.report.as_ref().map(|rep| {
        rep.key_values()
            .into_iter()
            .map(|(k, v)| {
                let value = v.parse::<f64>().map_or(json!(v), |x| json!(x));
                (k, value)
            })
            .collect::<serde_json::Map<String, serde_json::Value>>()
    });
    json!({
        "alpha": cfg.problem.alpha,
        "beta": cfg.problem.beta_type,
        "T": cfg.problem.horizon,
        "x0_tilde": cfg.problem.x0_tilde,
        "eps": cfg.solver.eps,
        "q": cfg.solver.q,
        "knots": r.knot_count(),
        "iterations": r.iterations,
        "delta_t": r.delta_t,
        "boundary_residual": r.boundary_residual,
        "residual_budget": r.residual_budget,
        "apriori_bound": r.apriori_bound,
        "aposteriori_bound": r.aposteriori_bound,
        "history": r.history,
        "x_at_eps": r.x_at_start(),
        "wall_time_s": r.wall_time.as_secs_f64(),
        "assumptions": report,
        "warnings": r.warnings,
        "seed": seed,
    })
}

fn print_solve_summary(r: &SolveResult) {
    println!("iterations         {}", r.iterations);
    println!("delta_T            {}", fmt_vec(&r.delta_t));
    println!("boundary residual  {}", fmt_vec(&r.boundary_residual));
    println!("wall time          {:.3} s", r.wall_time.as_secs_f64());
    for w in &r.warnings {
        println!("warning: {w}");
    }
}

pub fn solve(cfg: &LoadedConfig, out: &Path, format: Format, seed: Option<u64>) -> Result<Exit, Failure> {
    let r = solve_perturbed_ivp(&cfg.problem, &cfg.solver)?;
    print_solve_summary(&r);
    let solution = match format {
        Format::Csv => solution_csv(&r.solution)?,
        Format::Json => solution_json(&r.solution)?,
    };
    write_file(out, &format!("solution.{}", format.ext()), &solution)?;
    let diag = serde_json::to_string_pretty(&diagnostics(cfg, &r, seed)).unwrap();
    write_file(out, "diagnostics.json", &diag)?;
    let (dat, gp) = plot_files(&r.solution)?;
    write_file(out, "plot.dat", &dat)?;
    write_file(out, "plot.gp", &gp)?;
    println!("wrote {}", out.display());
    Ok(Exit::Ok)
}

pub fn dump_spline(cfg: &LoadedConfig, out: &Path, format: Format) -> Result<Exit, Failure> {
    let r = solve_perturbed_ivp(&cfg.problem, &cfg.solver)?;
    let text = match format {
        Format::Csv => r.solution.to_csv(),
        Format::Json => r.solution.to_json()?,
    };
    let path = write_file(out, &format!("spline.{}", format.ext()), &text)?;
    println!("wrote {}", path.display());
    Ok(Exit::Ok)
}

/// Oracle for the error columns, or `None` when no oracle applies.
pub fn choose_oracle(cfg: &LoadedConfig, parameter: SweepParameter, reference_grid: usize) -> Option<ErrorOracle> {
    match cfg.forcing {
        // ε sweeps measure convergence towards the unperturbed solution
        ForcingKind::Monomial { k } if parameter == SweepParameter::Eps => {
            Some(ErrorOracle::LinearClosedFormUnperturbed { k })
        }
        ForcingKind::Monomial { k } => Some(ErrorOracle::LinearClosedForm { k }),
        _ if cfg.problem.dim() == 1 => Some(ErrorOracle::Reference { grid: reference_grid }),
        _ => None,
    }
}

pub struct SweepArgs {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub errors: bool,
    pub reference_grid: usize,
}

pub fn sweep(cfg: &LoadedConfig, args: &SweepArgs, out: &Path, format: Format) -> Result<Exit, Failure> {
    let oracle = if args.errors {
        choose_oracle(cfg, args.parameter, args.reference_grid)
    } else {
        Some(ErrorOracle::None)
    };
    let table = run_sweep(&cfg.problem, &cfg.solver, args.parameter, &args.values, oracle.unwrap_or(ErrorOracle::None))?;
    print_sweep(&table);
    let text = match format {
        Format::Csv => table.to_csv(),
        Format::Json => serde_json::to_string_pretty(&table).unwrap(),
    };
    let path = write_file(out, &format!("sweep.{}", format.ext()), &text)?;
    println!("wrote {}", path.display());
    if oracle.is_none() {
        eprintln!("error columns unavailable: no oracle for this problem");
        return Ok(Exit::OracleUnavailable);
    }
    if table.rows.iter().any(|r| r.delta_t.is_empty()) {
        return Ok(Exit::NonConvergence);
    }
    if args.errors && table.rows.iter().any(|r| r.error.is_none()) {
        return Ok(Exit::OracleUnavailable);
    }
    Ok(Exit::Ok)
}

fn print_sweep(t: &SweepTable) {
    println!(
        "{:>12} {:>12} {:>12} {:>14} {:>6} {:>6} {:>12} {:>10}",
        t.parameter.name(),
        "mean err",
        "sup err",
        "delta_T",
        "iter",
        "knots",
        "x(eps)",
        "time (s)"
    );
    for r in &t.rows {
        let e = |f: fn(&fracbvp::ErrorStats) -> f64| r.error.as_ref().map_or("n/a".to_string(), |s| format!("{:.4e}", f(s)));
        println!(
            "{:>12.4e} {:>12} {:>12} {:>14} {:>6} {:>6} {:>12} {:>10.3e}",
            r.value,
            e(|s| s.mean),
            e(|s| s.sup),
            fmt_vec(&r.delta_t),
            r.iterations,
            r.knots,
            fmt_vec(&r.x_at_start),
            r.time_s
        );
        if let Some(n) = &r.note {
            println!("{:>12} {n}", "");
        }
    }
    match t.order {
        Some(p) => println!("fitted order (log-log least squares on sup error): {p:.4}"),
        None => println!("fitted order unavailable"),
    }
}

pub struct GridArgs {
    pub variable: GridVariable,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub refine: Option<usize>,
    pub dump_at: Vec<f64>,
}

pub fn parse_variable(s: &str) -> Result<GridVariable, Failure> {
    if s == "T" {
        return Ok(GridVariable::Horizon);
    }
    match s.strip_prefix("x0_").and_then(|i| i.parse::<usize>().ok()) {
        Some(i) if i >= 1 => Ok(GridVariable::InitialComponent(i - 1)),
        _ => Err(Failure::new(Exit::Config, format!("grid variable must be T or x0_<i>, got '{s}'"))),
    }
}

fn grid_text(r: &GridSearchResult, format: Format) -> String {
    match format {
        Format::Csv => r.to_csv(),
        Format::Json => serde_json::to_string_pretty(&json!({
            "argmin": r.argmin,
            "min_abs_delta": r.min_abs_delta,
            "warnings": r.warnings,
            "table": r.table,
        }))
        .unwrap(),
    }
}

pub fn gridsearch(cfg: &LoadedConfig, args: &GridArgs, out: &Path, format: Format) -> Result<Exit, Failure> {
    let spec = GridSearchSpec::from_range(
        args.variable,
        args.start,
        args.stop,
        args.step,
        cfg.problem.clone(),
        cfg.solver.clone(),
    )?;
    let r = grid_search(&spec)?;
    write_file(out, &format!("gridsearch.{}", format.ext()), &grid_text(&r, format))?;
    println!("argmin {}  |delta_T| {:.6e}", r.argmin, r.min_abs_delta);
    for w in &r.warnings {
        println!("warning: {w}");
    }
    if let Some(factor) = args.refine {
        let fine = refine(&r, factor)?;
        write_file(out, &format!("gridsearch_refined.{}", format.ext()), &grid_text(&fine, format))?;
        println!("refined argmin {}  |delta_T| {:.6e}", fine.argmin, fine.min_abs_delta);
        for w in &fine.warnings {
            println!("warning: {w}");
        }
    }
    for &v in &args.dump_at {
        let s = solve_at(&spec, v)?;
        write_file(out, &format!("solution_{v}.csv"), &solution_csv(&s.solution)?)?;
    }
    println!("wrote {}", out.display());
    Ok(Exit::Ok)
}
