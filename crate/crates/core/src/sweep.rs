//! Convergence tables: solves over a list of `h`, `q`, `ε` or `β` values and
//! weighted errors against an oracle.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::oracle::{linear_closed_form, linear_closed_form_eps, reference_solution_eps, ReferenceSolution};
use crate::solver::{solve_perturbed_ivp, KnotSpec, ProblemSpec, SolveResult, SolverConfig};

/// Points of the uniform grid on `[ε, T]` used for error statistics.
pub const ERROR_GRID_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    /// Uniform knot width.
    H,
    Q,
    Eps,
    Beta,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::H => "h",
            SweepParameter::Q => "q",
            SweepParameter::Eps => "eps",
            SweepParameter::Beta => "beta",
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(SweepParameter::H),
            "q" => Ok(SweepParameter::Q),
            "eps" => Ok(SweepParameter::Eps),
            "beta" => Ok(SweepParameter::Beta),
            other => parameter(format!("unknown sweep parameter '{other}' (expected h, q, eps or beta)")),
        }
    }
}

/// Source of the exact solution for the error columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ErrorOracle {
    /// Closed form of the perturbed scalar problem with forcing `t^k`.
    LinearClosedForm { k: f64 },
    /// Closed form of the unperturbed problem (`ε = 0`) with forcing `t^k`.
    LinearClosedFormUnperturbed { k: f64 },
    /// Picard reference by product quadrature on `grid` points.
    Reference { grid: usize },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub sup: f64,
}

/// Mean and sup over a uniform grid of `t^{1−γ}|x(t) − exact(t)|`, where
/// `exact_weighted` returns the weighted exact value.
pub fn weighted_error(
    solution: &crate::splines::WeightedSpline,
    exact_weighted: impl Fn(f64) -> f64 + Sync,
    points: usize,
) -> Result<ErrorStats> {
    if solution.dim() != 1 {
        return parameter("weighted error statistics are implemented for scalar problems");
    }
    if points < 2 {
        return parameter("error grid needs at least two points");
    }
    let (a, b) = (solution.knots().start(), solution.knots().end());
    let errs: Vec<f64> = (0..points)
        .into_par_iter()
        .map(|i| {
            let t = a + (b - a) * i as f64 / (points - 1) as f64;
            let w = solution.weighted_part(t).map(|v| v[0]).unwrap_or(f64::NAN);
            (w - exact_weighted(t)).abs()
        })
        .collect();
    if errs.iter().any(|e| !e.is_finite()) {
        return Err(Error::Domain("non-finite value in error statistics".into()));
    }
    Ok(ErrorStats {
        mean: errs.iter().sum::<f64>() / points as f64,
        sup: errs.iter().copied().fold(0.0, f64::max),
    })
}

/// Error statistics of a solve against the chosen oracle.
pub fn solution_error(
    result: &SolveResult,
    problem: &ProblemSpec,
    eps: f64,
    oracle: ErrorOracle,
) -> Result<Option<ErrorStats>> {
    let g = problem.gamma_exp();
    match oracle {
        ErrorOracle::None => Ok(None),
        ErrorOracle::LinearClosedForm { k } => {
            if problem.dim() != 1 {
                return parameter("closed form is scalar");
            }
            let (alpha, beta, big_t, x0) = (problem.alpha, problem.beta_type, problem.horizon, problem.x0_tilde[0]);
            weighted_error(
                &result.solution,
                |t| t.powf(1.0 - g) * linear_closed_form_eps(alpha, beta, k, x0, big_t, eps, t),
                ERROR_GRID_POINTS,
            )
            .map(Some)
        }
        ErrorOracle::LinearClosedFormUnperturbed { k } => {
            if problem.dim() != 1 {
                return parameter("closed form is scalar");
            }
            let (alpha, beta, big_t, x0) = (problem.alpha, problem.beta_type, problem.horizon, problem.x0_tilde[0]);
            weighted_error(
                &result.solution,
                |t| t.powf(1.0 - g) * linear_closed_form(alpha, beta, k, x0, big_t, t),
                ERROR_GRID_POINTS,
            )
            .map(Some)
        }
        ErrorOracle::Reference { grid } => {
            let reference: ReferenceSolution = reference_solution_eps(problem, eps, grid)?;
            weighted_error(&result.solution, |t| reference.weighted_at(t)[0], ERROR_GRID_POINTS).map(Some)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub error: Option<ErrorStats>,
    pub delta_t: Vec<f64>,
    pub iterations: usize,
    pub knots: usize,
    pub x_at_start: Vec<f64>,
    pub time_s: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of log sup error against log value.
    pub order: Option<f64>,
}

/// Problem and configuration with the swept quantity set to `value`. When
/// `β` changes, the bound `m` is read as `T^{1−γ}·sup|f|` and rescaled.
pub fn instantiate(
    problem: &ProblemSpec,
    cfg: &SolverConfig,
    parameter_kind: SweepParameter,
    value: f64,
) -> Result<(ProblemSpec, SolverConfig)> {
    let mut p = problem.clone();
    let mut c = cfg.clone();
    match parameter_kind {
        SweepParameter::H => c.knots = KnotSpec::Uniform { h: value },
        SweepParameter::Q => {
            if !(value >= 1.0) || value.fract() != 0.0 {
                return parameter(format!("spline order must be a positive integer, got {value}"));
            }
            c.q = value as usize;
        }
        SweepParameter::Eps => c.eps = value,
        SweepParameter::Beta => {
            p.beta_type = value;
            if let Some(m) = p.bound_m.as_mut() {
                let new = p.alpha + value - p.alpha * value;
                let scale = p.horizon.powf(problem.gamma_exp() - new);
                m.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    p.validate()?;
    c.validate()?;
    Ok((p, c))
}

/// Runs one solve per value in parallel. A failed solve becomes a row with
/// a note; an oracle failure leaves the error columns empty.
pub fn run_sweep(
    problem: &ProblemSpec,
    cfg: &SolverConfig,
    parameter_kind: SweepParameter,
    values: &[f64],
    oracle: ErrorOracle,
) -> Result<SweepTable> {
    if values.is_empty() {
        return parameter("sweep needs at least one value");
    }
    let rows: Vec<Result<SweepRow>> = values
        .par_iter()
        .map(|&value| {
            let (p, c) = instantiate(problem, cfg, parameter_kind, value)?;
            let r = match solve_perturbed_ivp(&p, &c) {
                Ok(r) => r,
                Err(e) => {
                    return Ok(SweepRow {
                        value,
                        error: None,
                        delta_t: Vec::new(),
                        iterations: 0,
                        knots: 0,
                        x_at_start: Vec::new(),
                        time_s: f64::NAN,
                        note: Some(e.to_string()),
                    })
                }
            };
            let (error, note) = match solution_error(&r, &p, c.eps, oracle) {
                Ok(e) => (e, None),
                Err(e) => (None, Some(format!("oracle unavailable: {e}"))),
            };
            Ok(SweepRow {
                value,
                error,
                iterations: r.iterations,
                knots: r.knot_count(),
                x_at_start: r.x_at_start(),
                time_s: r.wall_time.as_secs_f64(),
                delta_t: r.delta_t,
                note,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.error.map(|e| (r.value, e.sup))).collect();
    Ok(SweepTable {
        parameter: parameter_kind,
        order: fit_order(&pairs),
        rows,
    })
}

/// Slope of the least-squares line through `(ln x, ln y)`; `None` with fewer
/// than two usable points.
pub fn fit_order(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

const CSV_FIXED: [&str; 4] = ["mean_weighted_error", "sup_weighted_error", "iterations", "knots"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |v| format!("{v:e}"))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "nan" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Format(format!("bad number '{s}'")))
}

impl SweepTable {
    fn dim(&self) -> usize {
        self.rows.iter().map(|r| r.delta_t.len().max(r.x_at_start.len())).max().unwrap_or(0)
    }

    /// Columns: value, mean and sup weighted error, `delta_i`, iterations,
    /// knots, `x_eps_i`, time and note. Missing numbers are written as `nan`.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut head = vec![self.parameter.name().to_string(), CSV_FIXED[0].into(), CSV_FIXED[1].into()];
        head.extend((1..=d).map(|c| format!("delta_{c}")));
        head.extend([CSV_FIXED[2].to_string(), CSV_FIXED[3].to_string()]);
        head.extend((1..=d).map(|c| format!("x_eps_{c}")));
        head.extend(["time_s".to_string(), "note".to_string()]);
        let mut out = head.join(",");
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![format!("{:e}", r.value), fmt_opt(r.error.map(|e| e.mean)), fmt_opt(r.error.map(|e| e.sup))];
            cells.extend((0..d).map(|c| fmt_opt(r.delta_t.get(c).copied())));
            cells.extend([r.iterations.to_string(), r.knots.to_string()]);
            cells.extend((0..d).map(|c| fmt_opt(r.x_at_start.get(c).copied())));
            cells.push(fmt_opt(Some(r.time_s).filter(|t| t.is_finite())));
            cells.push(r.note.as_deref().unwrap_or("").replace([',', '\n'], ";"));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(src: &str) -> Result<Self> {
        let mut lines = src.lines();
        let head: Vec<&str> = lines.next().ok_or_else(|| Error::Format("empty sweep CSV".into()))?.split(',').collect();
        let parameter_kind: SweepParameter = head[0].parse().map_err(|e: Error| Error::Format(e.to_string()))?;
        let d = head.iter().filter(|h| h.starts_with("delta_")).count();
        if head.len() != 7 + 2 * d {
            return Err(Error::Format(format!("unexpected sweep CSV header with {} columns", head.len())));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let cells: Vec<&str> = line.splitn(head.len(), ',').collect();
            if cells.len() != head.len() {
                return Err(Error::Format(format!("row has {} cells, expected {}", cells.len(), head.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad integer '{s}'")));
            let value = parse_opt(cells[0])?.ok_or_else(|| Error::Format("missing sweep value".into()))?;
            let error = match (parse_opt(cells[1])?, parse_opt(cells[2])?) {
                (Some(mean), Some(sup)) => Some(ErrorStats { mean, sup }),
                _ => None,
            };
            let delta_t: Vec<f64> = cells[3..3 + d].iter().map(|s| parse_opt(s)).collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
            let iterations = int(cells[3 + d])?;
            let knots = int(cells[4 + d])?;
            let x_at_start: Vec<f64> =
                cells[5 + d..5 + 2 * d].iter().map(|s| parse_opt(s)).collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
            let time_s = parse_opt(cells[5 + 2 * d])?.unwrap_or(f64::NAN);
            let note = Some(cells[6 + 2 * d].to_string()).filter(|s| !s.is_empty());
            rows.push(SweepRow {
                value,
                error,
                delta_t,
                iterations,
                knots,
                x_at_start,
                time_s,
                note,
            });
        }
        let pairs: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.error.map(|e| (r.value, e.sup))).collect();
        Ok(SweepTable {
            parameter: parameter_kind,
            order: fit_order(&pairs),
            rows,
        })
    }
}
