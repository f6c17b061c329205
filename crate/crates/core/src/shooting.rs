//! Grid search for zeros of the boundary defect `Δ_T(x̃₀)`, over the horizon
//! or over one component of the initial weight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::solver::{solve_perturbed_ivp, ProblemSpec, SolveResult, SolverConfig};

/// The quantity varied across the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridVariable {
    Horizon,
    InitialComponent(usize),
}

#[derive(Debug, Clone)]
pub struct GridSearchSpec {
    pub variable: GridVariable,
    pub grid: Vec<f64>,
    pub problem: ProblemSpec,
    pub config: SolverConfig,
}

impl GridSearchSpec {
    pub fn new(variable: GridVariable, grid: Vec<f64>, problem: ProblemSpec, config: SolverConfig) -> Result<Self> {
        let spec = Self {
            variable,
            grid,
            problem,
            config,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid `start, start + step, …` up to `stop` inclusive (within 1e−9 steps).
    pub fn from_range(
        variable: GridVariable,
        start: f64,
        stop: f64,
        step: f64,
        problem: ProblemSpec,
        config: SolverConfig,
    ) -> Result<Self> {
        Self::new(variable, range_grid(start, stop, step)?, problem, config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return parameter("grid is empty");
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return parameter("grid must be strictly increasing");
        }
        if let GridVariable::InitialComponent(c) = self.variable {
            if c >= self.problem.dim() {
                return parameter(format!("component {c} out of range for dimension {}", self.problem.dim()));
            }
        }
        if self.variable == GridVariable::Horizon && !(self.grid[0] > self.config.eps) {
            return parameter("every horizon on the grid must exceed eps");
        }
        Ok(())
    }

    fn instantiate(&self, value: f64) -> Result<ProblemSpec> {
        match self.variable {
            GridVariable::Horizon => self.problem.with_horizon(value),
            GridVariable::InitialComponent(c) => {
                let mut p = self.problem.clone();
                p.x0_tilde[c] = value;
                p.validate()?;
                Ok(p)
            }
        }
    }
}

pub fn range_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return parameter(format!("invalid grid range {start}..{stop} step {step}"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// One grid evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub value: f64,
    /// Empty when the solve failed.
    pub delta_t: Vec<f64>,
    pub abs_delta: f64,
    pub converged: bool,
    pub iterations: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub spec: GridSearchSpec,
    pub table: Vec<GridPoint>,
    pub argmin: f64,
    pub min_abs_delta: f64,
    pub argmin_index: usize,
    pub warnings: Vec<String>,
}

impl GridSearchResult {
    /// CSV with columns `value,delta_1..delta_d,abs_delta,converged,iterations`.
    pub fn to_csv(&self) -> String {
        let d = self.spec.problem.dim();
        let mut out = String::from("value");
        for c in 1..=d {
            out.push_str(&format!(",delta_{c}"));
        }
        out.push_str(",abs_delta,converged,iterations\n");
        for p in &self.table {
            out.push_str(&format!("{:e}", p.value));
            for c in 0..d {
                match p.delta_t.get(c) {
                    Some(v) => out.push_str(&format!(",{v:e}")),
                    None => out.push_str(",nan"),
                }
            }
            out.push_str(&format!(",{:e},{},{}\n", p.abs_delta, p.converged, p.iterations));
        }
        out
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the problem at one grid value.
pub fn solve_at(spec: &GridSearchSpec, value: f64) -> Result<SolveResult> {
    let problem = spec.instantiate(value)?;
    solve_perturbed_ivp(&problem, &spec.config)
}

/// Solves the perturbed problem at every grid value in parallel and picks the
/// value with the smallest max-norm `|Δ_T|` among converged points.
pub fn grid_search(spec: &GridSearchSpec) -> Result<GridSearchResult> {
    spec.validate()?;
    let table: Vec<GridPoint> = spec
        .grid
        .par_iter()
        .map(|&value| match solve_at(spec, value) {
            Ok(r) => GridPoint {
                value,
                abs_delta: max_norm(&r.delta_t),
                delta_t: r.delta_t,
                converged: true,
                iterations: r.iterations,
                note: None,
            },
            Err(e) => GridPoint {
                value,
                delta_t: Vec::new(),
                abs_delta: f64::NAN,
                converged: false,
                iterations: 0,
                note: Some(e.to_string()),
            },
        })
        .collect();
    let mut warnings: Vec<String> = table
        .iter()
        .filter(|p| !p.converged)
        .map(|p| format!("no solution at {}: {}", p.value, p.note.as_deref().unwrap_or("")))
        .collect();
    let (argmin_index, best) = table
        .iter()
        .enumerate()
        .filter(|(_, p)| p.converged && p.abs_delta.is_finite())
        .min_by(|a, b| a.1.abs_delta.total_cmp(&b.1.abs_delta))
        .ok_or(Error::NoCandidate)?;
    if table.len() > 1 && (argmin_index == 0 || argmin_index == table.len() - 1) {
        warnings.push(format!("minimum at the grid boundary ({})", best.value));
    }
    Ok(GridSearchResult {
        argmin: best.value,
        min_abs_delta: best.abs_delta,
        argmin_index,
        spec: spec.clone(),
        table,
        warnings,
    })
}

/// Re-grids `argmin ± coarse step` with the step divided by `factor`. A window
/// touching the grid boundary is extended by one coarse step outward.
pub fn refine(result: &GridSearchResult, factor: usize) -> Result<GridSearchResult> {
    if factor < 2 {
        return parameter("refinement factor must be at least 2");
    }
    let grid = &result.spec.grid;
    let i = result.argmin_index;
    let step = if grid.len() > 1 {
        let lo = if i > 0 { grid[i] - grid[i - 1] } else { f64::INFINITY };
        let hi = if i + 1 < grid.len() { grid[i + 1] - grid[i] } else { f64::INFINITY };
        lo.min(hi)
    } else {
        return parameter("refinement needs at least two grid points");
    };
    let mut warnings = Vec::new();
    let mut left = result.argmin - step;
    let right = result.argmin + step;
    if i == 0 || i == grid.len() - 1 {
        warnings.push("argmin at grid boundary; refinement window extended".to_string());
    }
    if result.spec.variable == GridVariable::Horizon {
        // horizons must stay above eps
        let floor = result.spec.config.eps;
        while left <= floor {
            left += step / factor as f64;
        }
    }
    let fine = step / factor as f64;
    let n = (2 * factor) as i64;
    let mut values: Vec<f64> = (0..=n)
        .map(|j| result.argmin + (j - factor as i64) as f64 * fine)
        .filter(|v| *v >= left - 1e-12 * fine && *v <= right + 1e-12 * fine)
        .collect();
    if !values.iter().any(|v| *v == result.argmin) {
        values.push(result.argmin);
        values.sort_by(f64::total_cmp);
    }
    let spec = GridSearchSpec::new(result.spec.variable, values, result.spec.problem.clone(), result.spec.config.clone())?;
    let mut refined = grid_search(&spec)?;
    refined.warnings.extend(warnings);
    Ok(refined)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::forcing::{MonomialForcing, ZeroForcing};
    use crate::solver::KnotSpec;

    fn zero_spec() -> GridSearchSpec {
        let problem = ProblemSpec::new(Arc::new(ZeroForcing { dim: 1 }), 0.5, 0.5, 1.0, vec![1.0]).unwrap();
        let cfg = SolverConfig::new(1e-10, 1, KnotSpec::Uniform { h: 0.1 });
        GridSearchSpec::from_range(GridVariable::Horizon, 0.5, 1.0, 0.1, problem, cfg).unwrap()
    }

    #[test]
    fn range_grid_is_inclusive() {
        let g = range_grid(0.005, 0.5, 0.005).unwrap();
        assert_eq!(g.len(), 100);
        assert!((g[99] - 0.5).abs() < 1e-14);
        assert!(range_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn zero_forcing_minimum_at_first_point() {
        let r = grid_search(&zero_spec()).unwrap();
        assert_eq!(r.argmin_index, 0);
        assert_eq!(r.min_abs_delta, 0.0);
        let again = refine(&r, 4).unwrap();
        assert_eq!(again.min_abs_delta, 0.0);
    }

    #[test]
    fn state_free_defect_is_constant_in_initial_weight() {
        let problem = ProblemSpec::new(Arc::new(MonomialForcing { k: 0.9 }), 0.5, 0.5, 3.0, vec![1.0]).unwrap();
        let cfg = SolverConfig::new(1e-10, 1, KnotSpec::Uniform { h: 0.25 });
        let spec = GridSearchSpec::new(GridVariable::InitialComponent(0), vec![-1.0, 0.0, 2.0], problem, cfg).unwrap();
        let r = grid_search(&spec).unwrap();
        let d0 = r.table[0].delta_t[0];
        for p in &r.table {
            assert_eq!(p.delta_t[0], d0);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let s = zero_spec();
        assert!(GridSearchSpec::new(GridVariable::Horizon, vec![], s.problem.clone(), s.config.clone()).is_err());
        assert!(GridSearchSpec::new(GridVariable::Horizon, vec![1.0, 0.5], s.problem.clone(), s.config.clone()).is_err());
        assert!(GridSearchSpec::new(GridVariable::InitialComponent(3), vec![1.0], s.problem, s.config).is_err());
    }
}
