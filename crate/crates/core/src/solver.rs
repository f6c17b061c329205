//! Picard iteration for the perturbed initial value problem, the boundary
//! defect `Δ_T` and solve diagnostics.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constants::{
    apriori_error_bound_numerical, check_assumptions, AssumptionReport, ConvergenceConstants,
};
use crate::error::{parameter, Error, Result};
use crate::forcing::SharedForcing;
use crate::fracops::{apply_spline_F, fit_integrand, MapParams, SplineIntegrator};
use crate::specfun::{gamma_pos, incomplete_beta};
use crate::splines::{graded_knots, GradedKnotParams, KnotCollection, WeightedSpline};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Region the weighted solution values must stay in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    AllSpace,
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl Domain {
    pub fn contains(&self, w: &[f64]) -> bool {
        match self {
            Domain::AllSpace => true,
            Domain::Box { lower, upper } => w
                .iter()
                .enumerate()
                .all(|(c, v)| *v >= lower[c] && *v <= upper[c]),
        }
    }
}

/// A fractional-periodic boundary value problem of order α and type β.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub forcing: SharedForcing,
    pub alpha: f64,
    pub beta_type: f64,
    pub horizon: f64,
    /// Initial weight: the limit of the (1−γ)-integral of `x` at 0.
    pub x0_tilde: Vec<f64>,
    pub domain: Domain,
    /// Bound on the weighted forcing `sup t^{1−γ}|f(t, x)|` over the domain.
    pub bound_m: Option<Vec<f64>>,
    /// Lipschitz matrix of `f` in `x`.
    pub lipschitz: Option<DMatrix<f64>>,
}

impl ProblemSpec {
    pub fn new(
        forcing: SharedForcing,
        alpha: f64,
        beta_type: f64,
        horizon: f64,
        x0_tilde: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self {
            forcing,
            alpha,
            beta_type,
            horizon,
            x0_tilde,
            domain: Domain::AllSpace,
            bound_m: None,
            lipschitz: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        self.domain = domain;
        self.validate()?;
        Ok(self)
    }

    pub fn with_bound(mut self, m: Vec<f64>) -> Result<Self> {
        self.bound_m = Some(m);
        self.validate()?;
        Ok(self)
    }

    pub fn with_lipschitz(mut self, k: DMatrix<f64>) -> Result<Self> {
        self.lipschitz = Some(k);
        self.validate()?;
        Ok(self)
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut s = self.clone();
        s.horizon = horizon;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return parameter("dimension must be at least 1");
        }
        if self.forcing.dim() != d {
            return parameter(format!(
                "forcing has dimension {}, initial weight has {d}",
                self.forcing.dim()
            ));
        }
        if self.x0_tilde.iter().any(|v| !v.is_finite()) {
            return parameter("initial weight must be finite");
        }
        MapParams::new(self.alpha, self.beta_type, self.horizon, 0.0)?;
        if let Domain::Box { lower, upper } = &self.domain {
            if lower.len() != d || upper.len() != d || lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                return parameter("domain box must have d ordered bounds");
            }
        }
        if let Some(m) = &self.bound_m {
            if m.len() != d || m.iter().any(|v| !(*v >= 0.0)) {
                return parameter("bound m must be a nonnegative d-vector");
            }
        }
        if let Some(k) = &self.lipschitz {
            if k.nrows() != d || k.ncols() != d || k.iter().any(|v| !(*v >= 0.0)) {
                return parameter("Lipschitz matrix must be a nonnegative d x d matrix");
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.x0_tilde.len()
    }

    pub fn gamma_exp(&self) -> f64 {
        self.alpha + self.beta_type - self.alpha * self.beta_type
    }

    pub fn zeta(&self) -> f64 {
        1.0 - self.gamma_exp() + self.alpha
    }

    pub fn map_params(&self, eps: f64) -> Result<MapParams> {
        MapParams::new(self.alpha, self.beta_type, self.horizon, eps)
    }
}

/// How the knot collection of a solve is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KnotSpec {
    Explicit(KnotCollection),
    Uniform { h: f64 },
    Graded { c: f64, h_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eps: f64,
    pub q: usize,
    pub knots: KnotSpec,
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverConfig {
    pub fn new(eps: f64, q: usize, knots: KnotSpec) -> Self {
        Self {
            eps,
            q,
            knots,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return parameter(format!("eps must be positive, got {}", self.eps));
        }
        if self.q == 0 {
            return parameter("spline order q must be at least 1");
        }
        if !(self.tol > 0.0) {
            return parameter("tolerance must be positive");
        }
        if self.max_iter == 0 {
            return parameter("max_iter must be at least 1");
        }
        Ok(())
    }

    /// Knots on `[ε, T]` for the given problem.
    pub fn build_knots(&self, problem: &ProblemSpec) -> Result<KnotCollection> {
        self.validate()?;
        if !(self.eps < problem.horizon) {
            return parameter(format!("eps = {} must be below T = {}", self.eps, problem.horizon));
        }
        match &self.knots {
            KnotSpec::Explicit(k) => {
                if (k.start() - self.eps).abs() > 1e-15 * problem.horizon
                    || (k.end() - problem.horizon).abs() > 1e-12 * problem.horizon
                {
                    return parameter("explicit knots must span [eps, T]");
                }
                Ok(k.clone())
            }
            KnotSpec::Uniform { h } => KnotCollection::uniform(self.eps, problem.horizon, *h),
            KnotSpec::Graded { c, h_max } => graded_knots(
                &GradedKnotParams {
                    c: *c,
                    h_max: *h_max,
                    eps: self.eps,
                    horizon: problem.horizon,
                },
                problem.gamma_exp(),
            ),
        }
    }
}

/// Outcome of a converged solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub solution: WeightedSpline,
    /// Number of map applications.
    pub iterations: usize,
    pub delta_t: Vec<f64>,
    pub boundary_residual: Vec<f64>,
    /// Budget the boundary residual is expected to stay below.
    pub residual_budget: Vec<f64>,
    /// `Q*^n(I−Q*)^{−1}(Ξ+Ω^q_A)m` when the constants allow it.
    pub apriori_bound: Option<Vec<f64>>,
    /// `Q*(I−Q*)^{−1}` applied to the last step size.
    pub aposteriori_bound: Option<Vec<f64>>,
    /// Weighted node sup distance between consecutive iterates.
    pub history: Vec<f64>,
    pub wall_time: Duration,
    pub report: Option<AssumptionReport>,
    pub warnings: Vec<String>,
}

impl SolveResult {
    /// Solution value at the left endpoint ε.
    pub fn x_at_start(&self) -> Vec<f64> {
        let t0 = self.solution.knots().start();
        self.solution.eval(t0).unwrap_or_default()
    }

    pub fn knot_count(&self) -> usize {
        self.solution.knots().len()
    }
}

/// `x₀(t) = x̃₀ t^{γ−1}/Γ(γ)`, whose weighted part is constant.
pub fn initial_iterate(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<WeightedSpline> {
    let knots = cfg.build_knots(problem)?;
    let g = problem.gamma_exp();
    let w: Vec<f64> = problem.x0_tilde.iter().map(|x| x / gamma_pos(g)).collect();
    WeightedSpline::constant(knots, g, cfg.q, &w)
}

fn check_domain(problem: &ProblemSpec, ws: &WeightedSpline) -> Result<()> {
    if matches!(problem.domain, Domain::AllSpace) {
        return Ok(());
    }
    let d = ws.dim();
    let mut w = vec![0.0; d];
    for i in 0..ws.knots().len() {
        for j in 0..=ws.order() {
            for (c, wc) in w.iter_mut().enumerate() {
                *wc = ws.node_values(i, c)[j];
            }
            if !problem.domain.contains(&w) {
                let t = ws.node_time(i, j);
                let scale = t.powf(ws.gamma_exp() - 1.0);
                return Err(Error::DomainEscape {
                    t,
                    x: w.iter().map(|v| v * scale).collect(),
                });
            }
        }
    }
    Ok(())
}

/// `x_{m+1} = x₀ + S^q t^{1−γ}F_ε f(·, x_m)`.
pub fn iterate_once(problem: &ProblemSpec, cfg: &SolverConfig, x_m: &WeightedSpline) -> Result<WeightedSpline> {
    let x0 = initial_iterate(problem, cfg)?;
    let p = problem.map_params(cfg.eps)?;
    let image = apply_spline_F(problem.forcing.as_ref(), x_m, &p)?;
    x0.combine(1.0, &image.update, 1.0)
}

/// `Δ_T = −Γ(ζ+1)T^{−ζ}I_ε^ζ f(·, x(·))(T)` from the integrand spline of `x`.
pub fn delta_t(problem: &ProblemSpec, cfg: &SolverConfig, x: &WeightedSpline) -> Result<Vec<f64>> {
    let p = problem.map_params(cfg.eps)?;
    let integrand = fit_integrand(problem.forcing.as_ref(), x)?;
    let lower = integrand.knots().start();
    let tail = SplineIntegrator::new(&integrand).integrate(p.zeta, lower, p.horizon)?;
    let scale = gamma_pos(p.zeta + 1.0) * p.horizon.powf(-p.zeta);
    Ok(tail.iter().map(|v| -scale * v).collect())
}

/// `|I_ε^{1−γ}x(T) − x̃₀|` per component; for γ = 1 this is `|x(T) − x̃₀|`.
pub fn boundary_residual(problem: &ProblemSpec, cfg: &SolverConfig, x: &WeightedSpline) -> Result<Vec<f64>> {
    let p = problem.map_params(cfg.eps)?;
    let value = if p.gamma_exp >= 1.0 {
        x.terminal_weighted()
    } else {
        SplineIntegrator::new(x).integrate(1.0 - p.gamma_exp, x.knots().start(), p.horizon)?
    };
    Ok(value
        .iter()
        .zip(&problem.x0_tilde)
        .map(|(v, x0)| (v - x0).abs())
        .collect())
}

/// Expected size of the boundary residual of an iterate built from an
/// integrand with weighted sup `integrand_sup`.
///
/// Terms: the part of `x₀` and of the `t^α` perturbation term cut off below ε,
/// the output projection error `Γ(γ)·Ω^q_A·‖ŷ‖`, and a roundoff floor.
pub fn residual_budget(
    problem: &ProblemSpec,
    cfg: &SolverConfig,
    omega_aq: f64,
    delta: &[f64],
    integrand_sup: &[f64],
) -> Result<Vec<f64>> {
    let p = problem.map_params(cfg.eps)?;
    let (g, a, big_t, e) = (p.gamma_exp, p.alpha, p.horizon, cfg.eps);
    Ok((0..problem.dim())
        .map(|c| {
            let cut = if g < 1.0 {
                let x0_part = problem.x0_tilde[c].abs()
                    * incomplete_beta(e / big_t, g, 1.0 - g).unwrap_or(f64::INFINITY)
                    / (gamma_pos(g) * gamma_pos(1.0 - g));
                let nu_part = delta[c].abs() / gamma_pos(a + 1.0) * (big_t - e).powf(-g)
                    * e.powf(a + 1.0)
                    / ((a + 1.0) * gamma_pos(1.0 - g));
                x0_part + nu_part
            } else {
                0.0
            };
            cut + gamma_pos(g) * omega_aq * integrand_sup[c] + 1e-10
        })
        .collect())
}

/// Runs the Picard loop until the node sup distance drops below `cfg.tol`.
pub fn solve_perturbed_ivp(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveResult> {
    let start = Instant::now();
    problem.validate()?;
    let mut warnings = Vec::new();
    let report = match check_assumptions(problem, cfg) {
        Ok(r) => {
            if r.any_fail() {
                warnings.push("assumption check failed; convergence is not certified".to_string());
            } else if !r.all_checkable_pass() {
                warnings.push("some assumptions could not be checked".to_string());
            }
            Some(r)
        }
        Err(e) => {
            warnings.push(format!("assumption check skipped: {e}"));
            None
        }
    };

    let p = problem.map_params(cfg.eps)?;
    let x0 = initial_iterate(problem, cfg)?;
    let mut x = x0.clone();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let image = apply_spline_F(problem.forcing.as_ref(), &x, &p)?;
        let next = x0.combine(1.0, &image.update, 1.0)?;
        check_domain(problem, &next)?;
        let delta = next.node_distance(&x);
        history.push(delta);
        iterations += 1;
        x = next;
        if delta < cfg.tol {
            break;
        }
        if iterations >= cfg.max_iter {
            let n = history.len();
            let ratio = if n >= 2 && history[n - 2] > 0.0 {
                history[n - 1] / history[n - 2]
            } else {
                f64::NAN
            };
            return Err(Error::NonConvergence {
                iterations,
                last_delta: delta,
                ratio,
            });
        }
    }

    let integrand = fit_integrand(problem.forcing.as_ref(), &x)?;
    let dt = delta_t(problem, cfg, &x)?;
    let residual = boundary_residual(problem, cfg, &x)?;
    let constants: Option<&ConvergenceConstants> = report.as_ref().map(|r| &r.constants);
    let omega_aq = constants.map(|c| c.omega_aq).unwrap_or(f64::NAN);
    let budget = residual_budget(problem, cfg, omega_aq, &dt, &integrand.node_sup())?;

    let (apriori, aposteriori) = match (constants, &problem.bound_m, &report) {
        (Some(c), Some(m), Some(r)) if r.a3s.verdict == crate::constants::Verdict::Pass => {
            let prior = apriori_error_bound_numerical(c, m, iterations).ok();
            let last = *history.last().unwrap();
            let post = posterior_bound(&c.q_star, last);
            (prior, post)
        }
        _ => (None, None),
    };

    Ok(SolveResult {
        solution: x,
        iterations,
        delta_t: dt,
        boundary_residual: residual,
        residual_budget: budget,
        apriori_bound: apriori,
        aposteriori_bound: aposteriori,
        history,
        wall_time: start.elapsed(),
        report,
        warnings,
    })
}

fn posterior_bound(q: &DMatrix<f64>, step: f64) -> Option<Vec<f64>> {
    let d = q.nrows();
    let inv = (DMatrix::identity(d, d) - q).try_inverse()?;
    let v = q * inv * nalgebra::DVector::from_element(d, step);
    Some(v.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{MonomialForcing, ZeroForcing};
    use std::sync::Arc;

    fn zero_problem(beta: f64) -> ProblemSpec {
        ProblemSpec::new(Arc::new(ZeroForcing { dim: 1 }), 0.5, beta, 1.0, vec![1.0]).unwrap()
    }

    #[test]
    fn zero_forcing_converges_immediately() {
        let pb = zero_problem(0.5);
        let cfg = SolverConfig::new(1e-10, 2, KnotSpec::Uniform { h: 0.25 });
        let r = solve_perturbed_ivp(&pb, &cfg).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.delta_t, vec![0.0]);
        let x0 = initial_iterate(&pb, &cfg).unwrap();
        assert_eq!(r.solution, x0);
        assert_eq!(iterate_once(&pb, &cfg, &x0).unwrap(), x0);
        assert!(r.boundary_residual[0] < 1e-6);
    }

    #[test]
    fn initial_iterate_is_singular_power() {
        let pb = zero_problem(0.5);
        let cfg = SolverConfig::new(1e-10, 1, KnotSpec::Uniform { h: 0.5 });
        let x0 = initial_iterate(&pb, &cfg).unwrap();
        for &t in &[1e-3f64, 0.3, 1.0] {
            let expect = t.powf(-0.25) / gamma_pos(0.75);
            assert!((x0.eval(t).unwrap()[0] - expect).abs() < 1e-13 * expect);
        }
        let caputo = zero_problem(1.0);
        let x0 = initial_iterate(&caputo, &cfg).unwrap();
        assert!((x0.eval(0.7).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn state_independent_forcing_is_idempotent() {
        let pb = ProblemSpec::new(Arc::new(MonomialForcing { k: 0.9 }), 0.5, 0.5, 3.0, vec![1.0]).unwrap();
        let cfg = SolverConfig::new(1e-10, 1, KnotSpec::Uniform { h: 0.5 });
        let x0 = initial_iterate(&pb, &cfg).unwrap();
        let x1 = iterate_once(&pb, &cfg, &x0).unwrap();
        let x2 = iterate_once(&pb, &cfg, &x1).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn config_rejects_bad_values() {
        let pb = zero_problem(0.5);
        let mut cfg = SolverConfig::new(0.0, 1, KnotSpec::Uniform { h: 0.5 });
        assert!(cfg.build_knots(&pb).is_err());
        cfg.eps = 1e-10;
        cfg.knots = KnotSpec::Graded { c: 1.0, h_max: 0.1 };
        assert!(cfg.build_knots(&pb).is_err());
    }
}
