//! Convergence constants of the iteration maps and the assumption checker.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{domain, parameter, Error, Result};
use crate::fracops::MapParams;
use crate::solver::{Domain, ProblemSpec, SolverConfig};
use crate::specfun::{beta_pos, gamma_pos, incomplete_beta};
use crate::splines::KnotCollection;

const XI_GRID: usize = 4096;
const XI_GRID_FLOOR: f64 = 1e-12;
const GOLDEN_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 5000;
const POWER_TOL: f64 = 1e-12;
/// Safety factor of the Bernstein error estimate.
const BERNSTEIN_FACTOR: f64 = 1.25;

/// Pointwise bound `ξ(t)` on `|t^{1−γ}F y(t)| / ‖y‖`.
pub fn xi_of_t(p: &MapParams, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= p.horizon) {
        return domain(format!("t = {t} outside (0, T]"));
    }
    Ok(xi_unchecked(p, t))
}

fn xi_unchecked(p: &MapParams, t: f64) -> f64 {
    let (a, g, z, big_t) = (p.alpha, p.gamma_exp, p.zeta, p.horizon);
    let r = (t / big_t).min(1.0);
    let scale = t.powf(z) * big_t.powf(a - z);
    let direct = gamma_pos(g) * t.powf(a) / gamma_pos(g + a);
    let left = ((1.0 - g) / a - 1.0) * scale / gamma_pos(a) * incomplete_beta(r, g, z).unwrap_or(0.0);
    let right = z * scale / gamma_pos(a + 1.0) * incomplete_beta(1.0 - r, z, g).unwrap_or(0.0);
    direct + left + right
}

/// `Ξ = sup_{t∈(0,T]} ξ(t)`: log-spaced scan refined by golden-section search.
pub fn xi_sup(p: &MapParams) -> f64 {
    let big_t = p.horizon;
    let lo = (big_t * XI_GRID_FLOOR).ln();
    let hi = big_t.ln();
    let grid: Vec<f64> = (0..XI_GRID)
        .map(|i| (lo + (hi - lo) * i as f64 / (XI_GRID - 1) as f64).exp().min(big_t))
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&t| xi_unchecked(p, t)).collect();
    let (imax, &vmax) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let mut best = vmax.max(xi_unchecked(p, big_t));
    if imax > 0 && imax + 1 < XI_GRID {
        best = best.max(golden_max(|t| xi_unchecked(p, t), grid[imax - 1], grid[imax + 1]));
    }
    best
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > GOLDEN_TOL * b.abs() {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b)).max(fc).max(fd)
}

/// Weighted distance bound `Θ_ε` between the shifted and unshifted maps.
pub fn theta_eps(p: &MapParams) -> Result<f64> {
    if !(p.eps > 0.0 && p.eps < p.horizon) {
        return domain(format!("theta needs 0 < eps < T, got eps = {}", p.eps));
    }
    let (a, g, z, big_t, e) = (p.alpha, p.gamma_exp, p.zeta, p.horizon, p.eps);
    Ok(e.powf(a) / gamma_pos(a) * beta_pos(g, a)
        + z * big_t.powf(a) / gamma_pos(a + 1.0) * incomplete_beta(e / big_t, g, z)?)
}

/// Weighted modulus of continuity `Ω(t, t′)` of the shifted map image.
pub fn omega(p: &MapParams, t: f64, t_prime: f64) -> Result<f64> {
    if !(t < t_prime) {
        return domain(format!("omega needs t < t', got ({t}, {t_prime})"));
    }
    if !(t > 0.0) {
        return domain(format!("omega needs t > 0, got {t}"));
    }
    let (a, g, z, big_t) = (p.alpha, p.gamma_exp, p.zeta, p.horizon);
    let dt = t_prime - t;
    Ok(dt.powf(a) / gamma_pos(a + 1.0) * (a * beta_pos(g, a) + 2.0 * (t_prime / t).powf(1.0 - g))
        + dt.powf(z) * big_t.powf(a - z) / gamma_pos(a + 1.0) * z * beta_pos(g, z))
}

/// Spline error constant `Ω^q_A`: the worst pair in interval `i` is
/// `(t_i, min(t_i + h_i/√q, t_{i+1}))`.
pub fn omega_spline(knots: &KnotCollection, q: usize, p: &MapParams) -> Result<f64> {
    if q == 0 {
        return parameter("spline order must be at least 1");
    }
    let sq = (q as f64).sqrt();
    let mut worst = 0.0f64;
    for i in 0..knots.len() {
        let (a, b) = knots.interval(i);
        if !(b > a) || a <= 0.0 {
            return Err(Error::DegenerateInterval { a, b });
        }
        let tp = (a + (b - a) / sq).min(b);
        worst = worst.max(omega(p, a, tp)?);
    }
    Ok(BERNSTEIN_FACTOR * worst)
}

/// Dense-grid version of [`omega_spline`] scanning `pairs` left points per interval.
pub fn omega_spline_dense(knots: &KnotCollection, q: usize, p: &MapParams, pairs: usize) -> Result<f64> {
    let sq = (q as f64).sqrt();
    let mut worst = 0.0f64;
    for i in 0..knots.len() {
        let (a, b) = knots.interval(i);
        let reach = (b - a) / sq;
        for k in 0..pairs {
            let t = a + (b - a) * k as f64 / pairs as f64;
            let tp = (t + reach).min(b);
            if tp > t {
                worst = worst.max(omega(p, t, tp)?);
            }
        }
    }
    Ok(BERNSTEIN_FACTOR * worst)
}

/// Spectral radius of an entrywise nonnegative square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return parameter("spectral radius needs a square matrix");
    }
    if m.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return domain("spectral radius needs finite nonnegative entries");
    }
    let n = m.nrows();
    if n == 0 || m.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    // power iteration from a positive vector; the Perron root dominates
    let mut v = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = m * &v;
        let norm = w.iter().map(|x| x.abs()).sum::<f64>();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm / v.iter().map(|x| x.abs()).sum::<f64>();
        v = w / norm;
        if (next - lambda).abs() <= POWER_TOL * next {
            return Ok(next);
        }
        lambda = next;
    }
    // slow or oscillating convergence (e.g. cyclic matrices): use the spectrum
    let eig = m.clone().complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Computed constants of a configured problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConstants {
    pub xi: f64,
    pub theta_eps: f64,
    pub omega_aq: f64,
    /// `Q = ΞK`
    pub q: DMatrix<f64>,
    pub rho_q: f64,
    /// `Q* = (Ξ+Ω^q_A)K`
    pub q_star: DMatrix<f64>,
    pub rho_q_star: f64,
}

impl ConvergenceConstants {
    pub fn compute(p: &MapParams, knots: &KnotCollection, q: usize, lipschitz: &DMatrix<f64>) -> Result<Self> {
        let xi = xi_sup(p);
        let theta = theta_eps(p)?;
        let omega_aq = omega_spline(knots, q, p)?;
        let qm = lipschitz * xi;
        let qs = lipschitz * (xi + omega_aq);
        Ok(Self {
            xi,
            theta_eps: theta,
            omega_aq,
            rho_q: spectral_radius(&qm)?,
            rho_q_star: spectral_radius(&qs)?,
            q: qm,
            q_star: qs,
        })
    }
}

/// `Q^n (I−Q)^{−1} Ξ m` for the exact Picard sequence.
pub fn apriori_error_bound(constants: &ConvergenceConstants, m: &[f64], iterations: usize) -> Result<Vec<f64>> {
    geometric_bound(&constants.q, constants.rho_q, constants.xi, m, iterations)
}

/// Spline-iterate analogue `Q*^n (I−Q*)^{−1} (Ξ+Ω^q_A) m`.
pub fn apriori_error_bound_numerical(
    constants: &ConvergenceConstants,
    m: &[f64],
    iterations: usize,
) -> Result<Vec<f64>> {
    geometric_bound(
        &constants.q_star,
        constants.rho_q_star,
        constants.xi + constants.omega_aq,
        m,
        iterations,
    )
}

fn geometric_bound(q: &DMatrix<f64>, rho: f64, scale: f64, m: &[f64], n: usize) -> Result<Vec<f64>> {
    if rho >= 1.0 {
        return Err(Error::BoundUnavailable(rho));
    }
    let d = q.nrows();
    if m.len() != d {
        return parameter(format!("bound vector has length {}, expected {d}", m.len()));
    }
    let inv = (DMatrix::identity(d, d) - q)
        .try_inverse()
        .ok_or(Error::BoundUnavailable(rho))?;
    let mut v = inv * nalgebra::DVector::from_iterator(d, m.iter().map(|x| x * scale));
    for _ in 0..n {
        v = q * v;
    }
    Ok(v.iter().copied().collect())
}

/// Outcome of a single assumption check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotCheckable,
    UserCertified,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotCheckable => "not-checkable",
            Verdict::UserCertified => "user-certified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub verdict: Verdict,
    pub witness: String,
}

impl AssumptionCheck {
    fn new(verdict: Verdict, witness: impl Into<String>) -> Self {
        Self {
            verdict,
            witness: witness.into(),
        }
    }
}

/// Verdicts for the exact (A.1–A.3) and spline (A.1*–A.3*) assumption sets.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub constants: ConvergenceConstants,
    pub lipschitz_derived: bool,
    pub a1: AssumptionCheck,
    pub a2: AssumptionCheck,
    pub a3: AssumptionCheck,
    pub a1s: AssumptionCheck,
    pub a2s: AssumptionCheck,
    pub a3s: AssumptionCheck,
}

impl AssumptionReport {
    pub fn checks(&self) -> [(&'static str, &AssumptionCheck); 6] {
        [
            ("A1", &self.a1),
            ("A2", &self.a2),
            ("A3", &self.a3),
            ("A1*", &self.a1s),
            ("A2*", &self.a2s),
            ("A3*", &self.a3s),
        ]
    }

    /// True when no check failed and none was left unchecked.
    pub fn all_checkable_pass(&self) -> bool {
        self.checks()
            .iter()
            .all(|(_, c)| matches!(c.verdict, Verdict::Pass | Verdict::UserCertified))
    }

    pub fn any_fail(&self) -> bool {
        self.checks().iter().any(|(_, c)| c.verdict == Verdict::Fail)
    }

    /// Machine-readable `key = value` pairs.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let c = &self.constants;
        let mut kv = vec![
            ("xi".to_string(), format!("{:.10e}", c.xi)),
            ("theta_eps".to_string(), format!("{:.10e}", c.theta_eps)),
            ("omega_aq".to_string(), format!("{:.10e}", c.omega_aq)),
            ("xi_plus_omega".to_string(), format!("{:.10e}", c.xi + c.omega_aq)),
            ("rho_q".to_string(), format!("{:.10e}", c.rho_q)),
            ("rho_q_star".to_string(), format!("{:.10e}", c.rho_q_star)),
        ];
        for (name, check) in self.checks() {
            kv.push((name.to_lowercase().replace('*', "s"), check.verdict.as_str().to_string()));
        }
        kv
    }

    /// Human-readable block.
    pub fn to_text(&self) -> String {
        let c = &self.constants;
        let mut s = String::new();
        let _ = writeln!(s, "Xi           = {:.6e}", c.xi);
        let _ = writeln!(s, "Theta_eps    = {:.6e}", c.theta_eps);
        let _ = writeln!(s, "Omega^q_A    = {:.6e}", c.omega_aq);
        let _ = writeln!(s, "Xi + Omega   = {:.6e}", c.xi + c.omega_aq);
        let _ = writeln!(s, "rho(Q)       = {:.6e}", c.rho_q);
        let _ = writeln!(s, "rho(Q*)      = {:.6e}", c.rho_q_star);
        for (name, check) in self.checks() {
            let _ = writeln!(s, "{name:<4} {:<15} {}", check.verdict.as_str(), check.witness);
        }
        s
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn ball_check(domain: &Domain, center: &[f64], radius: Option<Vec<f64>>, label: &str) -> AssumptionCheck {
    match domain {
        Domain::AllSpace => AssumptionCheck::new(Verdict::Pass, "D = all space"),
        Domain::Box { lower, upper } => {
            let Some(r) = radius else {
                return AssumptionCheck::new(Verdict::NotCheckable, "bound m not declared");
            };
            let inside = (0..center.len())
                .all(|c| center[c] - r[c] >= lower[c] && center[c] + r[c] <= upper[c]);
            let witness = format!(
                "center {} radius {label} = {} within box {}..{}",
                fmt_vec(center),
                fmt_vec(&r),
                fmt_vec(lower),
                fmt_vec(upper)
            );
            AssumptionCheck::new(if inside { Verdict::Pass } else { Verdict::Fail }, witness)
        }
    }
}

/// Evaluates the assumption sets for a configured problem.
pub fn check_assumptions(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<AssumptionReport> {
    let p = problem.map_params(cfg.eps)?;
    let knots = cfg.build_knots(problem)?;
    let d = problem.dim();
    let (k, derived) = match (&problem.lipschitz, problem.forcing.depends_on_state()) {
        (Some(k), _) => (Some(k.clone()), false),
        (None, false) => (Some(DMatrix::zeros(d, d)), true),
        (None, true) => (None, false),
    };
    let k_for_constants = k.clone().unwrap_or_else(|| DMatrix::zeros(d, d));
    let constants = ConvergenceConstants::compute(&p, &knots, cfg.q, &k_for_constants)?;
    let center: Vec<f64> = problem
        .x0_tilde
        .iter()
        .map(|x| x / gamma_pos(p.gamma_exp))
        .collect();
    let m = problem.bound_m.clone();
    let radius = |s: f64| m.as_ref().map(|m| m.iter().map(|v| v * s).collect::<Vec<f64>>());

    let a1 = ball_check(&problem.domain, &center, radius(constants.xi), "Xi*m");
    let a1s = ball_check(
        &problem.domain,
        &center,
        radius(constants.xi + constants.omega_aq),
        "(Xi+Omega)*m",
    );
    let a2 = match (&m, &k) {
        (Some(m), Some(k)) => AssumptionCheck::new(
            Verdict::UserCertified,
            format!(
                "m = {}, K = {}{}",
                fmt_vec(m),
                fmt_vec(k.as_slice()),
                if derived { " (forcing independent of x)" } else { "" }
            ),
        ),
        (None, _) => AssumptionCheck::new(Verdict::NotCheckable, "bound m not declared"),
        (_, None) => AssumptionCheck::new(Verdict::NotCheckable, "Lipschitz matrix K not declared"),
    };
    let spectral = |rho: f64| match &k {
        Some(_) => AssumptionCheck::new(
            if rho < 1.0 { Verdict::Pass } else { Verdict::Fail },
            format!("spectral radius {rho:.6e} < 1"),
        ),
        None => AssumptionCheck::new(Verdict::NotCheckable, "Lipschitz matrix K not declared"),
    };
    Ok(AssumptionReport {
        a3: spectral(constants.rho_q),
        a3s: spectral(constants.rho_q_star),
        a2s: a2.clone(),
        a1,
        a2,
        a1s,
        constants,
        lipschitz_derived: derived,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
        let d = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.7]);
        assert!((spectral_radius(&d).unwrap() - 0.7).abs() < 1e-10);
        let h = DMatrix::from_element(2, 2, 0.5);
        assert!((spectral_radius(&h).unwrap() - 1.0).abs() < 1e-10);
        let cyclic = DMatrix::from_row_slice(2, 2, &[0.0, 0.4, 0.9, 0.0]);
        assert!((spectral_radius(&cyclic).unwrap() - 0.6).abs() < 1e-10);
        let neg = DMatrix::from_row_slice(1, 1, &[-0.1]);
        assert!(spectral_radius(&neg).is_err());
    }

    #[test]
    fn xi_vanishes_at_origin() {
        let p = MapParams::new(0.75, 0.4, 0.5, 1e-10).unwrap();
        assert!(xi_of_t(&p, 1e-14).unwrap() < 1e-8);
        assert!(xi_of_t(&p, 0.0).is_err());
        assert!(xi_of_t(&p, 0.6).is_err());
        let sup = xi_sup(&p);
        assert!(sup >= xi_of_t(&p, 0.5).unwrap());
        assert!(sup > 0.0);
    }

    #[test]
    fn theta_shrinks_with_eps() {
        let p = MapParams::new(0.5, 0.5, 3.0, 1e-10).unwrap();
        let th = theta_eps(&p).unwrap();
        assert!(th > 0.0 && th < 1e-4);
        let bigger = theta_eps(&p.with_eps(1e-6).unwrap()).unwrap();
        assert!(bigger > th);
        assert!(theta_eps(&p.with_eps(0.0).unwrap()).is_err());
    }

    #[test]
    fn omega_basic() {
        let p = MapParams::new(0.5, 1.0, 3.0, 1e-10).unwrap();
        assert!(omega(&p, 1.0, 1.0).is_err());
        let small = omega(&p, 1.0, 1.0 + 1e-12).unwrap();
        assert!(small < 1e-5);
        let a = omega(&p, 1.0, 1.1).unwrap();
        let b = omega(&p, 1.0, 1.2).unwrap();
        assert!(b > a);
    }

    #[test]
    fn bound_examples() {
        let zero = ConvergenceConstants {
            xi: 0.5,
            theta_eps: 0.0,
            omega_aq: 0.1,
            q: DMatrix::zeros(1, 1),
            rho_q: 0.0,
            q_star: DMatrix::zeros(1, 1),
            rho_q_star: 0.0,
        };
        assert_eq!(apriori_error_bound(&zero, &[1.0], 1).unwrap(), vec![0.0]);
        let scalar = ConvergenceConstants {
            q: DMatrix::from_element(1, 1, 0.7064),
            rho_q: 0.7064,
            ..zero.clone()
        };
        let b1 = apriori_error_bound(&scalar, &[2.0], 3).unwrap()[0];
        let b2 = apriori_error_bound(&scalar, &[2.0], 4).unwrap()[0];
        assert!((b2 / b1 - 0.7064).abs() < 1e-14);
        let diag = ConvergenceConstants {
            q: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]),
            rho_q: 0.5,
            ..zero.clone()
        };
        let b = apriori_error_bound(&diag, &[1.0, 1.0], 2).unwrap();
        assert!((b[0] - 0.25 / 0.5 * 0.5).abs() < 1e-14);
        assert!((b[1] - 0.0625 / 0.75 * 0.5).abs() < 1e-14);
        let bad = ConvergenceConstants {
            rho_q: 1.2,
            q: DMatrix::from_element(1, 1, 1.2),
            ..zero
        };
        assert!(matches!(
            apriori_error_bound(&bad, &[1.0], 1),
            Err(Error::BoundUnavailable(_))
        ));
    }
}
