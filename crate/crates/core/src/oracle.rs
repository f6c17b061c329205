//! Reference computations used to validate the spline solver: adaptive
//! quadrature of fractional integrals, the closed-form solution of the
//! monomial-forcing problem, a dense quadrature-based Picard solution of the
//! shifted integral equation, and a finite-difference Hilfer residual.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, parameter, Error, Result};
use crate::solver::ProblemSpec;
use crate::specfun::{gamma_pos, incomplete_beta, ln_gamma_pos};
use crate::splines::WeightedSpline;

/// Accuracy targets of the adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Maps `[a, b]` through a polynomial with vanishing derivatives at both
    /// ends, which softens algebraic endpoint singularities.
    pub endpoint_substitution: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-13,
            max_subdivisions: 4000,
            endpoint_substitution: true,
        }
    }
}

impl QuadratureSpec {
    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return parameter("quadrature tolerances must be positive");
        }
        Ok(())
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// 15-point Kronrod rule with the embedded 7-point Gauss error estimate.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if a == b {
        return Ok(0.0);
    }
    if spec.endpoint_substitution {
        // x = a + (b−a)φ(r) with φ(r) = r⁵(126 − 420r + 540r² − 315r³ + 70r⁴),
        // φ'(r) = 630r⁴(1−r)⁴; endpoint powers s^{−0.8} stay bounded
        let w = b - a;
        let g = move |r: f64| {
            let phi = (r.powi(5) * (126.0 + r * (-420.0 + r * (540.0 + r * (-315.0 + 70.0 * r))))).clamp(0.0, 1.0);
            let dphi = 630.0 * (r * (1.0 - r)).powi(4);
            let x = a + w * phi;
            // an endpoint reached by rounding carries no mass
            if dphi == 0.0 || x == a || x == b {
                0.0
            } else {
                f(x) * w * dphi
            }
        };
        adaptive(&g, 0.0, 1.0, spec)
    } else {
        adaptive(&f, a, b, spec)
    }
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    let mut parts = vec![(a, b, gk15(f, a, b))];
    loop {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if !total.is_finite() {
            return Err(Error::Quadrature {
                estimate: total,
                error: err,
            });
        }
        if err <= spec.abs_tol.max(spec.rel_tol * total.abs()) {
            return Ok(total);
        }
        if parts.len() >= spec.max_subdivisions {
            return Err(Error::Quadrature {
                estimate: total,
                error: err,
            });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            // interval exhausted in floating point; accept what we have
            let total: f64 = parts.iter().map(|p| p.2 .0).sum::<f64>() + gk15(f, lo, hi).0;
            return Ok(total);
        }
        parts.push((lo, mid, gk15(f, lo, mid)));
        parts.push((mid, hi, gk15(f, mid, hi)));
    }
}

/// `∫_a^∞ f`, mapped to `[0, 1)` by `s = a + u/(1−u)`.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let v = 1.0 - u;
            f(a + u / v) / (v * v)
        },
        0.0,
        1.0,
        spec,
    )
}

/// `(I_a^t)^μ y` by quadrature. The lower half `[a, m]` is integrated in `s`
/// directly, where the kernel is smooth; on `[m, t]` the substitution
/// `v = (t−s)^μ` turns the kernel into a constant, giving
/// `Γ(μ+1)^{−1} ∫₀^{(t−m)^μ} y(t − v^{1/μ}) dv`.
pub fn quad_frac_integral(
    y: impl Fn(f64) -> f64,
    mu: f64,
    a: f64,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(mu > 0.0) {
        return domain(format!("integration order must be positive, got {mu}"));
    }
    if a > t {
        return domain(format!("lower limit {a} exceeds t = {t}"));
    }
    if a == t {
        return Ok(0.0);
    }
    let m = 0.5 * (a + t);
    let part = QuadratureSpec {
        abs_tol: 0.5 * spec.abs_tol,
        ..*spec
    };
    let near = integrate(|s| (t - s).powf(mu - 1.0) * y(s), a, m, &part)?;
    let inv = 1.0 / mu;
    let far = integrate(|v| y(t - v.powf(inv)), 0.0, (t - m).powf(mu), &part)?;
    Ok(near / gamma_pos(mu) + far / gamma_pos(mu + 1.0))
}

/// Perturbation `ν = −Γ(ζ+1)Γ(k+1)/Γ(ζ+k+1)·T^k` of the monomial problem.
pub fn linear_nu(alpha: f64, beta_type: f64, k: f64, horizon: f64) -> f64 {
    let g = alpha + beta_type - alpha * beta_type;
    let z = 1.0 - g + alpha;
    -gamma_pos(z + 1.0) * (ln_gamma_pos(k + 1.0) - ln_gamma_pos(z + k + 1.0)).exp() * horizon.powf(k)
}

/// Exact solution of the perturbed problem with `f(t) = t^k`:
/// `x̃₀t^{γ−1}/Γ(γ) + Γ(k+1)/Γ(α+k+1)·t^{α+k} + ν t^α/Γ(α+1)`.
pub fn linear_closed_form(alpha: f64, beta_type: f64, k: f64, x0_tilde: f64, horizon: f64, t: f64) -> f64 {
    let g = alpha + beta_type - alpha * beta_type;
    let nu = linear_nu(alpha, beta_type, k, horizon);
    x0_tilde * t.powf(g - 1.0) / gamma_pos(g)
        + (ln_gamma_pos(k + 1.0) - ln_gamma_pos(alpha + k + 1.0)).exp() * t.powf(alpha + k)
        + nu * t.powf(alpha) / gamma_pos(alpha + 1.0)
}

/// `ν_ε = −Γ(ζ+1)T^{−ζ}I_ε^ζ s^k(T)`, the shifted perturbation.
pub fn linear_nu_eps(alpha: f64, beta_type: f64, k: f64, horizon: f64, eps: f64) -> f64 {
    let g = alpha + beta_type - alpha * beta_type;
    let z = 1.0 - g + alpha;
    let tail = right_local(z, k, eps, horizon);
    -gamma_pos(z + 1.0) * horizon.powf(-z) * tail
}

fn right_local(mu: f64, k: f64, b: f64, t: f64) -> f64 {
    t.powf(mu + k) / gamma_pos(mu) * incomplete_beta(1.0 - b / t, mu, k + 1.0).unwrap_or(f64::NAN)
}

/// Exact solution of the shifted integral equation with `f(t) = t^k`:
/// `x̃₀t^{γ−1}/Γ(γ) + I_ε^α s^k(t) + ν_ε t^α/Γ(α+1)`.
pub fn linear_closed_form_eps(
    alpha: f64,
    beta_type: f64,
    k: f64,
    x0_tilde: f64,
    horizon: f64,
    eps: f64,
    t: f64,
) -> f64 {
    let g = alpha + beta_type - alpha * beta_type;
    let nu = linear_nu_eps(alpha, beta_type, k, horizon, eps);
    let main = if t > eps { right_local(alpha, k, eps, t) } else { 0.0 };
    x0_tilde * t.powf(g - 1.0) / gamma_pos(g) + main + nu * t.powf(alpha) / gamma_pos(alpha + 1.0)
}

/// Tabulated solution of the shifted integral equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub gamma_exp: f64,
    pub times: Vec<f64>,
    /// Weighted values `t^{1−γ}x(t)`, one vector per time.
    pub weighted: Vec<Vec<f64>>,
    pub delta_t: Vec<f64>,
    pub iterations: usize,
}

impl ReferenceSolution {
    /// Weighted value at `t` by monotone cubic Hermite interpolation.
    pub fn weighted_at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        let d = self.weighted[0].len();
        let t = t.clamp(self.times[0], self.times[n - 1]);
        let i = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        (0..d).map(|c| hermite(&self.times, &self.weighted, c, i, t)).collect()
    }

    /// Solution value `x(t)`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let s = t.powf(self.gamma_exp - 1.0);
        self.weighted_at(t).into_iter().map(|w| w * s).collect()
    }
}

fn slope(ts: &[f64], ws: &[Vec<f64>], c: usize, i: usize) -> f64 {
    // Fritsch–Carlson style limited three-point slope
    let n = ts.len();
    let secant = |j: usize| (ws[j + 1][c] - ws[j][c]) / (ts[j + 1] - ts[j]);
    if i == 0 {
        return secant(0);
    }
    if i == n - 1 {
        return secant(n - 2);
    }
    let (l, r) = (secant(i - 1), secant(i));
    if l * r <= 0.0 {
        return 0.0;
    }
    let (hl, hr) = (ts[i] - ts[i - 1], ts[i + 1] - ts[i]);
    let w1 = 2.0 * hr + hl;
    let w2 = hr + 2.0 * hl;
    (w1 + w2) / (w1 / l + w2 / r)
}

fn hermite(ts: &[f64], ws: &[Vec<f64>], c: usize, i: usize, t: f64) -> f64 {
    let h = ts[i + 1] - ts[i];
    let u = (t - ts[i]) / h;
    let (y0, y1) = (ws[i][c], ws[i + 1][c]);
    let (m0, m1) = (slope(ts, ws, c, i) * h, slope(ts, ws, c, i + 1) * h);
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * y0 + (u3 - 2.0 * u2 + u) * m0 + (-2.0 * u3 + 3.0 * u2) * y1 + (u3 - u2) * m1
}

/// Picard solution of the shifted integral equation on a dense graded grid of
/// `dense_grid_size` points, with every fractional integral evaluated by
/// adaptive quadrature of the interpolated iterate.
pub fn reference_solution_eps(problem: &ProblemSpec, eps: f64, dense_grid_size: usize) -> Result<ReferenceSolution> {
    reference_solution_eps_with(problem, eps, dense_grid_size, 1e-12, 200)
}

pub fn reference_solution_eps_with(
    problem: &ProblemSpec,
    eps: f64,
    dense_grid_size: usize,
    tol: f64,
    max_iter: usize,
) -> Result<ReferenceSolution> {
    if dense_grid_size < 8 {
        return parameter("reference grid needs at least 8 points");
    }
    let p = problem.map_params(eps)?;
    if !(eps > 0.0) {
        return parameter("reference solution needs eps > 0");
    }
    let (g, a, z, big_t) = (p.gamma_exp, p.alpha, p.zeta, p.horizon);
    let d = problem.dim();
    // geometric near ε until the spacing reaches the uniform width
    let h_uniform = (big_t - eps) / dense_grid_size as f64;
    let mut times = vec![eps];
    let ratio = 1.0 + 8.0 / dense_grid_size as f64;
    let mut t = eps;
    while t < big_t {
        let step = h_uniform.min(t * (ratio - 1.0)).max(1e-300);
        t = (t + step).min(big_t);
        if big_t - t < 1e-12 * big_t {
            t = big_t;
        }
        times.push(t);
    }
    let w0: Vec<f64> = problem.x0_tilde.iter().map(|x| x / gamma_pos(g)).collect();
    let spec = QuadratureSpec {
        abs_tol: 1e-12,
        rel_tol: 1e-11,
        max_subdivisions: 2000,
        endpoint_substitution: true,
    };
    let mut current = ReferenceSolution {
        gamma_exp: g,
        times: times.clone(),
        weighted: vec![w0.clone(); times.len()],
        delta_t: vec![0.0; d],
        iterations: 0,
    };
    let forcing = problem.forcing.clone();
    let state_free = !forcing.depends_on_state();
    for it in 1..=max_iter {
        let prev = &current;
        let y = |s: f64, c: usize| -> f64 {
            let x = prev.eval(s);
            let mut out = vec![0.0; d];
            forcing.eval(s, &x, &mut out);
            out[c]
        };
        let mut delta = vec![0.0; d];
        for c in 0..d {
            let tail = quad_frac_integral(|s| y(s, c), z, eps, big_t, &spec)?;
            delta[c] = -gamma_pos(z + 1.0) * big_t.powf(-z) * tail;
        }
        let rows: Vec<Result<Vec<f64>>> = times
            .par_iter()
            .map(|&t| {
                let mut row = Vec::with_capacity(d);
                for c in 0..d {
                    let main = if t > eps {
                        quad_frac_integral(|s| y(s, c), a, eps, t, &spec)?
                    } else {
                        0.0
                    };
                    let fx = main + delta[c] * t.powf(a) / gamma_pos(a + 1.0);
                    row.push(w0[c] + t.powf(1.0 - g) * fx);
                }
                Ok(row)
            })
            .collect();
        let mut weighted = Vec::with_capacity(times.len());
        for r in rows {
            weighted.push(r?);
        }
        let change = weighted
            .iter()
            .zip(&prev.weighted)
            .flat_map(|(u, v)| u.iter().zip(v).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        current = ReferenceSolution {
            gamma_exp: g,
            times: times.clone(),
            weighted,
            delta_t: delta,
            iterations: it,
        };
        if change < tol || (state_free && it >= 1) {
            return Ok(current);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_delta: f64::NAN,
        ratio: f64::NAN,
    })
}

/// Statistics of the Hilfer residual `|D^{α,β}x − f(t, x) − ν|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub samples: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max: f64,
    pub mean: f64,
    pub skipped: Vec<(f64, String)>,
}

/// `(I_a^t)^μ y` for a function that is smooth between the given breakpoints:
/// every piece left of the one containing `t` has a smooth kernel and is
/// integrated directly, the last one through [`quad_frac_integral`].
pub fn quad_frac_integral_piecewise(
    y: impl Fn(f64) -> f64,
    mu: f64,
    a: f64,
    t: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&b| b > a && b < t));
    let last = *pts.last().unwrap();
    let inv = 1.0 / gamma_pos(mu);
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += inv * integrate(|s| (t - s).powf(mu - 1.0) * y(s), w[0], w[1], spec)?;
    }
    Ok(total + quad_frac_integral(&y, mu, last, t, spec)?)
}

/// Hilfer derivative `I^{β(1−α)} d/dt I^{(1−β)(1−α)} x` of a scalar function
/// at `t`, with all integrals starting at `lower`.
pub fn hilfer_derivative(
    x: &(dyn Fn(f64) -> f64 + Sync),
    alpha: f64,
    beta_type: f64,
    lower: f64,
    t: f64,
) -> Result<f64> {
    hilfer_derivative_piecewise(x, alpha, beta_type, lower, t, &[])
}

/// [`hilfer_derivative`] for a function with kinks at `breaks`. With
/// `lower > 0` the function must be bounded near `lower`; the inner integral
/// then vanishes there and the derivative equals `d/dt I^{1−α} x`.
pub fn hilfer_derivative_piecewise(
    x: &(dyn Fn(f64) -> f64 + Sync),
    alpha: f64,
    beta_type: f64,
    lower: f64,
    t: f64,
    breaks: &[f64],
) -> Result<f64> {
    if !(t > lower) {
        return domain(format!("t = {t} must exceed the lower limit {lower}"));
    }
    let spec = QuadratureSpec {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_subdivisions: 400,
        endpoint_substitution: true,
    };
    let (inner_order, outer_order) = if lower > 0.0 {
        (1.0 - alpha, 0.0)
    } else {
        ((1.0 - beta_type) * (1.0 - alpha), beta_type * (1.0 - alpha))
    };
    let inner = |s: f64| -> Result<f64> {
        if inner_order == 0.0 {
            Ok(x(s))
        } else {
            quad_frac_integral_piecewise(x, inner_order, lower, s, breaks, &spec)
                .or_else(accept_small_error)
        }
    };
    // central difference with one Richardson step
    let deriv = |s: f64| -> Result<f64> {
        let h = (1e-5 * s).min(0.5 * (s - lower));
        let d1 = (inner(s + h)? - inner(s - h)?) / (2.0 * h);
        let d2 = (inner(s + 0.5 * h)? - inner(s - 0.5 * h)?) / h;
        Ok((4.0 * d2 - d1) / 3.0)
    };
    if outer_order == 0.0 {
        return deriv(t);
    }
    let failure = std::sync::Mutex::new(None);
    let v = quad_frac_integral_piecewise(
        |s| {
            deriv(s).unwrap_or_else(|e| {
                *failure.lock().unwrap() = Some(e);
                0.0
            })
        },
        outer_order,
        lower,
        t,
        breaks,
        // the differenced integrand carries noise near 1e−8 relative
        &QuadratureSpec {
            abs_tol: 1e-8,
            rel_tol: 1e-7,
            max_subdivisions: 200,
            endpoint_substitution: true,
        },
    )
    .or_else(accept_small_error)?;
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(v)
}

fn accept_small_error(e: Error) -> Result<f64> {
    match e {
        Error::Quadrature { estimate, error } if estimate.is_finite() && error <= 1e-6 * estimate.abs().max(1.0) => {
            Ok(estimate)
        }
        e => Err(e),
    }
}

/// Residual of the perturbed equation `D^{α,β}x = f(t, x) + ν` for a scalar
/// spline solution at the given samples. Samples within 1e−3 relative
/// distance of a knot, or of the left endpoint, are skipped.
pub fn hilfer_residual(
    x: &WeightedSpline,
    problem: &ProblemSpec,
    nu: f64,
    t_samples: &[f64],
) -> Result<ResidualStats> {
    if x.dim() != 1 || problem.dim() != 1 {
        return parameter("the Hilfer residual is implemented for scalar problems");
    }
    let lower = x.knots().start();
    let knots = x.knots().breakpoints().to_vec();
    let eval = |t: f64| x.eval(t.clamp(lower, x.knots().end())).map(|v| v[0]).unwrap_or(f64::NAN);
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for &t in t_samples {
        let near_knot = knots.iter().any(|&k| (t - k).abs() < 1e-3 * t.max(1e-300));
        if t <= lower * 1.001 || t > x.knots().end() {
            skipped.push((t, "outside the interior of [eps, T]".to_string()));
        } else if near_knot {
            skipped.push((t, "too close to a knot".to_string()));
        } else {
            samples.push(t);
        }
    }
    let residuals: Vec<Result<f64>> = samples
        .par_iter()
        .map(|&t| {
            let d = hilfer_derivative_piecewise(&eval, problem.alpha, problem.beta_type, lower, t, &knots)?;
            let xt = eval(t);
            let mut f = [0.0];
            problem.forcing.eval(t, &[xt], &mut f);
            Ok((d - f[0] - nu).abs())
        })
        .collect();
    let mut out = Vec::with_capacity(residuals.len());
    for r in residuals {
        out.push(r?);
    }
    let max = out.iter().copied().fold(0.0, f64::max);
    let mean = if out.is_empty() { 0.0 } else { out.iter().sum::<f64>() / out.len() as f64 };
    Ok(ResidualStats {
        samples,
        residuals: out,
        max,
        mean,
        skipped,
    })
}
