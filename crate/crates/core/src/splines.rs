//! Knot collections, Bernstein polynomials and piecewise Bernstein splines of
//! weighted functions `w(t) = t^{1−γ}x(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, parameter, Error, Result};

/// Relative width below which a trailing interval is merged into its neighbour.
const DEGENERATE_WIDTH: f64 = 1e-12;

/// Ordered breakpoints `t₀ < t₁ < … < t_{k+1}` defining the intervals
/// `[t_i, t_{i+1})`, the last one closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KnotCollection {
    breakpoints: Vec<f64>,
}

impl TryFrom<Vec<f64>> for KnotCollection {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        KnotCollection::new(v)
    }
}

impl From<KnotCollection> for Vec<f64> {
    fn from(k: KnotCollection) -> Self {
        k.breakpoints
    }
}

impl KnotCollection {
    pub fn new(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return parameter("a knot collection needs at least two breakpoints");
        }
        if !(breakpoints[0] >= 0.0) || breakpoints.iter().any(|b| !b.is_finite()) {
            return parameter("breakpoints must be finite and nonnegative");
        }
        for w in breakpoints.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::DegenerateInterval { a: w[0], b: w[1] });
            }
        }
        Ok(Self { breakpoints })
    }

    /// Equal widths `h` starting at `eps`, the last breakpoint clipped to `horizon`.
    pub fn uniform(eps: f64, horizon: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return parameter(format!("knot width must be positive, got {h}"));
        }
        if !(eps >= 0.0 && eps < horizon) {
            return parameter(format!("need 0 <= eps < T, got eps = {eps}, T = {horizon}"));
        }
        let mut pts = vec![eps];
        let mut i = 1usize;
        loop {
            let t = eps + i as f64 * h;
            if t >= horizon {
                break;
            }
            pts.push(t);
            i += 1;
        }
        pts.push(horizon);
        Self::new(merge_degenerate_tail(pts, horizon))
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Left endpoint `t₀`.
    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    /// Right endpoint (the horizon T).
    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Number of intervals.
    pub fn len(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.breakpoints[i], self.breakpoints[i + 1])
    }

    pub fn width(&self, i: usize) -> f64 {
        self.breakpoints[i + 1] - self.breakpoints[i]
    }

    pub fn max_width(&self) -> f64 {
        (0..self.len()).map(|i| self.width(i)).fold(0.0, f64::max)
    }

    /// Index of the interval containing `t`; interior knots belong to the
    /// interval on their right.
    pub fn locate(&self, t: f64) -> Option<usize> {
        if !(t >= self.start() && t <= self.end()) {
            return None;
        }
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        Some(idx.saturating_sub(1).min(self.len() - 1))
    }
}

fn merge_degenerate_tail(mut pts: Vec<f64>, horizon: f64) -> Vec<f64> {
    let n = pts.len();
    if n >= 3 && pts[n - 1] - pts[n - 2] < DEGENERATE_WIDTH * horizon {
        pts.remove(n - 2);
    }
    pts
}

/// Parameters of the graded knot rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradedKnotParams {
    /// Growth bound on `(t_{i+1}/t_i)^{1−γ}`.
    pub c: f64,
    pub h_max: f64,
    pub eps: f64,
    pub horizon: f64,
}

impl GradedKnotParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 1.0) {
            return parameter(format!("grading bound c must exceed 1, got {}", self.c));
        }
        if !(self.h_max > 0.0) {
            return parameter(format!("h_max must be positive, got {}", self.h_max));
        }
        if !(self.eps > 0.0 && self.eps < self.horizon) {
            return parameter(format!(
                "need 0 < eps < T, got eps = {}, T = {}",
                self.eps, self.horizon
            ));
        }
        Ok(())
    }
}

/// Graded knots with widths `min(h_max, (c^{1/(1−γ)} − 1)·t_i)`, so that every
/// ratio satisfies `(t_{i+1}/t_i)^{1−γ} ≤ c`; uniform `h_max` when γ = 1.
pub fn graded_knots(params: &GradedKnotParams, gamma_exp: f64) -> Result<KnotCollection> {
    params.validate()?;
    if !(gamma_exp > 0.0 && gamma_exp <= 1.0) {
        return parameter(format!("gamma must lie in (0, 1], got {gamma_exp}"));
    }
    let growth = if gamma_exp < 1.0 {
        params.c.powf(1.0 / (1.0 - gamma_exp)) - 1.0
    } else {
        f64::INFINITY
    };
    let mut pts = vec![params.eps];
    let mut t = params.eps;
    loop {
        let h = params.h_max.min(growth * t);
        let next = t + h;
        if next >= params.horizon {
            break;
        }
        pts.push(next);
        t = next;
    }
    pts.push(params.horizon);
    KnotCollection::new(merge_degenerate_tail(pts, params.horizon))
}

/// Evaluates the Bernstein polynomial with coefficients `node_values` on `[a, b]`.
pub fn bernstein_eval(node_values: &[f64], a: f64, b: f64, t: f64) -> Result<f64> {
    if node_values.len() < 2 {
        return parameter("Bernstein order must be at least 1");
    }
    if !(b > a) {
        return Err(Error::DegenerateInterval { a, b });
    }
    if !(t >= a && t <= b) {
        return domain(format!("t = {t} outside [{a}, {b}]"));
    }
    Ok(bernstein_unit(node_values, (t - a) / (b - a)))
}

/// de Casteljau evaluation at `u ∈ [0, 1]`.
pub(crate) fn bernstein_unit(v: &[f64], u: f64) -> f64 {
    if u == 0.0 {
        return v[0];
    }
    if u == 1.0 {
        return v[v.len() - 1];
    }
    let mut w = v.to_vec();
    let n = w.len();
    for r in 1..n {
        for j in 0..n - r {
            w[j] = (1.0 - u) * w[j] + u * w[j + 1];
        }
    }
    w[0]
}

/// The q+1 equispaced Bernstein nodes `a + j(b−a)/q`.
pub fn bernstein_nodes(a: f64, b: f64, q: usize) -> Vec<f64> {
    (0..=q)
        .map(|j| if j == q { b } else { a + j as f64 * (b - a) / q as f64 })
        .collect()
}

/// Samples `f` at the Bernstein nodes of `[a, b]`.
pub fn bernstein_fit(f: impl FnMut(f64) -> f64, a: f64, b: f64, q: usize) -> Result<Vec<f64>> {
    if q == 0 {
        return parameter("Bernstein order must be at least 1");
    }
    if !(b > a) {
        return Err(Error::DegenerateInterval { a, b });
    }
    Ok(bernstein_nodes(a, b, q).into_iter().map(f).collect())
}

/// Piecewise Bernstein representation of a weighted vector function.
///
/// Coefficients are node samples, stored interval-major, then component,
/// then node index.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSpline {
    knots: KnotCollection,
    gamma_exp: f64,
    q: usize,
    dim: usize,
    coeffs: Vec<f64>,
}

impl WeightedSpline {
    pub fn new(
        knots: KnotCollection,
        gamma_exp: f64,
        q: usize,
        dim: usize,
        coeffs: Vec<f64>,
    ) -> Result<Self> {
        if q == 0 {
            return parameter("spline order must be at least 1");
        }
        if dim == 0 {
            return parameter("dimension must be at least 1");
        }
        if !(gamma_exp > 0.0 && gamma_exp <= 1.0) {
            return parameter(format!("gamma must lie in (0, 1], got {gamma_exp}"));
        }
        if gamma_exp < 1.0 && knots.start() <= 0.0 {
            return parameter("knots must start above 0 when gamma < 1");
        }
        if coeffs.len() != knots.len() * dim * (q + 1) {
            return parameter(format!(
                "expected {} coefficients, got {}",
                knots.len() * dim * (q + 1),
                coeffs.len()
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return parameter("spline coefficients must be finite");
        }
        Ok(Self {
            knots,
            gamma_exp,
            q,
            dim,
            coeffs,
        })
    }

    /// Spline whose weighted part is the constant vector `value`.
    pub fn constant(knots: KnotCollection, gamma_exp: f64, q: usize, value: &[f64]) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(knots.len() * value.len() * (q + 1));
        for _ in 0..knots.len() {
            for &v in value {
                coeffs.extend(std::iter::repeat(v).take(q + 1));
            }
        }
        Self::new(knots, gamma_exp, q, value.len(), coeffs)
    }

    /// Zero weighted part of dimension `dim`.
    pub fn zeros(knots: KnotCollection, gamma_exp: f64, q: usize, dim: usize) -> Result<Self> {
        Self::constant(knots, gamma_exp, q, &vec![0.0; dim])
    }

    pub fn knots(&self) -> &KnotCollection {
        &self.knots
    }

    pub fn gamma_exp(&self) -> f64 {
        self.gamma_exp
    }

    pub fn order(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Bernstein coefficients of component `c` on interval `i`.
    pub fn node_values(&self, i: usize, c: usize) -> &[f64] {
        let start = (i * self.dim + c) * (self.q + 1);
        &self.coeffs[start..start + self.q + 1]
    }

    /// Time of node `j` on interval `i`.
    pub fn node_time(&self, i: usize, j: usize) -> f64 {
        let (a, b) = self.knots.interval(i);
        if j == self.q {
            b
        } else {
            a + j as f64 * (b - a) / self.q as f64
        }
    }

    /// Total number of nodes, counting shared interval endpoints twice.
    pub fn node_count(&self) -> usize {
        self.knots.len() * (self.q + 1)
    }

    /// Weighted part `w(t)`.
    pub fn weighted_part(&self, t: f64) -> Result<Vec<f64>> {
        let i = self
            .knots
            .locate(t)
            .ok_or_else(|| Error::Domain(format!("t = {t} outside [{}, {}]", self.knots.start(), self.knots.end())))?;
        let (a, b) = self.knots.interval(i);
        let u = ((t - a) / (b - a)).clamp(0.0, 1.0);
        Ok((0..self.dim)
            .map(|c| bernstein_unit(self.node_values(i, c), u))
            .collect())
    }

    /// Solution value `x(t) = t^{γ−1}w(t)`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let scale = t.powf(self.gamma_exp - 1.0);
        Ok(self.weighted_part(t)?.into_iter().map(|w| w * scale).collect())
    }

    /// Largest absolute coefficient difference, i.e. the weighted sup distance
    /// over all Bernstein nodes.
    pub fn node_distance(&self, other: &WeightedSpline) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Per-component sup of |coefficients| (the weighted sup norm bound of the spline).
    pub fn node_sup(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.dim];
        for i in 0..self.knots.len() {
            for (c, o) in out.iter_mut().enumerate() {
                for v in self.node_values(i, c) {
                    *o = o.max(v.abs());
                }
            }
        }
        out
    }

    /// Weighted part at `t = T` (the last node of the last interval).
    pub fn terminal_weighted(&self) -> Vec<f64> {
        let last = self.knots.len() - 1;
        (0..self.dim).map(|c| self.node_values(last, c)[self.q]).collect()
    }

    /// `a·self + b·other` on identical knots.
    pub fn combine(&self, a: f64, other: &WeightedSpline, b: f64) -> Result<WeightedSpline> {
        if self.knots != other.knots || self.q != other.q || self.dim != other.dim {
            return parameter("splines must share knots, order and dimension");
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::new(self.knots.clone(), self.gamma_exp, self.q, self.dim, coeffs)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&SplineDocument::from(self)).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let doc: SplineDocument = serde_json::from_str(src).map_err(|e| Error::Format(e.to_string()))?;
        doc.try_into()
    }

    /// CSV layout: `#`-prefixed header lines for γ, q and d, then one row per
    /// interval and component: `interval,left,right,component,c0,…,cq`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# gamma,{}\n# q,{}\n# dim,{}\n", self.gamma_exp, self.q, self.dim));
        s.push_str("interval,left,right,component");
        for j in 0..=self.q {
            s.push_str(&format!(",c{j}"));
        }
        s.push('\n');
        for i in 0..self.knots.len() {
            let (a, b) = self.knots.interval(i);
            for c in 0..self.dim {
                s.push_str(&format!("{i},{a},{b},{c}"));
                for v in self.node_values(i, c) {
                    s.push_str(&format!(",{v}"));
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_csv(src: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Format(msg.to_string());
        let mut gamma_exp = None;
        let mut q = None;
        let mut dim = None;
        let mut breakpoints: Vec<f64> = Vec::new();
        let mut coeffs = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let mut parts = meta.trim().splitn(2, ',');
                let key = parts.next().unwrap_or("").trim();
                let val = parts.next().unwrap_or("").trim();
                match key {
                    "gamma" => gamma_exp = Some(val.parse::<f64>().map_err(|_| bad("bad gamma"))?),
                    "q" => q = Some(val.parse::<usize>().map_err(|_| bad("bad q"))?),
                    "dim" => dim = Some(val.parse::<usize>().map_err(|_| bad("bad dim"))?),
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let q = q.ok_or_else(|| bad("missing q"))?;
            let dim = dim.ok_or_else(|| bad("missing dim"))?;
            if fields.len() != 4 + q + 1 {
                return Err(Error::Format(format!("line {}: expected {} fields", lineno + 1, 5 + q)));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Format(format!("line {}: bad number {s:?}", lineno + 1)));
            let interval: usize = fields[0].trim().parse().map_err(|_| bad("bad interval index"))?;
            let component: usize = fields[3].trim().parse().map_err(|_| bad("bad component index"))?;
            let expected_row = coeffs.len() / (q + 1);
            if interval * dim + component != expected_row {
                return Err(Error::Format(format!("line {}: rows out of order", lineno + 1)));
            }
            if component == 0 {
                let (a, b) = (num(fields[1])?, num(fields[2])?);
                if breakpoints.is_empty() {
                    breakpoints.push(a);
                } else if *breakpoints.last().unwrap() != a {
                    return Err(Error::Format(format!("line {}: intervals not contiguous", lineno + 1)));
                }
                breakpoints.push(b);
            }
            for f in &fields[4..] {
                coeffs.push(num(f)?);
            }
        }
        let knots = KnotCollection::new(breakpoints)?;
        Self::new(
            knots,
            gamma_exp.ok_or_else(|| bad("missing gamma"))?,
            q.ok_or_else(|| bad("missing q"))?,
            dim.ok_or_else(|| bad("missing dim"))?,
            coeffs,
        )
    }
}

/// Samples the weighted function `w` at every Bernstein node.
pub fn spline_project(
    mut w: impl FnMut(f64, &mut [f64]),
    knots: &KnotCollection,
    q: usize,
    gamma_exp: f64,
    dim: usize,
) -> Result<WeightedSpline> {
    if q == 0 {
        return parameter("spline order must be at least 1");
    }
    let mut coeffs = vec![0.0; knots.len() * dim * (q + 1)];
    let mut buf = vec![0.0; dim];
    for i in 0..knots.len() {
        let (a, b) = knots.interval(i);
        for (j, t) in bernstein_nodes(a, b, q).into_iter().enumerate() {
            w(t, &mut buf);
            for c in 0..dim {
                coeffs[(i * dim + c) * (q + 1) + j] = buf[c];
            }
        }
    }
    WeightedSpline::new(knots.clone(), gamma_exp, q, dim, coeffs)
}

/// Solution value `x(t) = t^{γ−1}w(t)` of a weighted spline.
pub fn weighted_eval(ws: &WeightedSpline, t: f64) -> Result<Vec<f64>> {
    ws.eval(t)
}

#[derive(Serialize, Deserialize)]
struct SplineDocument {
    gamma: f64,
    q: usize,
    dim: usize,
    breakpoints: Vec<f64>,
    /// `coeffs[interval][component][node]`
    coeffs: Vec<Vec<Vec<f64>>>,
}

impl From<&WeightedSpline> for SplineDocument {
    fn from(ws: &WeightedSpline) -> Self {
        let coeffs = (0..ws.knots.len())
            .map(|i| (0..ws.dim).map(|c| ws.node_values(i, c).to_vec()).collect())
            .collect();
        SplineDocument {
            gamma: ws.gamma_exp,
            q: ws.q,
            dim: ws.dim,
            breakpoints: ws.knots.breakpoints().to_vec(),
            coeffs,
        }
    }
}

impl TryFrom<SplineDocument> for WeightedSpline {
    type Error = Error;
    fn try_from(doc: SplineDocument) -> Result<Self> {
        let knots = KnotCollection::new(doc.breakpoints)?;
        let mut flat = Vec::new();
        for per_interval in &doc.coeffs {
            if per_interval.len() != doc.dim {
                return Err(Error::Format("component count mismatch".into()));
            }
            for nodes in per_interval {
                if nodes.len() != doc.q + 1 {
                    return Err(Error::Format("node count mismatch".into()));
                }
                flat.extend_from_slice(nodes);
            }
        }
        WeightedSpline::new(knots, doc.gamma, doc.q, doc.dim, flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernstein_reproduces_affine_and_constants() {
        let (a, b, q) = (0.3, 1.9, 5);
        let nodes = bernstein_nodes(a, b, q);
        let lin: Vec<f64> = nodes.clone();
        for k in 0..=20 {
            let t = a + (b - a) * k as f64 / 20.0;
            assert!((bernstein_eval(&lin, a, b, t).unwrap() - t).abs() < 1e-14);
            assert!((bernstein_eval(&[2.5; 6], a, b, t).unwrap() - 2.5).abs() < 1e-14);
        }
        assert_eq!(bernstein_eval(&[1.0, 3.0], 0.0, 1.0, 0.5).unwrap(), 2.0);
        assert!(bernstein_eval(&[1.0, 3.0], 0.0, 1.0, 1.5).is_err());
        assert!(matches!(
            bernstein_eval(&[1.0, 3.0], 1.0, 1.0, 1.0),
            Err(Error::DegenerateInterval { .. })
        ));
    }

    #[test]
    fn bernstein_fit_examples() {
        assert_eq!(bernstein_fit(|_| 1.0, 0.0, 1.0, 3).unwrap(), vec![1.0; 4]);
        assert_eq!(bernstein_fit(|t| t, 0.0, 1.0, 2).unwrap(), vec![0.0, 0.5, 1.0]);
        let v = bernstein_fit(|t| t * t, 0.0, 1.0, 1).unwrap();
        let err = (bernstein_eval(&v, 0.0, 1.0, 0.5).unwrap() - 0.25).abs();
        assert_eq!(err, 0.25);
        assert!(err <= 1.25 * 1.0);
    }

    #[test]
    fn uniform_knots_start_at_eps() {
        let k = KnotCollection::uniform(0.5, 3.0, 0.5).unwrap();
        assert_eq!(k.breakpoints(), &[0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
        let k = KnotCollection::uniform(1e-10, 3.0, 1.0).unwrap();
        assert_eq!(k.len(), 3);
        assert_eq!(k.end(), 3.0);
    }

    #[test]
    fn locate_half_open() {
        let k = KnotCollection::new(vec![0.1, 0.5, 1.0]).unwrap();
        assert_eq!(k.locate(0.1), Some(0));
        assert_eq!(k.locate(0.5), Some(1));
        assert_eq!(k.locate(1.0), Some(1));
        assert_eq!(k.locate(1.01), None);
        assert_eq!(k.locate(0.05), None);
    }

    #[test]
    fn graded_knots_uniform_when_gamma_one() {
        let p = GradedKnotParams { c: 1.5, h_max: 0.1, eps: 1e-10, horizon: 1.0 };
        let k = graded_knots(&p, 1.0).unwrap();
        for i in 0..k.len() - 1 {
            assert!((k.width(i) - 0.1).abs() < 1e-12);
        }
        assert_eq!(k.end(), 1.0);
        let bad = GradedKnotParams { c: 1.0, ..p };
        assert!(graded_knots(&bad, 0.75).is_err());
    }

    #[test]
    fn graded_knots_ratio_bound() {
        let p = GradedKnotParams { c: 1.5, h_max: 1e-2, eps: 1e-10, horizon: 0.5 };
        let g = 0.75;
        let k = graded_knots(&p, g).unwrap();
        for i in 0..k.len() {
            let (a, b) = k.interval(i);
            assert!((b / a).powf(1.0 - g) <= 1.5 * (1.0 + 1e-12));
            assert!(k.width(i) <= 1e-2 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn constant_spline_eval() {
        let k = KnotCollection::uniform(1e-3, 2.0, 0.25).unwrap();
        let ws = WeightedSpline::constant(k, 0.75, 3, &[2.0]).unwrap();
        for &t in &[1e-3, 0.1, 0.5, 1.3, 2.0] {
            let x = ws.eval(t).unwrap()[0];
            assert!((x - 2.0 * t.powf(-0.25)).abs() < 1e-13 * x.abs());
        }
        assert!(ws.eval(2.5).is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let k = KnotCollection::new(vec![0.01, 0.3, 1.0]).unwrap();
        let ws = spline_project(
            |t, out| {
                out[0] = t.sin();
                out[1] = 1.0 / 3.0 + t * t;
            },
            &k,
            3,
            0.6,
            2,
        )
        .unwrap();
        assert_eq!(WeightedSpline::from_json(&ws.to_json().unwrap()).unwrap(), ws);
        assert_eq!(WeightedSpline::from_csv(&ws.to_csv()).unwrap(), ws);
    }
}
