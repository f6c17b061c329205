//! TOML problem files.
//!
//! ```toml
//! [problem]
//! alpha = 0.5
//! beta = 0.5
//! T = 3.0
//! x0_tilde = [1.0]
//! m = [3.6]                 # optional bound on t^(1-gamma)|f|
//! K = [[0.0]]               # optional Lipschitz matrix, row major
//! domain = { lower = [-10.0], upper = [10.0] }   # optional
//!
//! [problem.forcing]
//! registry = "monomial"     # or "cosine-2pi"
//! k = 0.9
//! # expressions = ["cos(x1*4*pi*t)/(2*pi)"]
//!
//! [solver]
//! eps = 1e-10
//! q = 1
//! h = 0.01                  # uniform knots; or c and h_max for graded; or knots = [...]
//! tol = 1e-12
//! max_iter = 200
//! ```

use std::path::Path;
use std::sync::Arc;

use fracbvp::{CosineForcing, Domain, KnotCollection, KnotSpec, MonomialForcing, ProblemSpec, SharedForcing, SolverConfig};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::expr::{parse_expression, ExprForcing};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: ProblemSection,
    pub solver: SolverSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub x0_tilde: Vec<f64>,
    pub forcing: ForcingSection,
    pub m: Option<Vec<f64>>,
    #[serde(rename = "K")]
    pub lipschitz: Option<Vec<Vec<f64>>>,
    pub domain: Option<DomainSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    pub registry: Option<String>,
    pub k: Option<f64>,
    pub expressions: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub eps: f64,
    #[serde(default = "default_q")]
    pub q: usize,
    pub h: Option<f64>,
    pub c: Option<f64>,
    pub h_max: Option<f64>,
    pub knots: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

fn default_q() -> usize {
    1
}

/// How the forcing was specified; registry problems have closed-form oracles.
#[derive(Debug, Clone, PartialEq)]
pub enum ForcingKind {
    Monomial { k: f64 },
    Cosine,
    Expressions(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub problem: ProblemSpec,
    pub solver: SolverConfig,
    pub forcing: ForcingKind,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
}

pub fn parse(text: &str) -> Result<LoadedConfig, ConfigError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
    build(&file)
}

fn forcing(section: &ForcingSection) -> Result<(SharedForcing, ForcingKind), ConfigError> {
    match (&section.registry, &section.expressions) {
        (Some(_), Some(_)) => err("forcing: give either registry or expressions, not both"),
        (None, None) => err("forcing: registry or expressions required"),
        (Some(name), None) => match name.as_str() {
            "monomial" => {
                let Some(k) = section.k else {
                    return err("forcing: registry 'monomial' needs k");
                };
                Ok((Arc::new(MonomialForcing { k }), ForcingKind::Monomial { k }))
            }
            "cosine-2pi" => {
                if section.k.is_some() {
                    return err("forcing: registry 'cosine-2pi' takes no parameters");
                }
                Ok((Arc::new(CosineForcing), ForcingKind::Cosine))
            }
            other => err(format!("forcing: unknown registry problem '{other}' (known: monomial, cosine-2pi)")),
        },
        (None, Some(src)) => {
            if section.k.is_some() {
                return err("forcing: k applies to the monomial registry problem only");
            }
            let mut exprs = Vec::new();
            for (c, s) in src.iter().enumerate() {
                exprs.push(parse_expression(s).map_err(|e| ConfigError(format!("forcing component {}: {e}", c + 1)))?);
            }
            let f = ExprForcing::new(exprs).map_err(ConfigError)?;
            Ok((Arc::new(f), ForcingKind::Expressions(src.clone())))
        }
    }
}

fn build(file: &ConfigFile) -> Result<LoadedConfig, ConfigError> {
    let p = &file.problem;
    let (f, kind) = forcing(&p.forcing)?;
    let wrap = |e: fracbvp::Error| ConfigError(e.to_string());
    let mut problem = ProblemSpec::new(f, p.alpha, p.beta, p.horizon, p.x0_tilde.clone()).map_err(wrap)?;
    if let Some(m) = &p.m {
        problem = problem.with_bound(m.clone()).map_err(wrap)?;
    }
    if let Some(rows) = &p.lipschitz {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return err("K must be a square matrix");
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        problem = problem.with_lipschitz(DMatrix::from_row_slice(d, d, &flat)).map_err(wrap)?;
    }
    if let Some(b) = &p.domain {
        problem = problem
            .with_domain(Domain::Box {
                lower: b.lower.clone(),
                upper: b.upper.clone(),
            })
            .map_err(wrap)?;
    }

    let s = &file.solver;
    let knots = match (s.h, s.c, s.h_max, &s.knots) {
        (Some(h), None, None, None) => KnotSpec::Uniform { h },
        (None, Some(c), Some(h_max), None) => KnotSpec::Graded { c, h_max },
        (None, None, None, Some(k)) => KnotSpec::Explicit(KnotCollection::new(k.clone()).map_err(wrap)?),
        _ => return err("solver: give exactly one of h, (c and h_max), or knots"),
    };
    let mut solver = SolverConfig::new(s.eps, s.q, knots);
    if let Some(tol) = s.tol {
        solver.tol = tol;
    }
    if let Some(n) = s.max_iter {
        solver.max_iter = n;
    }
    solver.validate().map_err(wrap)?;
    // builds the knots once so grading and span errors surface here
    solver.build_knots(&problem).map_err(wrap)?;
    Ok(LoadedConfig {
        problem,
        solver,
        forcing: kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINEAR: &str = r#"
[problem]
alpha = 0.5
beta = 0.5
T = 3.0
x0_tilde = [1.0]

[problem.forcing]
registry = "monomial"
k = 0.9

[solver]
eps = 1e-10
h = 0.25
"#;

    #[test]
    fn loads_registry_problem() {
        let c = parse(LINEAR).unwrap();
        assert_eq!(c.forcing, ForcingKind::Monomial { k: 0.9 });
        assert_eq!(c.solver.q, 1);
        assert_eq!(c.problem.horizon, 3.0);
    }

    #[test]
    fn rejects_bad_blocks() {
        assert!(parse(&LINEAR.replace("h = 0.25", "c = 1.0\nh_max = 0.01")).is_err());
        assert!(parse(&LINEAR.replace("h = 0.25", "h = 0.25\nc = 1.5")).is_err());
        assert!(parse(&LINEAR.replace("k = 0.9", "")).is_err());
        assert!(parse(&LINEAR.replace("alpha", "alfa")).is_err());
        let e = parse(&LINEAR.replace("registry = \"monomial\"\nk = 0.9", "expressions = [\"1/(1\"]")).unwrap_err();
        assert!(e.0.contains("offset 4"), "{e}");
    }
}
