//! Right-hand sides `f(t, x)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// A right-hand side `f : [ε, T] × R^d → R^d`.
pub trait Forcing: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `f(t, x)` into `out`.
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// `false` when `f` ignores `x`; lets callers skip the Lipschitz machinery.
    fn depends_on_state(&self) -> bool {
        true
    }
}

pub type SharedForcing = Arc<dyn Forcing>;

impl fmt::Debug for dyn Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Forcing(dim = {})", self.dim())
    }
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroForcing {
    pub dim: usize,
}

impl Forcing for ZeroForcing {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn depends_on_state(&self) -> bool {
        false
    }
}

/// Scalar `f(t, x) = t^k`.
#[derive(Debug, Clone, Copy)]
pub struct MonomialForcing {
    pub k: f64,
}

impl Forcing for MonomialForcing {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = t.powf(self.k);
    }
    fn depends_on_state(&self) -> bool {
        false
    }
}

/// Scalar `f(t, x) = cos(4πtx)/(2π)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CosineForcing;

impl Forcing for CosineForcing {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = (x[0] * 4.0 * PI * t).cos() / (2.0 * PI);
    }
}

/// Wraps a closure.
pub struct FnForcing<F> {
    dim: usize,
    state_dependent: bool,
    f: F,
}

impl<F> FnForcing<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            state_dependent: true,
            f,
        }
    }

    /// Marks the closure as ignoring `x`.
    pub fn state_independent(mut self) -> Self {
        self.state_dependent = false;
        self
    }
}

impl<F> Forcing for FnForcing<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f)(t, x, out)
    }
    fn depends_on_state(&self) -> bool {
        self.state_dependent
    }
}
