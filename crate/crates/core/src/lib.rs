//! Solver for fractional-periodic boundary value problems with the Hilfer
//! derivative, via a perturbed initial value problem solved by Picard
//! iteration on weighted Bernstein splines.

pub mod constants;
pub mod error;
pub mod forcing;
pub mod fracops;
pub mod oracle;
pub mod shooting;
pub mod specfun;
pub mod solver;
pub mod splines;
pub mod sweep;

pub use constants::{AssumptionReport, ConvergenceConstants, Verdict};
pub use error::{Error, Result};
pub use forcing::{CosineForcing, FnForcing, Forcing, MonomialForcing, SharedForcing, ZeroForcing};
pub use fracops::{MapImage, MapParams, SplineIntegrator};
pub use oracle::{QuadratureSpec, ReferenceSolution, ResidualStats};
pub use shooting::{GridPoint, GridSearchResult, GridSearchSpec, GridVariable};
pub use solver::{Domain, KnotSpec, ProblemSpec, SolveResult, SolverConfig};
pub use splines::{GradedKnotParams, KnotCollection, WeightedSpline};
pub use sweep::{ErrorOracle, ErrorStats, SweepParameter, SweepRow, SweepTable};
