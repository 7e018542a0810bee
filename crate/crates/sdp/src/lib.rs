//! Dense small-block semidefinite programming.
//!
//! Problems are stated in LMI form: find `y` maximizing `cᵀy` subject to
//! `F0_k + Σ y_i F_ik ⪰ 0` for every block `k`. Coefficient matrices are
//! kept sparse because control-synthesis LMIs touch only a handful of
//! entries per decision variable, while the slack and primal matrices are
//! dense and small (a few dozen rows).
//!
//! The built-in backend is an infeasible-start primal-dual path-following
//! method using the HKM search direction with Mehrotra predictor-corrector
//! steps. Other backends can be plugged in through [`SdpBackend`].

mod error;
mod ipm;
mod problem;

pub use error::SdpError;
pub use ipm::{InteriorPoint, IpmSettings};
pub use problem::{LmiBlock, Sdp, SparseSym};

use nalgebra::DVector;

/// Termination state reported with a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// All tolerances met.
    Optimal,
    /// Iteration limit or step stagnation hit with the iterate dual feasible
    /// and the gap within a hundred times the tolerance.
    NearOptimal,
}

/// Result of a successful solve.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub y: DVector<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
}

/// A solver capable of handling [`Sdp`] problems.
///
/// Implemented by [`InteriorPoint`]; external solvers can be adapted for
/// cross-checking.
pub trait SdpBackend {
    fn name(&self) -> &str;

    /// Solve, optionally starting from a point `y0` (used when it makes
    /// every block strictly positive definite).
    fn solve_from(&self, problem: &Sdp, y0: Option<&DVector<f64>>) -> Result<SdpSolution, SdpError>;

    fn solve(&self, problem: &Sdp) -> Result<SdpSolution, SdpError> {
        self.solve_from(problem, None)
    }
}
