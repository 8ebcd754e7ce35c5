//! Small dense nonlinear programming solver in the SLSQP style.

use thiserror::Error;

use crate::scalar::Real;

mod fd;
mod qp;
mod sqp;

pub use fd::{finite_difference_gradient, finite_difference_jacobian};
pub use qp::{qp_subproblem, QpError, QpStep};
pub use sqp::{solve, SolveError};

/// Failure to evaluate a problem callable.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    /// The point lies outside the function's domain (e.g. a violated barrier).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
}

/// A nonlinear program `min f(x)` s.t. `c(x) ≥ 0`, `lower ≤ x ≤ upper`.
///
/// Gradients default to central finite differences; override them when
/// analytic derivatives are available.
pub trait NlpProblem<T: Real> {
    fn dim(&self) -> usize;

    fn num_constraints(&self) -> usize;

    /// Lower bounds; `-∞` for none.
    fn lower_bounds(&self) -> Vec<T>;

    /// Upper bounds; `+∞` for none.
    fn upper_bounds(&self) -> Vec<T>;

    fn objective(&self, x: &[T]) -> Result<T, EvalError>;

    fn gradient(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
        finite_difference_gradient(|y| self.objective(y), x, T::of(1e-6))
    }

    /// Writes `c(x)` (feasible iff every entry ≥ 0) into `out`.
    fn constraints(&self, x: &[T], out: &mut [T]) -> Result<(), EvalError>;

    /// Row-major `m × n` constraint Jacobian.
    fn jacobian(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
        finite_difference_jacobian(|y, out| self.constraints(y, out), x, self.num_constraints(), T::of(1e-6))
    }

    /// Optional positive definite row-major seed for the quasi-Newton
    /// Hessian; identity when absent.
    fn initial_hessian(&self) -> Option<Vec<T>> {
        None
    }
}

type ObjectiveFn<'a, T> = Box<dyn Fn(&[T]) -> Result<T, EvalError> + 'a>;
type ConstraintFn<'a, T> = Box<dyn Fn(&[T]) -> Result<T, EvalError> + 'a>;

/// Closure-backed problem with finite-difference derivatives.
pub struct FnProblem<'a, T> {
    pub dim: usize,
    pub objective: ObjectiveFn<'a, T>,
    pub constraints: Vec<ConstraintFn<'a, T>>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<'a, T: Real> FnProblem<'a, T> {
    pub fn new(dim: usize, objective: impl Fn(&[T]) -> Result<T, EvalError> + 'a) -> Self {
        Self {
            dim,
            objective: Box::new(objective),
            constraints: Vec::new(),
            lower: vec![T::neg_infinity(); dim],
            upper: vec![T::infinity(); dim],
        }
    }

    pub fn constraint(mut self, c: impl Fn(&[T]) -> Result<T, EvalError> + 'a) -> Self {
        self.constraints.push(Box::new(c));
        self
    }

    pub fn bounds(mut self, lower: Vec<T>, upper: Vec<T>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }
}

impl<T: Real> NlpProblem<T> for FnProblem<'_, T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn lower_bounds(&self) -> Vec<T> {
        self.lower.clone()
    }

    fn upper_bounds(&self) -> Vec<T> {
        self.upper.clone()
    }

    fn objective(&self, x: &[T]) -> Result<T, EvalError> {
        (self.objective)(x)
    }

    fn constraints(&self, x: &[T], out: &mut [T]) -> Result<(), EvalError> {
        for (o, c) in out.iter_mut().zip(&self.constraints) {
            *o = c(x)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions<T> {
    pub max_iter: usize,
    /// Stationarity / step-size tolerance.
    pub tol_opt: T,
    /// Constraint violation accepted as feasible at convergence.
    pub tol_feas: T,
    /// Violation above which a non-converged run is reported infeasible.
    pub infeasible_threshold: T,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self { max_iter: 50, tol_opt: T::of(1e-6), tol_feas: T::of(1e-6), infeasible_threshold: T::of(1e-4) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpSolution<T> {
    pub x_opt: Vec<T>,
    pub objective_value: T,
    pub status: SolveStatus,
    pub iterations: usize,
    /// `max(0, −min c(x_opt))`, re-evaluated at `x_opt`.
    pub max_constraint_violation: T,
    /// Whether any QP subproblem needed elastic relaxation.
    pub relaxed: bool,
    pub message: Option<String>,
}
