//! Numerical building blocks shared by every fitting routine: the Huber
//! penalty, log-sum-exp, ordinary least squares in log-log space, and a
//! BFGS minimizer with Armijo backtracking.

mod bfgs;
mod regression;
mod robust;

pub use bfgs::{
    check_gradient, finite_difference_gradient, minimize, GradientMode, LineSearch,
    MinimizeResult, Objective, OptimizerConfig,
};
pub use regression::{loglog_linreg, LogLogFit};
pub use robust::{huber, huber_derivative, lse, lse_weights, HuberParams};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("log-sum-exp of an empty term list")]
    EmptyTerms,
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("value at index {index} is not positive ({value})")]
    NonPositive { index: usize, value: f64 },
    #[error("x values are all identical; slope is unidentifiable")]
    DegenerateX,
    #[error("input lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("objective is not finite at the starting point (f = {value})")]
    NonFiniteStart { value: f64 },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("huber delta must be positive, got {0}")]
    InvalidDelta(f64),
}
