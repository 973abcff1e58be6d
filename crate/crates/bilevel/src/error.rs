//! Error types shared across the solver, problem generators and baselines.

use thiserror::Error;

/// Errors produced by oracle evaluation, solver runs and validation helpers.
#[derive(Debug, Error)]
pub enum Error {
    /// An oracle returned a non-finite value. Carries the offending
    /// coordinates so callers can locate the blow-up.
    #[error("non-finite {what} output at coordinates {coords:?}")]
    NonFiniteEval {
        what: &'static str,
        coords: Vec<(usize, f64)>,
    },

    /// The warm-start budget ran out before `h <= alpha^2 * C0` held.
    #[error("warm start exhausted {budget} iterations, final h = {h_final:.6e} > target {target:.6e}")]
    WarmStartBudget {
        budget: usize,
        h_final: f64,
        target: f64,
    },

    /// An iterate left the finite/trusted region during a run. Carries the
    /// last finite recorded iterate, when one exists.
    #[error("iterates diverged at k = {k} (max |coord| = {magnitude:.3e})")]
    Diverged {
        k: usize,
        magnitude: f64,
        last_record: Option<Box<crate::solver::IterateRecord>>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trace is empty")]
    EmptyTrace,

    /// Conjugate gradient detected non-positive curvature; the operator is
    /// not positive definite on the explored subspace.
    #[error("CG detected non-positive curvature at iteration {iteration} (p'Ap = {curvature:.3e})")]
    IndefiniteCurvature { iteration: usize, curvature: f64 },

    #[error("rate slope requires positive inputs, got ({k}, {value})")]
    NonPositiveRatePoint { k: f64, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
