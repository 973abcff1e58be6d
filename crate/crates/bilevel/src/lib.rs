//! Bilevel optimization through a single-level reduction: the lower-level
//! optimality condition enters as the constraint `h(x,y) = ‖∇_y g(x,y)‖² = 0`
//! and each iteration takes a gradient step on `f` minimally perturbed by a
//! closed-form QP so that the linearized constraint keeps decreasing.
//!
//! The crate bundles:
//! - [`qp`]: the constraint function, its gradient via Hessian-vector
//!   products, both infeasibility-forcing choices, and the closed-form QP
//!   solution with an independent projection oracle for validation;
//! - [`solver`]: the main loop, warm start, and the two prescribed
//!   step-size/penalty schedules;
//! - [`problems`]: seeded benchmark generators with analytic oracles;
//! - [`baselines`]: AID (CG-based hypergradient descent) and BOME;
//! - [`metrics`]: KKT residuals and log-log rate slopes;
//! - [`validate`]: the oracle validation suite.

pub mod baselines;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod problems;
pub mod qp;
pub mod solver;
pub mod validate;
pub mod vecops;

pub use error::{Error, Result};
pub use oracle::{OracleCalls, ProblemOracles, SmoothnessConstants};
pub use solver::{
    best_iterate, run, warm_start, BestIterateCriterion, IterateRecord, RhoVariant, RunConfig,
    ScheduleKind, SolverConfig, Trace,
};
