//! Comparison methods: AID-style hypergradient descent with conjugate-
//! gradient inner solves, and the first-order value-function method BOME.
//!
//! Both emit the same [`crate::solver::Trace`] schema and oracle-call
//! counters as the main solver, so methods are compared by oracle calls.

mod aid;
mod bome;
mod cg;

pub use aid::{aid_hypergradient, aid_run, aid_run_with_inspector, hypergradient_norm};
pub use bome::{bome_run, bome_run_with_inspector};
pub use cg::{cg_solve, CgSolution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::BenchmarkProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMethod {
    Aid,
    Bome,
}

impl BaselineMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMethod::Aid => "aid",
            BaselineMethod::Bome => "bome",
        }
    }
}

/// Baseline hyperparameters. `inner_step` defaults to `1/L_yy` when the
/// problem supplies the constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub outer_step: f64,
    pub inner_iters: usize,
    pub inner_step: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    /// Weight of the infeasibility term in BOME's multiplier rule.
    pub bome_eta: f64,
    pub k_iters: usize,
    pub record_every: usize,
}

impl BaselineConfig {
    pub fn aid(problem: &BenchmarkProblem, k_iters: usize) -> Self {
        BaselineConfig {
            method: BaselineMethod::Aid,
            outer_step: 0.2,
            inner_iters: 5,
            inner_step: default_inner_step(problem),
            cg_tol: 1e-10,
            cg_max_iters: 100,
            bome_eta: 0.5,
            k_iters,
            record_every: (k_iters / 10_000).max(1),
        }
    }

    pub fn bome(problem: &BenchmarkProblem, k_iters: usize) -> Self {
        BaselineConfig {
            method: BaselineMethod::Bome,
            outer_step: 0.1,
            inner_iters: 5,
            inner_step: default_inner_step(problem),
            cg_tol: 1e-10,
            cg_max_iters: 100,
            bome_eta: 0.5,
            k_iters,
            record_every: (k_iters / 10_000).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_iters == 0 {
            return Err(Error::InvalidConfig("K must be >= 1".into()));
        }
        if self.inner_iters == 0 {
            return Err(Error::InvalidConfig("inner_iters must be >= 1".into()));
        }
        for (name, v) in [
            ("outer_step", self.outer_step),
            ("inner_step", self.inner_step),
            ("cg_tol", self.cg_tol),
            ("bome_eta", self.bome_eta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.cg_max_iters == 0 {
            return Err(Error::InvalidConfig("cg_max_iters must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

fn default_inner_step(problem: &BenchmarkProblem) -> f64 {
    match &problem.oracles.constants {
        Some(c) if c.l_yy_g > 0.0 => 1.0 / c.l_yy_g,
        _ => 1e-2,
    }
}
