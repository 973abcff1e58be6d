//! First- and second-order oracle bundle for a bilevel problem
//!
//! The solver sees a problem `min f(x,y) s.t. y minimizing g(x,.)` only
//! through this interface: the upper-level value and gradient, the
//! lower-level gradient `∇_y g`, and the two Hessian-vector products of `g`.
//! Full second-derivative matrices are never materialized.

use serde::{Deserialize, Serialize};

/// Boxed evaluator returning a scalar.
pub type ScalarFn = Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// Boxed evaluator returning a vector.
pub type VectorFn = Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// Boxed evaluator returning a pair of vectors (x-block, y-block).
pub type PairFn = Box<dyn Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync>;
/// Boxed Hessian-vector product `v -> M^T v`.
pub type HvpFn = Box<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Smoothness constants of a problem, when known analytically.
///
/// `l_f = max{L_x^f, L_y^f}` bounds the Lipschitz constant of `∇f`,
/// `c_f` bounds `‖∇f‖`, `c_g` bounds `‖∇_y g‖`, `l_yy_g` / `l_yx_g` bound the
/// operator norms of the second derivatives of `g`, and `l_h` is the
/// Lipschitz constant of `h = ‖∇_y g‖²` (equal to `2 c_g (l_yy_g + l_yx_g)`).
/// For problems whose gradients are unbounded globally, the bounds are valid
/// on the ball of radius `trust_radius` recorded in the problem metadata.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub l_f: f64,
    pub l_h: f64,
    pub c_f: f64,
    pub c_g: f64,
    pub l_yy_g: f64,
    pub l_yx_g: f64,
}

/// Callable oracle bundle for one problem instance.
///
/// Conventions:
/// - `grad_f(x, y)` returns `(∇_x f, ∇_y f)`.
/// - `hvp_yx(x, y, v)` returns `(∇²_{yx} g)^T v ∈ R^n` for `v ∈ R^m`.
/// - `hvp_yy(x, y, v)` returns `(∇²_{yy} g)^T v ∈ R^m` for `v ∈ R^m`.
///
/// Evaluators must be deterministic and reentrant; the solver may call them
/// from several runs concurrently.
pub struct ProblemOracles {
    pub dim_x: usize,
    pub dim_y: usize,
    pub f_eval: ScalarFn,
    pub grad_f: PairFn,
    pub grad_y_g: VectorFn,
    pub hvp_yx: HvpFn,
    pub hvp_yy: HvpFn,
    pub constants: Option<SmoothnessConstants>,
}

impl ProblemOracles {
    pub fn f(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.f_eval)(x, y)
    }

    pub fn grad_f(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.grad_f)(x, y)
    }

    pub fn grad_y_g(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (self.grad_y_g)(x, y)
    }

    pub fn hvp_yx(&self, x: &[f64], y: &[f64], v: &[f64]) -> Vec<f64> {
        (self.hvp_yx)(x, y, v)
    }

    pub fn hvp_yy(&self, x: &[f64], y: &[f64], v: &[f64]) -> Vec<f64> {
        (self.hvp_yy)(x, y, v)
    }
}

/// Cumulative oracle-call counters, split by kind.
///
/// `grad_g` counts lower-level gradient evaluations of either block
/// (`∇_y g` and, for baselines that need it, `∇_x g`); `hvp` counts each
/// Hessian-vector product application. Method comparisons are made on these
/// counters rather than wall clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCalls {
    pub grad_f: u64,
    pub grad_g: u64,
    pub hvp: u64,
}

impl OracleCalls {
    pub fn total(&self) -> u64 {
        self.grad_f + self.grad_g + self.hvp
    }
}
