//! Matrix-free conjugate gradient for symmetric positive definite operators.

use crate::error::{Error, Result};
use crate::vecops;

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub v: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out before the tolerance held.
    pub converged: bool,
}

/// Solves `A v = b` where `A` is given as a matrix-vector product closure.
///
/// Stops when `‖A v - b‖ ≤ tol · max(1, ‖b‖)`; otherwise returns the last
/// iterate with `converged = false`. Errors on detected non-positive
/// curvature.
pub fn cg_solve<F>(hvp: F, b: &[f64], tol: f64, max_iters: usize) -> Result<CgSolution>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut hvp = hvp;
    let n = b.len();
    let threshold = tol * vecops::norm(b).max(1.0);
    let mut v = vec![0.0; n];
    let mut r = b.to_vec();
    let mut rs = vecops::norm_sq(&r);
    if rs.sqrt() <= threshold {
        return Ok(CgSolution { v, residual_norm: rs.sqrt(), iterations: 0, converged: true });
    }
    let mut p = r.clone();
    for iter in 0..max_iters {
        let ap = hvp(&p);
        let curvature = vecops::dot(&p, &ap);
        if curvature <= 0.0 {
            return Err(Error::IndefiniteCurvature { iteration: iter, curvature });
        }
        let alpha = rs / curvature;
        vecops::axpy(&mut v, alpha, &p);
        vecops::axpy(&mut r, -alpha, &ap);
        let rs_new = vecops::norm_sq(&r);
        if rs_new.sqrt() <= threshold {
            return Ok(CgSolution {
                v,
                residual_norm: rs_new.sqrt(),
                iterations: iter + 1,
                converged: true,
            });
        }
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Ok(CgSolution { v, residual_norm: rs.sqrt(), iterations: max_iters, converged: false })
}
