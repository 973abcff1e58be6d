//! KKT residuals, the lower-level multiplier mapping, and rate tooling.

use crate::error::{Error, Result};
use crate::oracle::ProblemOracles;
use crate::{qp, vecops};

/// The two components of the approximate-KKT measure: the constraint value
/// `h(x,y)` and the squared stationarity residual `‖∇f + λ∇h‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    pub h: f64,
    pub stationarity: f64,
}

/// Evaluates both KKT residual components at `(x, y, λ)`.
///
/// The stationarity term is computed through the same code path as the
/// solver's step directions, so it reproduces a recorded `delta_sq` bitwise
/// at the same iterate.
pub fn kkt_residual(oracle: &ProblemOracles, x: &[f64], y: &[f64], lambda: f64) -> Result<KktResidual> {
    debug_assert!(lambda >= 0.0);
    let gy = oracle.grad_y_g(x, y);
    if !vecops::all_finite(&gy) {
        return Err(Error::NonFiniteEval {
            what: "grad_y_g",
            coords: vecops::non_finite_coords(&gy),
        });
    }
    let h = vecops::norm_sq(&gy);
    let (hx, hy) = qp::grad_h_from(oracle, x, y, &gy)?;
    let (gfx, gfy) = oracle.grad_f(x, y);
    let (dx, dy) = qp::direction(&gfx, &gfy, &hx, &hy, lambda);
    let stationarity = vecops::norm_sq(&dx) + vecops::norm_sq(&dy);
    Ok(KktResidual { h, stationarity })
}

/// Maps the scalar multiplier of the `h = 0` reformulation to the vector
/// multiplier `ν = λ ∇_y g` of the stationarity-constrained formulation
/// `∇_y g(x,y) = 0`.
pub fn lower_kkt_map(lambda: f64, grad_y_g: &[f64]) -> Vec<f64> {
    debug_assert!(lambda >= 0.0);
    vecops::scale(grad_y_g, lambda)
}

/// Lipschitz constant of `h = ‖∇_y g‖²`: `L_h = 2 C_g (L_yy + L_yx)`.
pub fn lipschitz_h_bound(c_g: f64, l_yy_g: f64, l_yx_g: f64) -> f64 {
    debug_assert!(c_g >= 0.0 && l_yy_g >= 0.0 && l_yx_g >= 0.0);
    2.0 * c_g * (l_yy_g + l_yx_g)
}

/// Ordinary least-squares slope of `log(value)` against `log(K)`.
///
/// Used to verify the empirical decay rates of the iterate averages across a
/// sweep of iteration budgets.
pub fn rate_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "rate_slope needs at least 2 points, got {}",
            points.len()
        )));
    }
    for &(k, v) in points {
        if !(k > 0.0 && v > 0.0) {
            return Err(Error::NonPositiveRatePoint { k, value: v });
        }
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(k, v)| (k.ln(), v.ln())).collect();
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (lx, ly) in &logs {
        sxx += (lx - mean_x) * (lx - mean_x);
        sxy += (lx - mean_x) * (ly - mean_y);
    }
    Ok(sxy / sxx)
}
