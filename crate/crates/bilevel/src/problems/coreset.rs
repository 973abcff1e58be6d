//! Coreset selection toy problem: `f = ‖y - y₀‖²` over
//! `y⋆(x) = argmin_y ‖y - A σ(x)‖²` with softmax weights `σ(x)`.
//!
//! `x ∈ R⁴`, `y ∈ R²`, `A ∈ R^{2x4}`; `A` and `y₀` are seeded standard
//! normal. The lower level is 2-strongly convex with `y⋆(x) = A σ(x)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::oracle::{ProblemOracles, SmoothnessConstants};
use crate::problems::{normal_vec, test_rng, BenchmarkProblem, GroundTruth, ProblemMetadata};
use crate::vecops;

const DIM_X: usize = 4;
const DIM_Y: usize = 2;
const TRUST_RADIUS: f64 = 6.0;

/// Softmax with max-subtraction.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// `J_σ v = (diag(σ) - σσ') v`, the softmax Jacobian action.
fn softmax_jacobian_apply(sigma: &[f64], v: &[f64]) -> Vec<f64> {
    let sv = vecops::dot(sigma, v);
    sigma
        .iter()
        .zip(v)
        .map(|(&s, &vi)| s * (vi - sv))
        .collect()
}

pub fn make_coreset(seed: u64) -> BenchmarkProblem {
    let mut rng = test_rng(seed);
    let a = Arc::new(DMatrix::from_fn(DIM_Y, DIM_X, |_, _| {
        use rand::Rng;
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    }));
    let y0 = Arc::new(normal_vec(&mut rng, DIM_Y));

    let sv = a.clone_owned().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(f64::MIN, f64::max);
    // σ(x) is a convex combination of A's columns, so ‖Aσ‖ is bounded by the
    // largest column norm.
    let col_max = (0..DIM_X)
        .map(|j| a.column(j).norm())
        .fold(f64::MIN, f64::max);
    let c_g = 2.0 * (TRUST_RADIUS + col_max);
    let l_yy = 2.0;
    // ‖∇²_{yx} g‖ = ‖2 A J_σ‖ ≤ 2 σ_max(A) · ½ (Popoviciu bound on J_σ).
    let l_yx = smax;
    let y0_norm = vecops::norm(&y0);
    let constants = SmoothnessConstants {
        l_f: 2.0,
        l_h: crate::metrics::lipschitz_h_bound(c_g, l_yy, l_yx),
        c_f: 2.0 * (TRUST_RADIUS + y0_norm),
        c_g,
        l_yy_g: l_yy,
        l_yx_g: l_yx,
    };

    // e(x, y) = y - A σ(x)
    let fit_error = {
        let a = a.clone();
        move |x: &[f64], y: &[f64]| -> Vec<f64> {
            let s = softmax(x);
            let target = (&*a * DVector::from_column_slice(&s)).as_slice().to_vec();
            vecops::sub(y, &target)
        }
    };

    let oracles = ProblemOracles {
        dim_x: DIM_X,
        dim_y: DIM_Y,
        f_eval: {
            let y0 = y0.clone();
            Box::new(move |_, y| vecops::norm_sq(&vecops::sub(y, &y0)))
        },
        grad_f: {
            let y0 = y0.clone();
            Box::new(move |_, y| {
                (vec![0.0; DIM_X], vecops::scale(&vecops::sub(y, &y0), 2.0))
            })
        },
        grad_y_g: {
            let fit_error = fit_error.clone();
            Box::new(move |x, y| vecops::scale(&fit_error(x, y), 2.0))
        },
        hvp_yx: {
            let a = a.clone();
            // (∇²_{yx} g)' v = -2 J_σ A' v.
            Box::new(move |x, _, v| {
                let s = softmax(x);
                let atv = (a.transpose() * DVector::from_column_slice(v))
                    .as_slice()
                    .to_vec();
                vecops::scale(&softmax_jacobian_apply(&s, &atv), -2.0)
            })
        },
        hvp_yy: Box::new(|_, _, v| vecops::scale(v, 2.0)),
        constants: Some(constants),
    };

    let y_star = {
        let a = a.clone();
        Box::new(move |x: &[f64]| -> Vec<f64> {
            let s = softmax(x);
            (&*a * DVector::from_column_slice(&s)).as_slice().to_vec()
        })
    };
    let hypergradient = {
        let a = a.clone();
        let y0 = y0.clone();
        // ∇ℓ(x) = 2 J_σ A' (A σ - y₀).
        Box::new(move |x: &[f64]| -> Vec<f64> {
            let s = softmax(x);
            let fit = (&*a * DVector::from_column_slice(&s)).as_slice().to_vec();
            let res = vecops::sub(&fit, &y0);
            let atr = (a.transpose() * DVector::from_column_slice(&res))
                .as_slice()
                .to_vec();
            vecops::scale(&softmax_jacobian_apply(&s, &atr), 2.0)
        })
    };

    BenchmarkProblem {
        name: "coreset".into(),
        oracles,
        g_eval: {
            let fit_error = fit_error.clone();
            Box::new(move |x, y| vecops::norm_sq(&fit_error(x, y)))
        },
        grad_x_g: Some({
            let a = a.clone();
            Box::new(move |x, y| {
                let s = softmax(x);
                let target = (&*a * DVector::from_column_slice(&s)).as_slice().to_vec();
                let e = vecops::sub(y, &target);
                let ate = (a.transpose() * DVector::from_column_slice(&e))
                    .as_slice()
                    .to_vec();
                vecops::scale(&softmax_jacobian_apply(&s, &ate), -2.0)
            })
        }),
        metadata: ProblemMetadata {
            seed,
            dim_x: DIM_X,
            dim_y: DIM_Y,
            condition_number: None,
            corruption_rate: None,
            reg_lambda: None,
            strongly_convex: true,
            sigma_plus_min: None,
            trust_radius: TRUST_RADIUS,
        },
        ground_truth: Some(GroundTruth { y_star, hypergradient: Some(hypergradient) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{fd_hypergradient, finite_diff_check, sample_point};
    use crate::qp;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let s = softmax(&[0.0, 0.0, 0.0, 0.0]);
        for v in s {
            assert!((v - 0.25).abs() < 1e-15, "{v} != 0.25");
        }
    }

    #[test]
    fn softmax_is_shift_invariant_and_overflow_safe() {
        let s = softmax(&[1000.0, 1000.0, 999.0, 998.0]);
        assert!(s.iter().all(|v| v.is_finite()));
        let t = softmax(&[2.0, 2.0, 1.0, 0.0]);
        for (a, b) in s.iter().zip(&t) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn h_vanishes_at_ground_truth() {
        let p = make_coreset(42);
        let gt = p.ground_truth.as_ref().unwrap();
        let mut rng = test_rng(2);
        for _ in 0..10 {
            let x = normal_vec(&mut rng, 4);
            let ys = (gt.y_star)(&x);
            let h = qp::eval_h(&p.oracles, &x, &ys).unwrap();
            assert!(h <= 1e-16, "h = {h:.3e}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = make_coreset(42);
        let mut rng = test_rng(6);
        for _ in 0..10 {
            let (x, y) = sample_point(&mut rng, 4, 2);
            let worst = finite_diff_check(&p, &x, &y, 1e-6).unwrap();
            assert!(worst <= 1e-5, "rel err {worst:.3e}");
        }
    }

    #[test]
    fn hypergradient_matches_finite_differences_through_y_star() {
        let p = make_coreset(42);
        let gt = p.ground_truth.as_ref().unwrap();
        let hyper = gt.hypergradient.as_ref().unwrap();
        let mut rng = test_rng(8);
        for _ in 0..5 {
            let x = normal_vec(&mut rng, 4);
            let analytic = hyper(&x);
            let fd = fd_hypergradient(&p, &x, 1e-6).unwrap();
            let err =
                vecops::norm(&vecops::sub(&fd, &analytic)) / vecops::norm(&analytic).max(1.0);
            assert!(err <= 1e-4, "rel err {err:.3e}");
        }
    }
}
