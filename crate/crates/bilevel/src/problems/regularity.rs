//! Lower level `g(x,y) = ½‖Ay - Bx‖²`, the canonical example where the
//! gradient of `h = ‖∇_y g‖²` dominates `∇_y g`:
//! since `∇_y g = Aᵀ(Ay - Bx)` lies in the range of `AᵀA`,
//! `‖∇_y g‖ ≤ ‖∇h‖ / (2 σ⁺_min(AᵀA))` at every point.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::oracle::{ProblemOracles, SmoothnessConstants};
use crate::problems::{normal_vec, test_rng, BenchmarkProblem, GroundTruth, ProblemMetadata};
use crate::vecops;

const TRUST_RADIUS: f64 = 8.0;

/// Builds the instance with seeded standard-normal `A ∈ R^{p x m}` and
/// `B ∈ R^{p x n}`. The upper objective reuses the synthetic benchmarks'
/// `sin(c'x + d'y) + log(‖x + Py‖² + 1)` form, with `P = I` when `n == m`
/// and a seeded Gaussian map otherwise.
pub fn make_regularity_example(seed: u64, p: usize, m: usize, n: usize) -> BenchmarkProblem {
    assert!(p >= 1 && m >= 1 && n >= 1);
    let mut rng = test_rng(seed);
    let a = Arc::new(DMatrix::from_fn(p, m, |_, _| {
        use rand::Rng;
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    }));
    let b = Arc::new(DMatrix::from_fn(p, n, |_, _| {
        use rand::Rng;
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    }));
    // Unit-scale upper-objective coefficients, as in the synthetic family.
    let c = Arc::new(vecops::scale(&normal_vec(&mut rng, n), 1.0 / (n as f64).sqrt()));
    let d = Arc::new(vecops::scale(&normal_vec(&mut rng, m), 1.0 / (m as f64).sqrt()));
    let proj: Arc<DMatrix<f64>> = if n == m {
        Arc::new(DMatrix::identity(n, m))
    } else {
        let scale = 1.0 / (m as f64).sqrt();
        Arc::new(DMatrix::from_fn(n, m, |_, _| {
            use rand::Rng;
            rng.sample::<f64, _>(rand_distr::StandardNormal) * scale
        }))
    };

    let sv_a = a.clone_owned().svd(false, false).singular_values;
    let smax_a = sv_a.iter().cloned().fold(f64::MIN, f64::max);
    let tol = smax_a * 1e-12;
    let smin_plus = sv_a.iter().cloned().filter(|&s| s > tol).fold(f64::MAX, f64::min);
    let sigma_plus_min = smin_plus * smin_plus; // of AᵀA
    let full_rank = sv_a.iter().all(|&s| s > tol) && p >= m;

    let sv_b = b.clone_owned().svd(false, false).singular_values;
    let smax_b = sv_b.iter().cloned().fold(f64::MIN, f64::max);
    let pnorm = proj
        .clone_owned()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max);

    let cn = vecops::norm(&c);
    let dn = vecops::norm(&d);
    let l_f = cn * cn + dn * dn + 2.0 * (1.0 + pnorm * pnorm);
    let c_f = ((cn + 1.0) * (cn + 1.0) + (dn + pnorm) * (dn + pnorm)).sqrt();
    let r_res = (smax_a + smax_b) * TRUST_RADIUS;
    let c_g = smax_a * r_res;
    let l_yy = smax_a * smax_a;
    let l_yx = smax_a * smax_b;
    let constants = SmoothnessConstants {
        l_f,
        l_h: crate::metrics::lipschitz_h_bound(c_g, l_yy, l_yx),
        c_f,
        c_g,
        l_yy_g: l_yy,
        l_yx_g: l_yx,
    };

    // r(x, y) = Ay - Bx
    let residual = {
        let a = a.clone();
        let b = b.clone();
        move |x: &[f64], y: &[f64]| -> Vec<f64> {
            let ay = &*a * DVector::from_column_slice(y);
            let bx = &*b * DVector::from_column_slice(x);
            (ay - bx).as_slice().to_vec()
        }
    };

    let upper_w = {
        let proj = proj.clone();
        move |x: &[f64], y: &[f64]| -> Vec<f64> {
            let py = &*proj * DVector::from_column_slice(y);
            x.iter().zip(py.as_slice()).map(|(&xi, &pi)| xi + pi).collect()
        }
    };

    let oracles = ProblemOracles {
        dim_x: n,
        dim_y: m,
        f_eval: {
            let c = c.clone();
            let d = d.clone();
            let upper_w = upper_w.clone();
            Box::new(move |x, y| {
                let u = vecops::dot(&c, x) + vecops::dot(&d, y);
                let w = upper_w(x, y);
                u.sin() + (vecops::norm_sq(&w) + 1.0).ln()
            })
        },
        grad_f: {
            let c = c.clone();
            let d = d.clone();
            let proj = proj.clone();
            let upper_w = upper_w.clone();
            Box::new(move |x, y| {
                let u = vecops::dot(&c, x) + vecops::dot(&d, y);
                let cu = u.cos();
                let w = upper_w(x, y);
                let denom = vecops::norm_sq(&w) + 1.0;
                let gx: Vec<f64> = c
                    .iter()
                    .zip(&w)
                    .map(|(&ci, &wi)| cu * ci + 2.0 * wi / denom)
                    .collect();
                let ptw = (proj.transpose() * DVector::from_column_slice(&w))
                    .as_slice()
                    .to_vec();
                let gy: Vec<f64> = d
                    .iter()
                    .zip(&ptw)
                    .map(|(&di, &pi)| cu * di + 2.0 * pi / denom)
                    .collect();
                (gx, gy)
            })
        },
        grad_y_g: {
            let a = a.clone();
            let residual = residual.clone();
            Box::new(move |x, y| {
                (a.transpose() * DVector::from_column_slice(&residual(x, y)))
                    .as_slice()
                    .to_vec()
            })
        },
        hvp_yx: {
            let a = a.clone();
            let b = b.clone();
            // (∇²_{yx} g)' v = -B'A v.
            Box::new(move |_, _, v| {
                let av = &*a * DVector::from_column_slice(v);
                (-(b.transpose() * av)).as_slice().to_vec()
            })
        },
        hvp_yy: {
            let a = a.clone();
            Box::new(move |_, _, v| {
                let av = &*a * DVector::from_column_slice(v);
                (a.transpose() * av).as_slice().to_vec()
            })
        },
        constants: Some(constants),
    };

    let ground_truth = if full_rank {
        let a_gt = a.clone();
        let b_gt = b.clone();
        Some(GroundTruth {
            y_star: Box::new(move |x: &[f64]| -> Vec<f64> {
                // Least squares: y⋆ = (AᵀA)⁻¹ AᵀB x.
                let rhs = a_gt.transpose() * (&*b_gt * DVector::from_column_slice(x));
                (a_gt.transpose() * &*a_gt)
                    .lu()
                    .solve(&rhs)
                    .expect("AᵀA invertible")
                    .as_slice()
                    .to_vec()
            }),
            hypergradient: None,
        })
    } else {
        None
    };

    BenchmarkProblem {
        name: "regularity".into(),
        oracles,
        g_eval: {
            let residual = residual.clone();
            Box::new(move |x, y| 0.5 * vecops::norm_sq(&residual(x, y)))
        },
        grad_x_g: Some({
            let b = b.clone();
            Box::new(move |x, y| {
                (-(b.transpose() * DVector::from_column_slice(&residual(x, y))))
                    .as_slice()
                    .to_vec()
            })
        }),
        metadata: ProblemMetadata {
            seed,
            dim_x: n,
            dim_y: m,
            condition_number: None,
            corruption_rate: None,
            reg_lambda: None,
            strongly_convex: full_rank,
            sigma_plus_min: Some(sigma_plus_min),
            trust_radius: TRUST_RADIUS,
        },
        ground_truth,
    }
}
