//! Synthetic benchmarks: a strongly convex and a nonconvex lower level under
//! the same upper objective `f = sin(c'x + d'y) + log(‖x+y‖² + 1)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::oracle::{ProblemOracles, SmoothnessConstants};
use crate::problems::{
    make_conditioned_matrix, normal_vec, test_rng, BenchmarkProblem, GroundTruth, ProblemMetadata,
};
use crate::vecops;

const MAX_COND: f64 = 10.0;
const SC_TRUST_RADIUS: f64 = 10.0;
const NC_TRUST_RADIUS: f64 = 6.0;

struct UpperObjective {
    c: Vec<f64>,
    d: Vec<f64>,
}

/// Draws the linear coefficients of the upper objective at unit norm scale
/// (`N(0, I/n)`), keeping `L_f` dimension-free so the prescribed step sizes
/// are not throttled by the `1/(L_f + αL_h)` cap across iteration budgets.
fn draw_upper(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> UpperObjective {
    let scale = 1.0 / (n as f64).sqrt();
    UpperObjective {
        c: vecops::scale(&normal_vec(rng, n), scale),
        d: vecops::scale(&normal_vec(rng, n), scale),
    }
}

impl UpperObjective {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let u = vecops::dot(&self.c, x) + vecops::dot(&self.d, y);
        let wsq = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| (a + b) * (a + b))
            .sum::<f64>();
        u.sin() + (wsq + 1.0).ln()
    }

    fn gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let u = vecops::dot(&self.c, x) + vecops::dot(&self.d, y);
        let cu = u.cos();
        let w: Vec<f64> = x.iter().zip(y).map(|(&a, &b)| a + b).collect();
        let denom = vecops::norm_sq(&w) + 1.0;
        let gx = self
            .c
            .iter()
            .zip(&w)
            .map(|(&ci, &wi)| cu * ci + 2.0 * wi / denom)
            .collect();
        let gy = self
            .d
            .iter()
            .zip(&w)
            .map(|(&di, &wi)| cu * di + 2.0 * wi / denom)
            .collect();
        (gx, gy)
    }

    /// Global bounds: the sin term has Hessian norm ≤ ‖c‖²+‖d‖², the log term
    /// ≤ 4; the gradient blocks are bounded by ‖c‖+1 and ‖d‖+1.
    fn constants(&self) -> (f64, f64) {
        let cn = vecops::norm(&self.c);
        let dn = vecops::norm(&self.d);
        let l_f = cn * cn + dn * dn + 4.0;
        let c_f = ((cn + 1.0) * (cn + 1.0) + (dn + 1.0) * (dn + 1.0)).sqrt();
        (l_f, c_f)
    }
}

fn mat_vec(h: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (h * DVector::from_column_slice(v)).as_slice().to_vec()
}

fn mat_t_vec(h: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (h.transpose() * DVector::from_column_slice(v)).as_slice().to_vec()
}

/// Strongly convex lower level: `g(x,y) = ½‖Hy - x‖²` with `cond(H) ≤ 10`.
///
/// `y⋆(x) = H⁻¹x` is available in closed form, as is the hypergradient
/// `∇ℓ(x) = ∇_x f(x, y⋆) + H⁻ᵀ ∇_y f(x, y⋆)`.
pub fn make_sc_synthetic(seed: u64, n: usize) -> BenchmarkProblem {
    assert!(n >= 1);
    let h = Arc::new(make_conditioned_matrix(seed, n, n, MAX_COND).expect("valid dims"));
    let mut rng = test_rng(seed ^ 0xc0ffee);
    let upper = Arc::new(draw_upper(&mut rng, n));

    let sv = h.clone_owned().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(f64::MIN, f64::max);
    let smin = sv.iter().cloned().fold(f64::MAX, f64::min);
    let (l_f, c_f) = upper.constants();
    let c_g = smax * (smax + 1.0) * SC_TRUST_RADIUS;
    let l_yy = smax * smax;
    let l_yx = smax;
    let constants = SmoothnessConstants {
        l_f,
        l_h: crate::metrics::lipschitz_h_bound(c_g, l_yy, l_yx),
        c_f,
        c_g,
        l_yy_g: l_yy,
        l_yx_g: l_yx,
    };

    let lu = Arc::new(h.clone_owned().lu());
    let lu_t = Arc::new(h.transpose().lu());

    let residual = {
        let h = h.clone();
        move |x: &[f64], y: &[f64]| -> Vec<f64> {
            let hy = mat_vec(&h, y);
            vecops::sub(&hy, x)
        }
    };

    let oracles = ProblemOracles {
        dim_x: n,
        dim_y: n,
        f_eval: {
            let upper = upper.clone();
            Box::new(move |x, y| upper.value(x, y))
        },
        grad_f: {
            let upper = upper.clone();
            Box::new(move |x, y| upper.gradient(x, y))
        },
        grad_y_g: {
            let h = h.clone();
            let residual = residual.clone();
            Box::new(move |x, y| mat_t_vec(&h, &residual(x, y)))
        },
        hvp_yx: {
            let h = h.clone();
            Box::new(move |_, _, v| vecops::scale(&mat_vec(&h, v), -1.0))
        },
        hvp_yy: {
            let h = h.clone();
            Box::new(move |_, _, v| mat_t_vec(&h, &mat_vec(&h, v)))
        },
        constants: Some(constants),
    };

    let y_star = {
        let lu = lu.clone();
        Box::new(move |x: &[f64]| -> Vec<f64> {
            lu.solve(&DVector::from_column_slice(x))
                .expect("H invertible")
                .as_slice()
                .to_vec()
        })
    };
    let hypergradient = {
        let upper = upper.clone();
        let lu = lu.clone();
        Box::new(move |x: &[f64]| -> Vec<f64> {
            let ys = lu
                .solve(&DVector::from_column_slice(x))
                .expect("H invertible");
            let (gx, gy) = upper.gradient(x, ys.as_slice());
            let pull = lu_t
                .solve(&DVector::from_column_slice(&gy))
                .expect("H invertible");
            vecops::add_scaled(&gx, 1.0, pull.as_slice())
        })
    };

    BenchmarkProblem {
        name: "sc_synthetic".into(),
        oracles,
        g_eval: {
            let residual = residual.clone();
            Box::new(move |x, y| 0.5 * vecops::norm_sq(&residual(x, y)))
        },
        grad_x_g: Some(Box::new(move |x, y| vecops::scale(&residual(x, y), -1.0))),
        metadata: ProblemMetadata {
            seed,
            dim_x: n,
            dim_y: n,
            condition_number: Some(smax / smin),
            corruption_rate: None,
            reg_lambda: None,
            strongly_convex: true,
            sigma_plus_min: None,
            trust_radius: SC_TRUST_RADIUS,
        },
        ground_truth: Some(GroundTruth { y_star, hypergradient: Some(hypergradient) }),
    }
}

/// Nonconvex lower level: `g(x,y) = cos(½‖Hy - x‖²)`.
pub fn make_nc_synthetic(seed: u64, n: usize) -> BenchmarkProblem {
    assert!(n >= 1);
    let h = Arc::new(make_conditioned_matrix(seed, n, n, MAX_COND).expect("valid dims"));
    let mut rng = test_rng(seed ^ 0xc0ffee);
    let upper = Arc::new(draw_upper(&mut rng, n));

    let sv = h.clone_owned().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(f64::MIN, f64::max);
    let smin = sv.iter().cloned().fold(f64::MAX, f64::min);
    let (l_f, c_f) = upper.constants();
    let r_res = (smax + 1.0) * NC_TRUST_RADIUS; // bound on ‖Hy - x‖
    let c_g = smax * r_res;
    let l_yy = smax * smax * (1.0 + r_res * r_res);
    let l_yx = smax * (1.0 + r_res * r_res);
    let constants = SmoothnessConstants {
        l_f,
        l_h: crate::metrics::lipschitz_h_bound(c_g, l_yy, l_yx),
        c_f,
        c_g,
        l_yy_g: l_yy,
        l_yx_g: l_yx,
    };

    let residual = {
        let h = h.clone();
        move |x: &[f64], y: &[f64]| -> Vec<f64> {
            let hy = mat_vec(&h, y);
            vecops::sub(&hy, x)
        }
    };

    let oracles = ProblemOracles {
        dim_x: n,
        dim_y: n,
        f_eval: {
            let upper = upper.clone();
            Box::new(move |x, y| upper.value(x, y))
        },
        grad_f: {
            let upper = upper.clone();
            Box::new(move |x, y| upper.gradient(x, y))
        },
        grad_y_g: {
            let h = h.clone();
            let residual = residual.clone();
            Box::new(move |x, y| {
                let r = residual(x, y);
                let u = 0.5 * vecops::norm_sq(&r);
                vecops::scale(&mat_t_vec(&h, &r), -u.sin())
            })
        },
        hvp_yx: {
            let h = h.clone();
            let residual = residual.clone();
            // (∇²_{yx} g)' v with ∇²_{yx} g = cos(u) (H'r) r' + sin(u) H'.
            Box::new(move |x, y, v| {
                let r = residual(x, y);
                let u = 0.5 * vecops::norm_sq(&r);
                let htr = mat_t_vec(&h, &r);
                let coef = u.cos() * vecops::dot(&htr, v);
                let mut out = vecops::scale(&r, coef);
                vecops::axpy(&mut out, u.sin(), &mat_vec(&h, v));
                out
            })
        },
        hvp_yy: {
            let h = h.clone();
            let residual = residual.clone();
            // ∇²_{yy} g = -cos(u) (H'r)(H'r)' - sin(u) H'H.
            Box::new(move |x, y, v| {
                let r = residual(x, y);
                let u = 0.5 * vecops::norm_sq(&r);
                let htr = mat_t_vec(&h, &r);
                let coef = -u.cos() * vecops::dot(&htr, v);
                let mut out = vecops::scale(&htr, coef);
                vecops::axpy(&mut out, -u.sin(), &mat_t_vec(&h, &mat_vec(&h, v)));
                out
            })
        },
        constants: Some(constants),
    };

    BenchmarkProblem {
        name: "nc_synthetic".into(),
        oracles,
        g_eval: {
            let residual = residual.clone();
            Box::new(move |x, y| (0.5 * vecops::norm_sq(&residual(x, y))).cos())
        },
        grad_x_g: Some(Box::new(move |x, y| {
            let r = residual(x, y);
            let u = 0.5 * vecops::norm_sq(&r);
            vecops::scale(&r, u.sin())
        })),
        metadata: ProblemMetadata {
            seed,
            dim_x: n,
            dim_y: n,
            condition_number: Some(smax / smin),
            corruption_rate: None,
            reg_lambda: None,
            strongly_convex: false,
            sigma_plus_min: None,
            trust_radius: NC_TRUST_RADIUS,
        },
        ground_truth: None,
    }
}
