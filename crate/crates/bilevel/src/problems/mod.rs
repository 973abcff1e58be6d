//! Benchmark problem generators with analytic oracles, plus the
//! finite-difference machinery that validates them.

mod conditioned;
mod coreset;
mod dhc;
mod regularity;
mod synthetic;

pub use conditioned::make_conditioned_matrix;
pub use coreset::make_coreset;
pub use dhc::{make_dhc, DhcData, DhcProblem};
pub use regularity::make_regularity_example;
pub use synthetic::{make_nc_synthetic, make_sc_synthetic};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{ProblemOracles, ScalarFn, VectorFn};
use crate::{qp, vecops};

/// Generator provenance and regime flags for a benchmark instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemMetadata {
    pub seed: u64,
    pub dim_x: usize,
    pub dim_y: usize,
    pub condition_number: Option<f64>,
    pub corruption_rate: Option<f64>,
    pub reg_lambda: Option<f64>,
    /// Lower level is strongly convex in `y` (gates the AID baseline).
    pub strongly_convex: bool,
    /// Smallest nonzero eigenvalue of `AᵀA` for the regularity example.
    pub sigma_plus_min: Option<f64>,
    /// Radius of the ball (around the origin, per block) on which the
    /// supplied smoothness constants are valid.
    pub trust_radius: f64,
}

/// Closed-form helpers available for problems with a tractable lower level.
pub struct GroundTruth {
    /// `y⋆(x)`, the exact lower-level minimizer.
    pub y_star: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    /// `∇ℓ(x)` of the implicit objective `ℓ(x) = f(x, y⋆(x))`, when known.
    pub hypergradient: Option<Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
}

/// A named problem instance: solver oracles plus the extra evaluators used
/// for validation, warm-start diagnostics and first-order baselines.
pub struct BenchmarkProblem {
    pub name: String,
    pub oracles: ProblemOracles,
    pub g_eval: ScalarFn,
    /// `∇_x g`, needed by value-function baselines.
    pub grad_x_g: Option<VectorFn>,
    pub metadata: ProblemMetadata,
    pub ground_truth: Option<GroundTruth>,
}

impl BenchmarkProblem {
    pub fn dims(&self) -> (usize, usize) {
        (self.oracles.dim_x, self.oracles.dim_y)
    }

    /// `ℓ(x) = f(x, y⋆(x))`; requires ground truth.
    pub fn implicit_value(&self, x: &[f64]) -> Option<f64> {
        let gt = self.ground_truth.as_ref()?;
        let ys = (gt.y_star)(x);
        Some(self.oracles.f(x, &ys))
    }
}

/// Seeded RNG used by every generator and test in this crate.
pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Vector of i.i.d. standard normals.
pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Builds a default-parameter instance of one of the five named benchmarks.
pub fn from_name(name: &str, seed: u64) -> Result<BenchmarkProblem> {
    match name {
        "sc_synthetic" => Ok(make_sc_synthetic(seed, 20)),
        "nc_synthetic" => Ok(make_nc_synthetic(seed, 20)),
        "coreset" => Ok(make_coreset(seed)),
        "dhc" => Ok(make_dhc(seed, 50, 1000, 500, 0.25)?.problem),
        "regularity" => Ok(make_regularity_example(seed, 6, 4, 4)),
        other => Err(Error::InvalidConfig(format!("unknown problem '{other}'"))),
    }
}

pub const PROBLEM_NAMES: [&str; 5] = ["sc_synthetic", "nc_synthetic", "coreset", "dhc", "regularity"];

/// Dimension threshold above which finite-difference checks switch from
/// coordinate-wise differences to random directional probes.
const FD_COORDINATE_LIMIT: usize = 64;
const FD_DIRECTIONAL_PROBES: usize = 16;

/// Central-difference validation of every analytic oracle at one point.
///
/// Checks `grad_f` against differences of `f`, `grad_y_g` (and `grad_x_g`
/// when present) against differences of `g`, `grad_h` against differences of
/// `h = ‖∇_y g‖²`, and both Hessian-vector products with bilinear directional
/// probes. Returns the worst error, measured as `‖fd - analytic‖ / max(1,
/// ‖analytic‖)`. Steps are scaled by coordinate magnitude.
pub fn finite_diff_check(
    problem: &BenchmarkProblem,
    x: &[f64],
    y: &[f64],
    step: f64,
) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    let o = &problem.oracles;
    let mut rng = test_rng(problem.metadata.seed ^ 0x5eed_fd);
    let mut worst: f64 = 0.0;

    // f against grad_f over the joint (x, y) variable.
    let f_fn = |xx: &[f64], yy: &[f64]| -> f64 { o.f(xx, yy) };
    let (gfx, gfy) = o.grad_f(x, y);
    let gf: Vec<f64> = gfx.iter().chain(gfy.iter()).copied().collect();
    worst = worst.max(check_gradient_joint(&f_fn, x, y, &gf, step, &mut rng));

    // g against grad_y_g (y block) and optionally grad_x_g (x block).
    let g_fn = |xx: &[f64], yy: &[f64]| -> f64 { (problem.g_eval)(xx, yy) };
    let gy = o.grad_y_g(x, y);
    worst = worst.max(check_gradient_block(&g_fn, x, y, &gy, step, false, &mut rng));
    if let Some(gxg) = &problem.grad_x_g {
        let gx = gxg(x, y);
        worst = worst.max(check_gradient_block(&g_fn, x, y, &gx, step, true, &mut rng));
    }

    // h against grad_h; this is the check that pins the Hessian-vector
    // product composition (including its factor of two).
    let h_fn = |xx: &[f64], yy: &[f64]| -> f64 {
        let g = o.grad_y_g(xx, yy);
        vecops::norm_sq(&g)
    };
    let (hx, hy) = qp::grad_h(o, x, y)?;
    let gh: Vec<f64> = hx.iter().chain(hy.iter()).copied().collect();
    worst = worst.max(check_gradient_joint(&h_fn, x, y, &gh, step, &mut rng));

    // Directional HVP probes: d/dt <∇_y g(x, y + t u), v> = <hvp_yy(v), u>
    // and d/dt <∇_y g(x + t u, y), v> = <hvp_yx(v), u>.
    for _ in 0..4 {
        let v = unit_vec(&mut rng, o.dim_y);
        let uy = unit_vec(&mut rng, o.dim_y);
        let ux = unit_vec(&mut rng, o.dim_x);
        let hyy = o.hvp_yy(x, y, &v);
        let hyx = o.hvp_yx(x, y, &v);

        let d = step * (1.0 + vecops::max_abs(y));
        let yp = vecops::add_scaled(y, d, &uy);
        let ym = vecops::add_scaled(y, -d, &uy);
        let fd_yy = (vecops::dot(&o.grad_y_g(x, &yp), &v) - vecops::dot(&o.grad_y_g(x, &ym), &v))
            / (2.0 * d);
        let an_yy = vecops::dot(&hyy, &uy);
        worst = worst.max((fd_yy - an_yy).abs() / an_yy.abs().max(1.0));

        let d = step * (1.0 + vecops::max_abs(x));
        let xp = vecops::add_scaled(x, d, &ux);
        let xm = vecops::add_scaled(x, -d, &ux);
        let fd_yx = (vecops::dot(&o.grad_y_g(&xp, y), &v) - vecops::dot(&o.grad_y_g(&xm, y), &v))
            / (2.0 * d);
        let an_yx = vecops::dot(&hyx, &ux);
        worst = worst.max((fd_yx - an_yx).abs() / an_yx.abs().max(1.0));
    }

    Ok(worst)
}

fn unit_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, len);
        let n = vecops::norm(&v);
        if n > 1e-8 {
            return vecops::scale(&v, 1.0 / n);
        }
    }
}

/// Gradient check over the joint (x, y) variable.
fn check_gradient_joint(
    f: &dyn Fn(&[f64], &[f64]) -> f64,
    x: &[f64],
    y: &[f64],
    grad: &[f64],
    step: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let n = x.len();
    let m = y.len();
    let gnorm = vecops::norm(grad).max(1.0);
    if n + m <= FD_COORDINATE_LIMIT {
        let mut diff_sq = 0.0;
        for i in 0..n + m {
            let base = if i < n { x[i] } else { y[i - n] };
            let d = step * base.abs().max(1.0);
            let mut xp = x.to_vec();
            let mut yp = y.to_vec();
            let mut xm = x.to_vec();
            let mut ym = y.to_vec();
            if i < n {
                xp[i] += d;
                xm[i] -= d;
            } else {
                yp[i - n] += d;
                ym[i - n] -= d;
            }
            let fd = (f(&xp, &yp) - f(&xm, &ym)) / (2.0 * d);
            diff_sq += (fd - grad[i]) * (fd - grad[i]);
        }
        diff_sq.sqrt() / gnorm
    } else {
        let mut worst: f64 = 0.0;
        for _ in 0..FD_DIRECTIONAL_PROBES {
            let u = unit_vec(rng, n + m);
            let d = step * (1.0 + vecops::max_abs(x).max(vecops::max_abs(y)));
            let xp = vecops::add_scaled(x, d, &u[..n]);
            let yp = vecops::add_scaled(y, d, &u[n..]);
            let xm = vecops::add_scaled(x, -d, &u[..n]);
            let ym = vecops::add_scaled(y, -d, &u[n..]);
            let fd = (f(&xp, &yp) - f(&xm, &ym)) / (2.0 * d);
            let an = vecops::dot(grad, &u);
            worst = worst.max((fd - an).abs() / gnorm);
        }
        worst
    }
}

/// Gradient check over one block (x if `x_block`, else y).
fn check_gradient_block(
    f: &dyn Fn(&[f64], &[f64]) -> f64,
    x: &[f64],
    y: &[f64],
    grad: &[f64],
    step: f64,
    x_block: bool,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let dim = if x_block { x.len() } else { y.len() };
    let gnorm = vecops::norm(grad).max(1.0);
    if dim <= FD_COORDINATE_LIMIT {
        let mut diff_sq = 0.0;
        for i in 0..dim {
            let base = if x_block { x[i] } else { y[i] };
            let d = step * base.abs().max(1.0);
            let (fp, fm) = if x_block {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += d;
                xm[i] -= d;
                (f(&xp, y), f(&xm, y))
            } else {
                let mut yp = y.to_vec();
                let mut ym = y.to_vec();
                yp[i] += d;
                ym[i] -= d;
                (f(x, &yp), f(x, &ym))
            };
            let fd = (fp - fm) / (2.0 * d);
            diff_sq += (fd - grad[i]) * (fd - grad[i]);
        }
        diff_sq.sqrt() / gnorm
    } else {
        let mut worst: f64 = 0.0;
        for _ in 0..FD_DIRECTIONAL_PROBES {
            let u = unit_vec(rng, dim);
            let ref_mag = if x_block { vecops::max_abs(x) } else { vecops::max_abs(y) };
            let d = step * (1.0 + ref_mag);
            let (fp, fm) = if x_block {
                (
                    f(&vecops::add_scaled(x, d, &u), y),
                    f(&vecops::add_scaled(x, -d, &u), y),
                )
            } else {
                (
                    f(x, &vecops::add_scaled(y, d, &u)),
                    f(x, &vecops::add_scaled(y, -d, &u)),
                )
            };
            let fd = (fp - fm) / (2.0 * d);
            let an = vecops::dot(grad, &u);
            worst = worst.max((fd - an).abs() / gnorm);
        }
        worst
    }
}

/// Worst bilinear-form asymmetry `|u' hvp_yy(v) - v' hvp_yy(u)|` over random
/// unit probe pairs at `(x, y)`.
pub fn hvp_symmetry_defect(
    problem: &BenchmarkProblem,
    x: &[f64],
    y: &[f64],
    probes: usize,
    seed: u64,
) -> f64 {
    let o = &problem.oracles;
    let mut rng = test_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let u = unit_vec(&mut rng, o.dim_y);
        let v = unit_vec(&mut rng, o.dim_y);
        let a = vecops::dot(&u, &o.hvp_yy(x, y, &v));
        let b = vecops::dot(&v, &o.hvp_yy(x, y, &u));
        worst = worst.max((a - b).abs());
    }
    worst
}

/// Central-difference hypergradient of `ℓ(x) = f(x, y⋆(x))`; requires
/// ground truth. Independent oracle for baseline hypergradient checks.
pub fn fd_hypergradient(problem: &BenchmarkProblem, x: &[f64], step: f64) -> Option<Vec<f64>> {
    problem.ground_truth.as_ref()?;
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let d = step * x[i].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += d;
        xm[i] -= d;
        let fp = problem.implicit_value(&xp)?;
        let fm = problem.implicit_value(&xm)?;
        out.push((fp - fm) / (2.0 * d));
    }
    Some(out)
}

/// A seeded point with coordinates of unit scale, for validation sweeps.
pub fn sample_point(rng: &mut ChaCha8Rng, dim_x: usize, dim_y: usize) -> (Vec<f64>, Vec<f64>) {
    (normal_vec(rng, dim_x), normal_vec(rng, dim_y))
}
