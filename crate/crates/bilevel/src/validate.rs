//! Oracle validation suite: finite differences, Hessian symmetry, QP
//! closed-form/projection agreement, and determinism, on a named problem.

use serde::Serialize;

use crate::error::Result;
use crate::problems::{
    finite_diff_check, hvp_symmetry_defect, sample_point, test_rng, BenchmarkProblem,
};
use crate::{qp, vecops};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the check's metric.
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub problem: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }
}

const FD_TOLERANCE: f64 = 1e-5;
const SYMMETRY_TOLERANCE: f64 = 1e-10;
const QP_TOLERANCE: f64 = 1e-8;
const POINTS: usize = 10;

/// Runs all validation checks on a problem at seeded points.
pub fn run_checks(problem: &BenchmarkProblem, seed: u64) -> Result<ValidationReport> {
    let (n, m) = problem.dims();
    let mut checks = Vec::new();

    // Finite differences of every analytic oracle.
    let mut rng = test_rng(seed);
    let mut worst_fd: f64 = 0.0;
    for _ in 0..POINTS {
        let (x, y) = sample_point(&mut rng, n, m);
        worst_fd = worst_fd.max(finite_diff_check(problem, &x, &y, 1e-6)?);
    }
    checks.push(CheckResult {
        name: "finite_differences".into(),
        passed: worst_fd <= FD_TOLERANCE,
        value: worst_fd,
        threshold: FD_TOLERANCE,
    });

    // Bilinear symmetry of the y-Hessian action.
    let mut rng = test_rng(seed ^ 0x11);
    let mut worst_sym: f64 = 0.0;
    for i in 0..POINTS {
        let (x, y) = sample_point(&mut rng, n, m);
        worst_sym = worst_sym.max(hvp_symmetry_defect(problem, &x, &y, 8, seed ^ (i as u64)));
    }
    checks.push(CheckResult {
        name: "hvp_symmetry".into(),
        passed: worst_sym <= SYMMETRY_TOLERANCE,
        value: worst_sym,
        threshold: SYMMETRY_TOLERANCE,
    });

    // Closed-form QP solution against the half-space projection oracle,
    // using gradients realized on this problem.
    let mut rng = test_rng(seed ^ 0x22);
    let mut worst_qp: f64 = 0.0;
    for _ in 0..POINTS {
        let (x, y) = sample_point(&mut rng, n, m);
        let (gfx, gfy) = problem.oracles.grad_f(&x, &y);
        let gy = problem.oracles.grad_y_g(&x, &y);
        let (hx, hy) = qp::grad_h_from(&problem.oracles, &x, &y, &gy)?;
        let h = vecops::norm_sq(&gy);
        for alpha in [0.01, 0.1, 1.0] {
            for rho in [qp::rho_regular(&hx, &hy), qp::rho_general(&hx, &hy, h)] {
                let step =
                    qp::solve_step(&gfx, &gfy, &hx, &hy, rho, alpha, qp::DEFAULT_DENOM_TOL);
                let (bx, by, blam) = qp::brute_solve(&gfx, &gfy, &hx, &hy, rho, alpha);
                let mut diff = (step.lambda - blam).abs();
                for i in 0..n {
                    diff = diff.max((step.delta_x[i] - bx[i]).abs());
                }
                for i in 0..m {
                    diff = diff.max((step.delta_y[i] - by[i]).abs());
                }
                worst_qp = worst_qp.max(diff);
            }
        }
    }
    checks.push(CheckResult {
        name: "qp_closed_form_vs_projection".into(),
        passed: worst_qp <= QP_TOLERANCE,
        value: worst_qp,
        threshold: QP_TOLERANCE,
    });

    // Determinism: repeated evaluations must agree bitwise.
    let mut rng = test_rng(seed ^ 0x33);
    let mut worst_det: f64 = 0.0;
    for _ in 0..3 {
        let (x, y) = sample_point(&mut rng, n, m);
        let a = problem.oracles.grad_y_g(&x, &y);
        let b = problem.oracles.grad_y_g(&x, &y);
        if a != b {
            worst_det = 1.0;
        }
        let (fa, _) = problem.oracles.grad_f(&x, &y);
        let (fb, _) = problem.oracles.grad_f(&x, &y);
        if fa != fb {
            worst_det = 1.0;
        }
    }
    checks.push(CheckResult {
        name: "determinism".into(),
        passed: worst_det == 0.0,
        value: worst_det,
        threshold: 0.0,
    });

    // Ground-truth lower-level optimality, when available.
    if let Some(gt) = &problem.ground_truth {
        let mut rng = test_rng(seed ^ 0x44);
        let mut worst_gt: f64 = 0.0;
        for _ in 0..5 {
            let (x, _) = sample_point(&mut rng, n, m);
            let ys = (gt.y_star)(&x);
            worst_gt = worst_gt.max(vecops::norm(&problem.oracles.grad_y_g(&x, &ys)));
        }
        checks.push(CheckResult {
            name: "ground_truth_stationarity".into(),
            passed: worst_gt <= 1e-8,
            value: worst_gt,
            threshold: 1e-8,
        });
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { problem: problem.name.clone(), seed, checks, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ProblemOracles;
    use crate::problems::{make_coreset, ProblemMetadata};

    #[test]
    fn coreset_passes_all_checks() {
        let p = make_coreset(42);
        let report = run_checks(&p, 7).unwrap();
        assert!(report.passed, "failed: {:?}", report.first_failure());
    }

    #[test]
    fn tampered_oracle_is_named_in_report() {
        let mut p = make_coreset(42);
        // Wrong sign on the y-gradient of f.
        p.oracles.grad_f = Box::new(|_, y| (vec![0.0; 4], vecops::scale(y, -2.0)));
        let report = run_checks(&p, 7).unwrap();
        assert!(!report.passed);
        assert_eq!(report.first_failure().unwrap().name, "finite_differences");
    }

    #[test]
    fn nondeterministic_oracle_detected() {
        use std::sync::atomic::{AtomicU64, Ordering};
        let counter = AtomicU64::new(0);
        let mut p = make_coreset(42);
        p.oracles.grad_y_g = Box::new(move |_, y| {
            let k = counter.fetch_add(1, Ordering::Relaxed);
            let mut g = vecops::scale(y, 2.0);
            g[0] += k as f64 * 1e-9;
            g
        });
        let report = run_checks(&p, 7).unwrap();
        let det = report.checks.iter().find(|c| c.name == "determinism").unwrap();
        assert!(!det.passed);
    }

    #[test]
    fn asymmetric_hvp_detected() {
        let p = make_coreset(42);
        let mut bad = BenchmarkProblem {
            name: "bad".into(),
            oracles: ProblemOracles {
                dim_x: 2,
                dim_y: 2,
                f_eval: Box::new(|_, _| 0.0),
                grad_f: Box::new(|_, _| (vec![0.0; 2], vec![0.0; 2])),
                grad_y_g: Box::new(|_, y| y.to_vec()),
                hvp_yx: Box::new(|_, _, _| vec![0.0; 2]),
                // Not symmetric: upper-triangular action.
                hvp_yy: Box::new(|_, _, v| vec![v[0] + v[1], v[1]]),
                constants: None,
            },
            g_eval: Box::new(|_, y| 0.5 * (y[0] * y[0] + y[1] * y[1])),
            grad_x_g: None,
            metadata: ProblemMetadata {
                seed: 0,
                dim_x: 2,
                dim_y: 2,
                condition_number: None,
                corruption_rate: None,
                reg_lambda: None,
                strongly_convex: true,
                sigma_plus_min: None,
                trust_radius: 10.0,
            },
            ground_truth: None,
        };
        bad.metadata.seed = p.metadata.seed;
        let report = run_checks(&bad, 7).unwrap();
        let sym = report.checks.iter().find(|c| c.name == "hvp_symmetry").unwrap();
        assert!(!sym.passed);
    }
}
