//! Approximate implicit differentiation baseline: inner gradient steps on
//! `g(x, ·)`, a CG solve against `∇²_{yy} g` for
//! `v` with `∇²_{yy} g v = ∇_y f`, and outer descent along the surrogate
//! `F = ∇_x f - (∇²_{yx} g)' v`.

use std::time::Instant;

use crate::baselines::{cg_solve, BaselineConfig};
use crate::error::{Error, Result};
use crate::oracle::OracleCalls;
use crate::problems::BenchmarkProblem;
use crate::solver::{IterateRecord, RunConfig, Trace, DIVERGENCE_GUARD};
use crate::vecops;

fn require_strongly_convex(problem: &BenchmarkProblem) -> Result<()> {
    if !problem.metadata.strongly_convex {
        return Err(Error::InvalidConfig(format!(
            "AID requires a strongly convex lower level; problem '{}' is not flagged as such",
            problem.name
        )));
    }
    Ok(())
}

/// Hypergradient surrogate `F(x, y)` with the oracle calls it consumed.
pub fn aid_hypergradient(
    problem: &BenchmarkProblem,
    x: &[f64],
    y: &[f64],
    cfg: &BaselineConfig,
) -> Result<(Vec<f64>, OracleCalls)> {
    require_strongly_convex(problem)?;
    let o = &problem.oracles;
    let mut calls = OracleCalls::default();
    let (gfx, gfy) = o.grad_f(x, y);
    calls.grad_f += 1;
    let mut cg_hvps = 0u64;
    let sol = cg_solve(
        |v| {
            cg_hvps += 1;
            o.hvp_yy(x, y, v)
        },
        &gfy,
        cfg.cg_tol,
        cfg.cg_max_iters,
    )?;
    calls.hvp += cg_hvps;
    let cross = o.hvp_yx(x, y, &sol.v);
    calls.hvp += 1;
    let f = vecops::sub(&gfx, &cross);
    Ok((f, calls))
}

/// Diagnostic `‖F(x, y)‖`, not charged to any counter.
pub fn hypergradient_norm(
    problem: &BenchmarkProblem,
    x: &[f64],
    y: &[f64],
    cfg: &BaselineConfig,
) -> Result<f64> {
    let (f, _) = aid_hypergradient(problem, x, y, cfg)?;
    Ok(vecops::norm(&f))
}

/// Double-loop AID descent: `inner_iters` gradient steps on `g(x, ·)` (with
/// `y` warm-started across outer iterations), then one outer step
/// `x ← x - outer_step · F`.
pub fn aid_run(
    problem: &BenchmarkProblem,
    x0: &[f64],
    y0: &[f64],
    cfg: &BaselineConfig,
) -> Result<Trace> {
    aid_run_with_inspector(problem, x0, y0, cfg, |_, _, _, _| {})
}

/// [`aid_run`] invoking `on_record(k, x, y, record)` at every recorded
/// iterate, before the outer update.
pub fn aid_run_with_inspector<F>(
    problem: &BenchmarkProblem,
    x0: &[f64],
    y0: &[f64],
    cfg: &BaselineConfig,
    mut on_record: F,
) -> Result<Trace>
where
    F: FnMut(usize, &[f64], &[f64], &IterateRecord),
{
    cfg.validate()?;
    require_strongly_convex(problem)?;
    let o = &problem.oracles;
    let started = Instant::now();
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut calls = OracleCalls::default();
    let mut records = Vec::new();
    let mut sum_delta_sq = 0.0;
    let mut sum_h = 0.0;
    let mut max_x_norm: f64 = vecops::norm(&x);
    let mut max_y_norm: f64 = vecops::norm(&y);

    for k in 0..cfg.k_iters {
        for _ in 0..cfg.inner_iters {
            let gy = o.grad_y_g(&x, &y);
            calls.grad_g += 1;
            if !vecops::all_finite(&gy) {
                return Err(Error::Diverged {
                    k,
                    magnitude: f64::NAN,
                    last_record: records.last().cloned().map(Box::new),
                });
            }
            vecops::axpy(&mut y, -cfg.inner_step, &gy);
        }

        let (gfx, gfy) = o.grad_f(&x, &y);
        calls.grad_f += 1;
        let mut cg_hvps = 0u64;
        let sol = cg_solve(
            |v| {
                cg_hvps += 1;
                o.hvp_yy(&x, &y, v)
            },
            &gfy,
            cfg.cg_tol,
            cfg.cg_max_iters,
        )?;
        calls.hvp += cg_hvps;
        let cross = o.hvp_yx(&x, &y, &sol.v);
        calls.hvp += 1;
        let f_dir = vecops::sub(&gfx, &cross);
        let f_norm_sq = vecops::norm_sq(&f_dir);

        // Diagnostic metrics (not charged to the counters).
        let h = vecops::norm_sq(&o.grad_y_g(&x, &y));
        sum_delta_sq += f_norm_sq;
        sum_h += h;

        if k % cfg.record_every == 0 || k == cfg.k_iters - 1 {
            let record = IterateRecord {
                k,
                f_val: o.f(&x, &y),
                h_val: h,
                grad_h_sq: 0.0,
                delta_sq: f_norm_sq,
                lambda: 0.0,
                kkt_stationarity: f_norm_sq,
                wall_nanos: started.elapsed().as_nanos() as u64,
                oracle_calls: calls,
                rho: 0.0,
                feas_slack: 0.0,
            };
            on_record(k, &x, &y, &record);
            records.push(record);
        }

        vecops::axpy(&mut x, -cfg.outer_step, &f_dir);
        let mag = vecops::max_abs(&x).max(vecops::max_abs(&y));
        if !mag.is_finite() || mag > DIVERGENCE_GUARD {
            return Err(Error::Diverged {
                k,
                magnitude: mag,
                last_record: records.last().cloned().map(Box::new),
            });
        }
        max_x_norm = max_x_norm.max(vecops::norm(&x));
        max_y_norm = max_y_norm.max(vecops::norm(&y));
    }

    Ok(Trace {
        config: RunConfig::Baseline(cfg.clone()),
        records,
        final_x: x,
        final_y: y,
        problem_name: problem.name.clone(),
        schedule_name: "aid".into(),
        sum_delta_sq,
        sum_grad_h_sq: 0.0,
        sum_h,
        iters_run: cfg.k_iters,
        max_x_norm,
        max_y_norm,
        start_calls: OracleCalls::default(),
        total_calls: calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{ProblemOracles, SmoothnessConstants};
    use crate::problems::{fd_hypergradient, make_coreset, make_sc_synthetic, normal_vec, test_rng, BenchmarkProblem, GroundTruth, ProblemMetadata};

    fn toy_problem() -> BenchmarkProblem {
        BenchmarkProblem {
            name: "toy".into(),
            oracles: ProblemOracles {
                dim_x: 1,
                dim_y: 1,
                f_eval: Box::new(|x, y| 0.5 * (x[0] * x[0] + y[0] * y[0])),
                grad_f: Box::new(|x, y| (vec![x[0]], vec![y[0]])),
                grad_y_g: Box::new(|x, y| vec![y[0] - x[0]]),
                hvp_yx: Box::new(|_, _, v| vec![-v[0]]),
                hvp_yy: Box::new(|_, _, v| vec![v[0]]),
                constants: Some(SmoothnessConstants {
                    l_f: 1.0,
                    l_h: 8.0,
                    c_f: 10.0,
                    c_g: 10.0,
                    l_yy_g: 1.0,
                    l_yx_g: 1.0,
                }),
            },
            g_eval: Box::new(|x, y| 0.5 * (y[0] - x[0]) * (y[0] - x[0])),
            grad_x_g: Some(Box::new(|x, y| vec![x[0] - y[0]])),
            metadata: ProblemMetadata {
                seed: 0,
                dim_x: 1,
                dim_y: 1,
                condition_number: None,
                corruption_rate: None,
                reg_lambda: None,
                strongly_convex: true,
                sigma_plus_min: None,
                trust_radius: 100.0,
            },
            ground_truth: Some(GroundTruth {
                y_star: Box::new(|x| vec![x[0]]),
                hypergradient: Some(Box::new(|x| vec![2.0 * x[0]])),
            }),
        }
    }

    #[test]
    fn hypergradient_on_coreset_matches_finite_differences() {
        let p = make_coreset(42);
        let cfg = BaselineConfig::aid(&p, 1);
        let gt = p.ground_truth.as_ref().unwrap();
        let mut rng = test_rng(15);
        for _ in 0..5 {
            let x = normal_vec(&mut rng, 4);
            let ys = (gt.y_star)(&x);
            let (f, _) = aid_hypergradient(&p, &x, &ys, &cfg).unwrap();
            let fd = fd_hypergradient(&p, &x, 1e-6).unwrap();
            let err = vecops::norm(&vecops::sub(&f, &fd)) / vecops::norm(&fd).max(1.0);
            assert!(err <= 1e-4, "rel err {err:.3e}");
        }
    }

    #[test]
    fn hypergradient_reduces_to_grad_x_when_grad_y_f_zero() {
        let mut p = toy_problem();
        p.oracles.grad_f = Box::new(|x, _| (vec![3.0 * x[0]], vec![0.0]));
        let cfg = BaselineConfig::aid(&p, 1);
        let (f, _) = aid_hypergradient(&p, &[2.0], &[0.5], &cfg).unwrap();
        assert_eq!(f, vec![6.0]);
    }

    #[test]
    fn hypergradient_at_sc_ground_truth_matches_closed_form() {
        let p = make_sc_synthetic(42, 20);
        let cfg = BaselineConfig::aid(&p, 1);
        let gt = p.ground_truth.as_ref().unwrap();
        let hyper = gt.hypergradient.as_ref().unwrap();
        let mut rng = test_rng(23);
        let x = normal_vec(&mut rng, 20);
        let ys = (gt.y_star)(&x);
        let (f, _) = aid_hypergradient(&p, &x, &ys, &cfg).unwrap();
        let exact = hyper(&x);
        let err = vecops::norm(&vecops::sub(&f, &exact));
        assert!(err <= 1e-6, "‖F - ∇ℓ‖ = {err:.3e}");
    }

    #[test]
    fn refuses_nonconvex_lower_level() {
        let mut p = toy_problem();
        p.metadata.strongly_convex = false;
        let cfg = BaselineConfig::aid(&p, 1);
        assert!(aid_hypergradient(&p, &[0.0], &[0.0], &cfg).is_err());
        assert!(aid_run(&p, &[0.0], &[0.0], &cfg).is_err());
    }

    #[test]
    fn rejects_zero_inner_iters() {
        let p = toy_problem();
        let mut cfg = BaselineConfig::aid(&p, 10);
        cfg.inner_iters = 0;
        assert!(aid_run(&p, &[1.0], &[0.0], &cfg).is_err());
    }

    #[test]
    fn converges_on_quadratic_toy() {
        let p = toy_problem();
        let mut cfg = BaselineConfig::aid(&p, 500);
        cfg.outer_step = 0.2;
        let trace = aid_run(&p, &[1.0], &[0.0], &cfg).unwrap();
        let last = trace.records.last().unwrap();
        assert!(
            last.kkt_stationarity.sqrt() <= 1e-8,
            "‖F‖ = {:.3e}",
            last.kkt_stationarity.sqrt()
        );
        assert!(trace.final_x[0].abs() <= 1e-6);
    }
}
