//! BOME-style first-order baseline: a value-function surrogate
//! `q(x, y) = g(x, y) - g(x, ŷ)` with `ŷ` from a few inner gradient steps,
//! and updates along `-(∇f + λ_B ∇q)` where
//! `λ_B = [η‖∇q‖² - ∇f'∇q]_+ / ‖∇q‖²`. The forcing term vanishes with
//! `∇q`, so the pull toward the lower-level solution set decays smoothly
//! instead of flooring the iterates at a fixed distance.

use std::time::Instant;

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::oracle::OracleCalls;
use crate::problems::BenchmarkProblem;
use crate::solver::{IterateRecord, RunConfig, Trace, DIVERGENCE_GUARD};
use crate::vecops;

pub fn bome_run(
    problem: &BenchmarkProblem,
    x0: &[f64],
    y0: &[f64],
    cfg: &BaselineConfig,
) -> Result<Trace> {
    bome_run_with_inspector(problem, x0, y0, cfg, |_, _, _, _| {})
}

/// [`bome_run`] invoking `on_record(k, x, y, record)` at every recorded
/// iterate, before the update.
pub fn bome_run_with_inspector<F>(
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
    let grad_x_g = problem.grad_x_g.as_ref().ok_or_else(|| {
        Error::InvalidConfig(format!("BOME needs ∇_x g; problem '{}' does not supply it", problem.name))
    })?;
    let o = &problem.oracles;
    let started = Instant::now();
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut calls = OracleCalls::default();
    let mut records = Vec::new();
    let mut sum_delta_sq = 0.0;
    let mut sum_grad_h_sq = 0.0;
    let mut sum_h = 0.0;
    let mut max_x_norm: f64 = vecops::norm(&x);
    let mut max_y_norm: f64 = vecops::norm(&y);

    for k in 0..cfg.k_iters {
        // Inner refinement toward the lower-level value function.
        let mut y_hat = y.clone();
        for _ in 0..cfg.inner_iters {
            let g = o.grad_y_g(&x, &y_hat);
            calls.grad_g += 1;
            if !vecops::all_finite(&g) {
                return Err(Error::Diverged {
                    k,
                    magnitude: f64::NAN,
                    last_record: records.last().cloned().map(Box::new),
                });
            }
            vecops::axpy(&mut y_hat, -cfg.inner_step, &g);
        }

        // ∇q = (∇_x g(x,y) - ∇_x g(x,ŷ), ∇_y g(x,y)).
        let gy = o.grad_y_g(&x, &y);
        calls.grad_g += 1;
        let qx = vecops::sub(&grad_x_g(&x, &y), &grad_x_g(&x, &y_hat));
        calls.grad_g += 2;
        let (gfx, gfy) = o.grad_f(&x, &y);
        calls.grad_f += 1;

        let q_sq = vecops::norm_sq(&qx) + vecops::norm_sq(&gy);
        let f_sq = vecops::norm_sq(&gfx) + vecops::norm_sq(&gfy);
        let lambda = if q_sq <= 1e-14 * f_sq.max(1.0) {
            0.0
        } else {
            let inner = vecops::dot(&gfx, &qx) + vecops::dot(&gfy, &gy);
            (cfg.bome_eta * q_sq - inner).max(0.0) / q_sq
        };

        let dir_x: Vec<f64> = gfx.iter().zip(&qx).map(|(&f, &q)| -(f + lambda * q)).collect();
        let dir_y: Vec<f64> = gfy.iter().zip(&gy).map(|(&f, &q)| -(f + lambda * q)).collect();
        let delta_sq = vecops::norm_sq(&dir_x) + vecops::norm_sq(&dir_y);
        let h = vecops::norm_sq(&gy);

        sum_delta_sq += delta_sq;
        sum_grad_h_sq += q_sq;
        sum_h += h;

        if k % cfg.record_every == 0 || k == cfg.k_iters - 1 {
            let record = IterateRecord {
                k,
                f_val: o.f(&x, &y),
                h_val: h,
                grad_h_sq: q_sq,
                delta_sq,
                lambda,
                kkt_stationarity: delta_sq,
                wall_nanos: started.elapsed().as_nanos() as u64,
                oracle_calls: calls,
                rho: 0.0,
                feas_slack: 0.0,
            };
            on_record(k, &x, &y, &record);
            records.push(record);
        }

        vecops::axpy(&mut x, cfg.outer_step, &dir_x);
        vecops::axpy(&mut y, cfg.outer_step, &dir_y);
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
        schedule_name: "bome".into(),
        sum_delta_sq,
        sum_grad_h_sq,
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
    use crate::oracle::ProblemOracles;
    use crate::problems::ProblemMetadata;

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
                constants: None,
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
            ground_truth: None,
        }
    }

    #[test]
    fn zero_q_gradient_gives_pure_descent_step() {
        // Flat lower level: g ≡ 0, so ∇q = 0 and the update is -∇f.
        let mut p = toy_problem();
        p.oracles.grad_y_g = Box::new(|_, _| vec![0.0]);
        p.grad_x_g = Some(Box::new(|_, _| vec![0.0]));
        p.g_eval = Box::new(|_, _| 0.0);
        let mut cfg = BaselineConfig::bome(&p, 1);
        cfg.inner_step = 0.1;
        cfg.outer_step = 0.5;
        let trace = bome_run(&p, &[2.0], &[1.0], &cfg).unwrap();
        assert_eq!(trace.records[0].lambda, 0.0);
        assert!((trace.final_x[0] - 1.0).abs() < 1e-15); // 2 - 0.5·2
        assert!((trace.final_y[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn infeasibility_decreases_on_quadratic_toy() {
        let p = toy_problem();
        let mut cfg = BaselineConfig::bome(&p, 2000);
        cfg.inner_iters = 5;
        cfg.inner_step = 0.1;
        cfg.outer_step = 0.1;
        let trace = bome_run(&p, &[1.0], &[-1.0], &cfg).unwrap();
        let last = trace.records.last().unwrap();
        assert!(last.h_val <= 1e-6, "final h = {:.3e}", last.h_val);
    }

    #[test]
    fn requires_grad_x_g() {
        let mut p = toy_problem();
        p.grad_x_g = None;
        let cfg = BaselineConfig::bome(&p, 10);
        assert!(bome_run(&p, &[1.0], &[0.0], &cfg).is_err());
    }

    #[test]
    fn rejects_zero_inner_iters() {
        let p = toy_problem();
        let mut cfg = BaselineConfig::bome(&p, 10);
        cfg.inner_iters = 0;
        assert!(bome_run(&p, &[1.0], &[0.0], &cfg).is_err());
    }
}
