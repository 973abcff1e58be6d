//! Main iteration loop: QP-safeguarded gradient descent with warm start,
//! the two step-size/penalty schedules, and trace recording.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{OracleCalls, ProblemOracles, SmoothnessConstants};
use crate::{qp, vecops};

/// Iterates are declared divergent when any coordinate exceeds this magnitude.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Infeasibility-forcing choice for the per-iterate QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RhoVariant {
    /// `ρ = ‖∇h‖²`; faster rate, needs a regularity condition to convert
    /// `∇h`-stationarity into feasibility.
    Regular,
    /// `ρ = ‖∇h‖ √h₀`; no regularity needed, slower rate.
    General,
}

/// Which schedule produced a configuration (informational).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Cor1,
    Cor3,
    Custom,
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::Cor1 => "cor1",
            ScheduleKind::Cor3 => "cor3",
            ScheduleKind::Custom => "custom",
        }
    }
}

/// Run parameters. Schedule constructors guarantee the step-size bounds the
/// convergence analysis requires; hand-built configs are only sanity-checked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Iteration budget `K ≥ 1`.
    pub k_iters: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Initialization level: the run requires `h(x₀,y₀) ≤ α² C₀`.
    pub c0: f64,
    pub rho_variant: RhoVariant,
    /// Cached `h` at the post-warm-start initial point (General variant).
    /// Resolved from the start point when absent.
    pub h0: Option<f64>,
    pub denom_tol: f64,
    pub warm_start_budget: usize,
    pub warm_start_step: f64,
    pub seed: u64,
    /// Record an iterate every this many steps; `k = 0` and `k = K-1` are
    /// always recorded.
    pub record_every: usize,
    pub schedule: ScheduleKind,
}

impl SolverConfig {
    /// `α = K^{-1/3}`, `γ = min{α, 1/(L_f + α L_h)}`, forcing `ρ = ‖∇h‖²`.
    pub fn cor1(k_iters: usize, constants: &SmoothnessConstants) -> Self {
        let (alpha, gamma) = schedule_cor1(k_iters, constants.l_f, constants.l_h);
        Self::with_schedule(k_iters, alpha, gamma, RhoVariant::Regular, ScheduleKind::Cor1)
    }

    /// `α = K^{-1/6}`, `γ = min{K^{-2/3}, 1/L_f}`, forcing `ρ = ‖∇h‖ √h₀`.
    pub fn cor3(k_iters: usize, constants: &SmoothnessConstants) -> Self {
        let (alpha, gamma) = schedule_cor3(k_iters, constants.l_f);
        Self::with_schedule(k_iters, alpha, gamma, RhoVariant::General, ScheduleKind::Cor3)
    }

    pub fn custom(k_iters: usize, alpha: f64, gamma: f64, rho_variant: RhoVariant) -> Self {
        Self::with_schedule(k_iters, alpha, gamma, rho_variant, ScheduleKind::Custom)
    }

    fn with_schedule(
        k_iters: usize,
        alpha: f64,
        gamma: f64,
        rho_variant: RhoVariant,
        schedule: ScheduleKind,
    ) -> Self {
        SolverConfig {
            k_iters,
            alpha,
            gamma,
            c0: 1.0,
            rho_variant,
            h0: None,
            denom_tol: qp::DEFAULT_DENOM_TOL,
            warm_start_budget: 10_000,
            warm_start_step: 1e-2,
            seed: 0,
            record_every: (k_iters / 10_000).max(1),
            schedule,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_iters == 0 {
            return Err(Error::InvalidConfig("K must be >= 1".into()));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("C0", self.c0),
            ("denom_tol", self.denom_tol),
            ("warm_start_step", self.warm_start_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(h0) = self.h0 {
            if !(h0 >= 0.0 && h0.is_finite()) {
                return Err(Error::InvalidConfig(format!("h0 must be nonnegative, got {h0}")));
            }
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        if self.warm_start_budget == 0 {
            return Err(Error::InvalidConfig("warm_start_budget must be >= 1".into()));
        }
        Ok(())
    }
}

/// Schedule of the `ρ = ‖∇h‖²` analysis: `α = K^{-1/3}`,
/// `γ = min{α, 1/(L_f + α L_h)}`.
pub fn schedule_cor1(k_iters: usize, l_f: f64, l_h: f64) -> (f64, f64) {
    debug_assert!(k_iters >= 1 && l_f > 0.0 && l_h > 0.0);
    let alpha = (k_iters as f64).powf(-1.0 / 3.0);
    let gamma = alpha.min(1.0 / (l_f + alpha * l_h));
    (alpha, gamma)
}

/// Schedule of the `ρ = ‖∇h‖ √h₀` analysis: `α = K^{-1/6}`,
/// `γ = min{K^{-2/3}, 1/L_f}`.
pub fn schedule_cor3(k_iters: usize, l_f: f64) -> (f64, f64) {
    debug_assert!(k_iters >= 1 && l_f > 0.0);
    let alpha = (k_iters as f64).powf(-1.0 / 6.0);
    let gamma = (k_iters as f64).powf(-2.0 / 3.0).min(1.0 / l_f);
    (alpha, gamma)
}

/// Result of the warm-start preprocessing.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub y: Vec<f64>,
    /// Gradient steps actually taken.
    pub iterations: usize,
    /// Final constraint value `h(x₀, y)`.
    pub h: f64,
    /// `∇_y g` evaluations consumed.
    pub grad_g_calls: u64,
}

/// Gradient descent on `g(x₀, ·)` with a fixed step until
/// `‖∇_y g(x₀,y)‖² ≤ α² C₀`; returns the first iterate satisfying it.
pub fn warm_start(
    oracle: &ProblemOracles,
    x0: &[f64],
    y0: &[f64],
    alpha: f64,
    c0: f64,
    budget: usize,
    step: f64,
) -> Result<WarmStart> {
    if budget == 0 {
        return Err(Error::InvalidConfig("warm-start budget must be >= 1".into()));
    }
    let target = alpha * alpha * c0;
    let mut y = y0.to_vec();
    let mut calls = 0u64;
    let mut h = f64::INFINITY;
    for it in 0..=budget {
        let gy = oracle.grad_y_g(x0, &y);
        calls += 1;
        if !vecops::all_finite(&gy) {
            return Err(Error::NonFiniteEval {
                what: "grad_y_g",
                coords: vecops::non_finite_coords(&gy),
            });
        }
        h = vecops::norm_sq(&gy);
        if h <= target {
            return Ok(WarmStart { y, iterations: it, h, grad_g_calls: calls });
        }
        if it == budget {
            break;
        }
        vecops::axpy(&mut y, -step, &gy);
    }
    Err(Error::WarmStartBudget { budget, h_final: h, target })
}

/// Warm start with the default step policy: `1/L_yy` when the constant is
/// known, otherwise `1e-2` with halving whenever a step increases `g(x₀,·)`.
pub fn warm_start_auto(
    oracle: &ProblemOracles,
    g_eval: &(dyn Fn(&[f64], &[f64]) -> f64 + Sync),
    x0: &[f64],
    y0: &[f64],
    alpha: f64,
    c0: f64,
    budget: usize,
) -> Result<WarmStart> {
    if let Some(c) = &oracle.constants {
        if c.l_yy_g > 0.0 {
            return warm_start(oracle, x0, y0, alpha, c0, budget, 1.0 / c.l_yy_g);
        }
    }
    let target = alpha * alpha * c0;
    let mut step = 1e-2;
    let mut y = y0.to_vec();
    let mut calls = 0u64;
    let mut g_cur = g_eval(x0, &y);
    let mut h = f64::INFINITY;
    for it in 0..=budget {
        let gy = oracle.grad_y_g(x0, &y);
        calls += 1;
        if !vecops::all_finite(&gy) {
            return Err(Error::NonFiniteEval {
                what: "grad_y_g",
                coords: vecops::non_finite_coords(&gy),
            });
        }
        h = vecops::norm_sq(&gy);
        if h <= target {
            return Ok(WarmStart { y, iterations: it, h, grad_g_calls: calls });
        }
        if it == budget {
            break;
        }
        let trial = vecops::add_scaled(&y, -step, &gy);
        let g_trial = g_eval(x0, &trial);
        if g_trial > g_cur {
            step *= 0.5;
        } else {
            y = trial;
            g_cur = g_trial;
        }
    }
    Err(Error::WarmStartBudget { budget, h_final: h, target })
}

/// Configuration attached to a trace: either the main solver's or a
/// baseline method's.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunConfig {
    Solver(SolverConfig),
    Baseline(crate::baselines::BaselineConfig),
}

impl RunConfig {
    pub fn as_solver(&self) -> Option<&SolverConfig> {
        match self {
            RunConfig::Solver(c) => Some(c),
            RunConfig::Baseline(_) => None,
        }
    }

    pub fn method_name(&self) -> String {
        match self {
            RunConfig::Solver(c) => format!("ours_{}", c.schedule.name()),
            RunConfig::Baseline(b) => b.method.name().to_string(),
        }
    }
}

/// Metrics snapshot at one recorded iterate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    pub f_val: f64,
    pub h_val: f64,
    pub grad_h_sq: f64,
    pub delta_sq: f64,
    pub lambda: f64,
    /// `‖∇f + λ∇h‖²`; equals `delta_sq` by construction.
    pub kkt_stationarity: f64,
    pub wall_nanos: u64,
    pub oracle_calls: OracleCalls,
    pub rho: f64,
    /// QP constraint slack `∇h'Δ + αρ` at this iterate.
    pub feas_slack: f64,
}

/// Completed run: configuration, recorded iterates, final point, and
/// whole-run accumulators for the averaged rate metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub config: RunConfig,
    pub records: Vec<IterateRecord>,
    pub final_x: Vec<f64>,
    pub final_y: Vec<f64>,
    pub problem_name: String,
    pub schedule_name: String,
    /// Σ ‖Δ_k‖² over every iteration (not just recorded ones).
    pub sum_delta_sq: f64,
    /// Σ ‖∇h_k‖² over every iteration.
    pub sum_grad_h_sq: f64,
    /// Σ h_k over every iteration.
    pub sum_h: f64,
    pub iters_run: usize,
    pub max_x_norm: f64,
    pub max_y_norm: f64,
    /// Oracle calls consumed before the loop (warm start).
    pub start_calls: OracleCalls,
    pub total_calls: OracleCalls,
}

impl Trace {
    pub fn mean_delta_sq(&self) -> f64 {
        self.sum_delta_sq / self.iters_run as f64
    }

    pub fn mean_grad_h_sq(&self) -> f64 {
        self.sum_grad_h_sq / self.iters_run as f64
    }

    pub fn mean_h(&self) -> f64 {
        self.sum_h / self.iters_run as f64
    }
}

/// Everything an inspector sees at a recorded iterate.
pub struct RecordContext<'a> {
    pub k: usize,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub step: &'a qp::StepResult,
    pub record: &'a IterateRecord,
}

/// Runs `K` iterations from `(x0, y0)`; the start point must already satisfy
/// `h(x₀,y₀) ≤ α² C₀` (use [`warm_start`] first).
pub fn run(oracle: &ProblemOracles, config: &SolverConfig, x0: &[f64], y0: &[f64]) -> Result<Trace> {
    run_with_inspector(oracle, config, x0, y0, OracleCalls::default(), |_| {})
}

/// [`run`] with a per-record inspector and an oracle-call offset (so traces
/// can account for warm-start work). The inspector is invoked at every
/// recorded iterate, before the update is applied.
pub fn run_with_inspector<F>(
    oracle: &ProblemOracles,
    config: &SolverConfig,
    x0: &[f64],
    y0: &[f64],
    start_calls: OracleCalls,
    mut on_record: F,
) -> Result<Trace>
where
    F: FnMut(&RecordContext<'_>),
{
    config.validate()?;
    let k_total = config.k_iters;
    let started = Instant::now();

    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut calls = start_calls;
    let mut records = Vec::new();
    let mut resolved = config.clone();

    let mut sum_delta_sq = 0.0;
    let mut sum_grad_h_sq = 0.0;
    let mut sum_h = 0.0;
    let mut max_x_norm: f64 = vecops::norm(&x);
    let mut max_y_norm: f64 = vecops::norm(&y);
    let mut h0 = config.h0;

    for k in 0..k_total {
        let (gfx, gfy) = oracle.grad_f(&x, &y);
        calls.grad_f += 1;
        let gy = oracle.grad_y_g(&x, &y);
        calls.grad_g += 1;
        if !vecops::all_finite(&gfx) || !vecops::all_finite(&gfy) || !vecops::all_finite(&gy) {
            return Err(Error::Diverged {
                k,
                magnitude: f64::NAN,
                last_record: records.last().cloned().map(Box::new),
            });
        }
        let h = vecops::norm_sq(&gy);

        if k == 0 {
            let cap = config.alpha * config.alpha * config.c0;
            if h > cap {
                return Err(Error::InvalidConfig(format!(
                    "warm-start condition violated: h(x0,y0) = {h:.6e} > alpha^2*C0 = {cap:.6e}"
                )));
            }
            if h0.is_none() {
                h0 = Some(h);
                resolved.h0 = Some(h);
            }
        }

        let (hx, hy) = qp::grad_h_from(oracle, &x, &y, &gy)?;
        calls.hvp += 2;
        let grad_h_sq = vecops::norm_sq(&hx) + vecops::norm_sq(&hy);
        let rho = match config.rho_variant {
            RhoVariant::Regular => grad_h_sq,
            RhoVariant::General => grad_h_sq.sqrt() * h0.unwrap_or(0.0).sqrt(),
        };
        let step = qp::solve_step(&gfx, &gfy, &hx, &hy, rho, config.alpha, config.denom_tol);

        sum_delta_sq += step.delta_sq;
        sum_grad_h_sq += grad_h_sq;
        sum_h += h;

        if k % config.record_every == 0 || k == k_total - 1 {
            let record = IterateRecord {
                k,
                f_val: oracle.f(&x, &y),
                h_val: h,
                grad_h_sq,
                delta_sq: step.delta_sq,
                lambda: step.lambda,
                kkt_stationarity: step.delta_sq,
                wall_nanos: started.elapsed().as_nanos() as u64,
                oracle_calls: calls,
                rho,
                feas_slack: step.constraint_slack,
            };
            on_record(&RecordContext { k, x: &x, y: &y, step: &step, record: &record });
            records.push(record);
        }

        vecops::axpy(&mut x, config.gamma, &step.delta_x);
        vecops::axpy(&mut y, config.gamma, &step.delta_y);

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
        config: RunConfig::Solver(resolved),
        records,
        final_x: x,
        final_y: y,
        problem_name: String::new(),
        schedule_name: config.schedule.name().to_string(),
        sum_delta_sq,
        sum_grad_h_sq,
        sum_h,
        iters_run: k_total,
        max_x_norm,
        max_y_norm,
        start_calls,
        total_calls: calls,
    })
}

/// Selection rule for the reported iterate of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BestIterateCriterion {
    /// `max{‖∇h_k‖², ‖Δ_k‖²}` — pairs with the `ρ = ‖∇h‖²` analysis.
    MaxOfGradHAndStationarity,
    /// `max{h_k, ‖Δ_k‖²}` — pairs with the `ρ = ‖∇h‖ √h₀` analysis.
    MaxOfHAndStationarity,
}

/// Iteration index of the first recorded iterate minimizing the criterion.
pub fn best_iterate(trace: &Trace, criterion: BestIterateCriterion) -> Result<usize> {
    best_record(trace, criterion).map(|r| r.k)
}

/// The record selected by [`best_iterate`].
pub fn best_record(
    trace: &Trace,
    criterion: BestIterateCriterion,
) -> Result<&IterateRecord> {
    if trace.records.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let score = |r: &IterateRecord| match criterion {
        BestIterateCriterion::MaxOfGradHAndStationarity => r.grad_h_sq.max(r.kkt_stationarity),
        BestIterateCriterion::MaxOfHAndStationarity => r.h_val.max(r.kkt_stationarity),
    };
    let mut best = &trace.records[0];
    let mut best_score = score(best);
    for r in &trace.records[1..] {
        let s = score(r);
        if s < best_score {
            best = r;
            best_score = s;
        }
    }
    Ok(best)
}

/// Sampled fallback estimates of the smoothness constants, for problems that
/// do not supply them analytically. `L_f` comes from the worst gradient-pair
/// ratio over a box around the start; `L_h` is assembled via the
/// `2 C_g (L_yy + L_yx)` bound from sampled quantities.
pub fn estimate_constants(
    oracle: &ProblemOracles,
    x0: &[f64],
    y0: &[f64],
    half_width: f64,
    samples: usize,
    seed: u64,
) -> SmoothnessConstants {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let draw_point = |rng: &mut rand_chacha::ChaCha8Rng| {
        let x: Vec<f64> = x0
            .iter()
            .map(|&v| v + rng.random_range(-half_width..half_width))
            .collect();
        let y: Vec<f64> = y0
            .iter()
            .map(|&v| v + rng.random_range(-half_width..half_width))
            .collect();
        (x, y)
    };
    let mut l_f: f64 = 0.0;
    let mut c_f: f64 = 0.0;
    let mut c_g: f64 = 0.0;
    let mut l_yy: f64 = 0.0;
    let mut l_yx: f64 = 0.0;
    for _ in 0..samples {
        let (xa, ya) = draw_point(&mut rng);
        let (xb, yb) = draw_point(&mut rng);
        let (fa_x, fa_y) = oracle.grad_f(&xa, &ya);
        let (fb_x, fb_y) = oracle.grad_f(&xb, &yb);
        let df = (vecops::norm_sq(&vecops::sub(&fa_x, &fb_x))
            + vecops::norm_sq(&vecops::sub(&fa_y, &fb_y)))
        .sqrt();
        let dz = (vecops::norm_sq(&vecops::sub(&xa, &xb)) + vecops::norm_sq(&vecops::sub(&ya, &yb)))
            .sqrt();
        if dz > 1e-12 {
            l_f = l_f.max(df / dz);
        }
        c_f = c_f.max((vecops::norm_sq(&fa_x) + vecops::norm_sq(&fa_y)).sqrt());
        let gy = oracle.grad_y_g(&xa, &ya);
        c_g = c_g.max(vecops::norm(&gy));
        // Operator-norm lower bounds from random unit probes.
        let v: Vec<f64> = (0..oracle.dim_y)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let vn = vecops::norm(&v);
        if vn > 0.0 {
            let v = vecops::scale(&v, 1.0 / vn);
            l_yy = l_yy.max(vecops::norm(&oracle.hvp_yy(&xa, &ya, &v)));
            l_yx = l_yx.max(vecops::norm(&oracle.hvp_yx(&xa, &ya, &v)));
        }
    }
    SmoothnessConstants {
        l_f,
        l_h: crate::metrics::lipschitz_h_bound(c_g, l_yy, l_yx),
        c_f,
        c_g,
        l_yy_g: l_yy,
        l_yx_g: l_yx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_oracle() -> ProblemOracles {
        ProblemOracles {
            dim_x: 1,
            dim_y: 1,
            f_eval: Box::new(|x, y| 0.5 * (x[0] * x[0] + y[0] * y[0])),
            grad_f: Box::new(|x, y| (vec![x[0]], vec![y[0]])),
            grad_y_g: Box::new(|x, y| vec![y[0] - x[0]]),
            hvp_yx: Box::new(|_, _, v| vec![-v[0]]),
            hvp_yy: Box::new(|_, _, v| vec![v[0]]),
            constants: None,
        }
    }

    #[test]
    fn warm_start_contracts_geometrically() {
        let o = toy_oracle();
        let ws = warm_start(&o, &[1.0], &[5.0], 1.0, 0.01, 100, 0.5).unwrap();
        assert!(ws.h <= 0.01, "h = {}", ws.h);
        assert!((ws.y[0] - 1.0).powi(2) <= 0.01);
        assert!(ws.iterations <= 9, "took {} iterations", ws.iterations);
    }

    #[test]
    fn warm_start_accepts_valid_start_unchanged() {
        let o = toy_oracle();
        let ws = warm_start(&o, &[1.0], &[1.0], 1.0, 0.01, 100, 0.5).unwrap();
        assert_eq!(ws.y, vec![1.0]);
        assert_eq!(ws.iterations, 0);
    }

    #[test]
    fn warm_start_reports_budget_exhaustion() {
        let o = toy_oracle();
        let err = warm_start(&o, &[1.0], &[100.0], 0.001, 0.01, 3, 0.01).unwrap_err();
        match err {
            Error::WarmStartBudget { budget, h_final, .. } => {
                assert_eq!(budget, 3);
                assert!(h_final > 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn schedule_cor1_values() {
        let (a, g) = schedule_cor1(1000, 1.0, 1.0);
        assert!((a - 0.1).abs() < 1e-12);
        assert!((g - 0.1).abs() < 1e-12);

        let (a, g) = schedule_cor1(1_000_000, 1.0, 1.0);
        assert!((a - 0.01).abs() < 1e-12);
        assert!((g - 0.01).abs() < 1e-12);

        let (a, g) = schedule_cor1(1, 3.0, 2.0);
        assert_eq!(a, 1.0);
        assert_eq!(g, 1.0 / 5.0);
    }

    #[test]
    fn schedule_cor3_values() {
        let (a, g) = schedule_cor3(1_000_000, 1.0);
        assert!((a - 0.1).abs() < 1e-12);
        assert!((g - 1e-4).abs() < 1e-16);

        let (a, g) = schedule_cor3(64, 2.0);
        assert!((a - 0.5).abs() < 1e-12);
        assert!((g - 0.0625).abs() < 1e-12);

        let (a, g) = schedule_cor3(1, 4.0);
        assert_eq!(a, 1.0);
        assert_eq!(g, 0.25);
    }

    #[test]
    fn single_step_matches_hand_calculation() {
        // One step from (1, 0) with α = 1, γ = 0.1 moves to (0.75, 0.15).
        let o = toy_oracle();
        let mut cfg = SolverConfig::custom(1, 1.0, 0.1, RhoVariant::Regular);
        cfg.c0 = 1.0;
        let trace = run(&o, &cfg, &[1.0], &[0.0]).unwrap();
        assert!((trace.final_x[0] - 0.75).abs() < 1e-15);
        assert!((trace.final_y[0] - 0.15).abs() < 1e-15);
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].lambda, 0.75);
        assert_eq!(trace.records[0].delta_sq, 8.5);
    }

    #[test]
    fn zero_iteration_budget_rejected() {
        let o = toy_oracle();
        let cfg = SolverConfig::custom(0, 1.0, 0.1, RhoVariant::Regular);
        assert!(matches!(run(&o, &cfg, &[1.0], &[0.0]), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn warm_start_precondition_enforced() {
        let o = toy_oracle();
        let mut cfg = SolverConfig::custom(10, 0.1, 0.1, RhoVariant::Regular);
        cfg.c0 = 1.0; // requires h <= 0.01, but h(1, 0) = 1
        assert!(matches!(run(&o, &cfg, &[1.0], &[0.0]), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let o = toy_oracle();
        let mut cfg = SolverConfig::custom(200, 0.5, 0.05, RhoVariant::Regular);
        cfg.c0 = 10.0;
        let a = run(&o, &cfg, &[1.0], &[0.0]).unwrap();
        let b = run(&o, &cfg, &[1.0], &[0.0]).unwrap();
        assert_eq!(a.final_x, b.final_x);
        assert_eq!(a.final_y, b.final_y);
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.delta_sq.to_bits(), rb.delta_sq.to_bits());
            assert_eq!(ra.lambda.to_bits(), rb.lambda.to_bits());
            assert_eq!(ra.h_val.to_bits(), rb.h_val.to_bits());
        }
    }

    #[test]
    fn divergence_guard_trips_on_unstable_step() {
        // γ = 3 > 2/L for f = ½(x² + y²): plain gradient steps diverge once
        // the QP multiplier is inactive.
        let o = toy_oracle();
        let mut cfg = SolverConfig::custom(200, 1e-6, 3.0, RhoVariant::Regular);
        cfg.c0 = 1e15;
        let err = run(&o, &cfg, &[1.0], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "got {err:?}");
    }

    #[test]
    fn general_variant_resolves_h0_from_start() {
        let o = toy_oracle();
        let mut cfg = SolverConfig::custom(5, 1.0, 0.1, RhoVariant::General);
        cfg.c0 = 1.0;
        let trace = run(&o, &cfg, &[1.0], &[0.0]).unwrap();
        assert_eq!(trace.config.as_solver().unwrap().h0, Some(1.0));
    }

    #[test]
    fn best_iterate_smallest_index_tie_break() {
        let o = toy_oracle();
        let mut cfg = SolverConfig::custom(4, 1.0, 0.1, RhoVariant::Regular);
        cfg.c0 = 2.0;
        let mut trace = run(&o, &cfg, &[1.0], &[0.0]).unwrap();
        // Overwrite the recorded criterion values with a known pattern.
        let pattern = [4.0, 1.0, 1.0, 3.0];
        assert_eq!(trace.records.len(), 4);
        for (r, &v) in trace.records.iter_mut().zip(&pattern) {
            r.grad_h_sq = v;
            r.kkt_stationarity = v;
            r.h_val = v;
        }
        let k = best_iterate(&trace, BestIterateCriterion::MaxOfGradHAndStationarity).unwrap();
        assert_eq!(k, 1);
        let k = best_iterate(&trace, BestIterateCriterion::MaxOfHAndStationarity).unwrap();
        assert_eq!(k, 1);
    }

    #[test]
    fn best_iterate_single_record() {
        let o = toy_oracle();
        let mut cfg = SolverConfig::custom(1, 1.0, 0.1, RhoVariant::Regular);
        cfg.c0 = 1.0;
        let trace = run(&o, &cfg, &[1.0], &[0.0]).unwrap();
        assert_eq!(
            best_iterate(&trace, BestIterateCriterion::MaxOfHAndStationarity).unwrap(),
            0
        );
    }

    #[test]
    fn best_iterate_empty_trace_errors() {
        let o = toy_oracle();
        let mut cfg = SolverConfig::custom(1, 1.0, 0.1, RhoVariant::Regular);
        cfg.c0 = 1.0;
        let mut trace = run(&o, &cfg, &[1.0], &[0.0]).unwrap();
        trace.records.clear();
        assert!(matches!(
            best_iterate(&trace, BestIterateCriterion::MaxOfHAndStationarity),
            Err(Error::EmptyTrace)
        ));
    }

    #[test]
    fn records_always_include_first_and_last() {
        let o = toy_oracle();
        let mut cfg = SolverConfig::custom(103, 0.5, 0.05, RhoVariant::Regular);
        cfg.c0 = 10.0;
        cfg.record_every = 25;
        let trace = run(&o, &cfg, &[1.0], &[0.0]).unwrap();
        let ks: Vec<usize> = trace.records.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![0, 25, 50, 75, 100, 102]);
    }

    #[test]
    fn estimated_constants_tight_for_quadratic() {
        // f = ½(x² + y²) has L_f = 1 and g = ½(y-x)² has L_yy = 1.
        let o = toy_oracle();
        let est = estimate_constants(&o, &[0.0], &[0.0], 1.0, 100, 11);
        assert!((est.l_f - 1.0).abs() < 1e-9, "L_f = {}", est.l_f);
        assert!((est.l_yy_g - 1.0).abs() < 1e-9);
        assert!((est.l_yx_g - 1.0).abs() < 1e-9);
        assert!(est.c_g > 0.0 && est.c_f > 0.0);
        assert!((est.l_h - 2.0 * est.c_g * (est.l_yy_g + est.l_yx_g)).abs() < 1e-12);
    }
}
