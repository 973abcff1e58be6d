//! Experiment execution: problem construction, per-job method dispatch, a
//! small worker pool, and the summary/rates documents.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use bilevel::baselines::{self, BaselineConfig};
use bilevel::metrics::rate_slope;
use bilevel::problems::{
    make_coreset, make_dhc, make_nc_synthetic, make_regularity_example, make_sc_synthetic,
    normal_vec, test_rng, BenchmarkProblem, DhcData,
};
use bilevel::solver::{estimate_constants, SolverConfig};
use bilevel::{pipeline, vecops, Error, IterateRecord, OracleCalls, RunConfig, Trace};

use crate::config::{ExperimentConfig, MethodSpec, ProblemSpec};
use crate::io;
use crate::plot;
use crate::BenchError;

/// A constructed problem plus the DHC payload when applicable.
pub struct BuiltProblem {
    pub problem: BenchmarkProblem,
    pub dhc: Option<std::sync::Arc<DhcData>>,
}

pub fn build_problem(spec: &ProblemSpec, default_seed: u64) -> Result<BuiltProblem, BenchError> {
    let seed_of = |s: &Option<u64>| s.unwrap_or(default_seed);
    Ok(match spec {
        ProblemSpec::ScSynthetic { n, seed } => BuiltProblem {
            problem: make_sc_synthetic(seed_of(seed), *n),
            dhc: None,
        },
        ProblemSpec::NcSynthetic { n, seed } => BuiltProblem {
            problem: make_nc_synthetic(seed_of(seed), *n),
            dhc: None,
        },
        ProblemSpec::Coreset { seed } => BuiltProblem {
            problem: make_coreset(seed_of(seed)),
            dhc: None,
        },
        ProblemSpec::Dhc { n_features, n_train, n_val, corruption, seed } => {
            let built = make_dhc(seed_of(seed), *n_features, *n_train, *n_val, *corruption)?;
            BuiltProblem { problem: built.problem, dhc: Some(built.data) }
        }
        ProblemSpec::Regularity { p, m, n, seed } => BuiltProblem {
            problem: make_regularity_example(seed_of(seed), *p, *m, *n),
            dhc: None,
        },
    })
}

/// Deterministic start point. `x₀ = 0` for the sample-weight problems
/// (uniform weights); elsewhere a seeded draw at modest scale. The DHC
/// classifier starts at a random `y₀` so the warm start actually descends to
/// the uniform-weight fit instead of exiting at the near-flat origin.
pub fn start_point(problem: &BenchmarkProblem, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = problem.dims();
    let x0 = match problem.name.as_str() {
        "dhc" | "coreset" => vec![0.0; n],
        _ => vecops::scale(&normal_vec(&mut test_rng(seed ^ 0x5742), n), 0.5),
    };
    let y0 = match problem.name.as_str() {
        "dhc" => vecops::scale(&normal_vec(&mut test_rng(seed ^ 0x1d5), m), 0.3),
        _ => vec![0.0; m],
    };
    (x0, y0)
}

/// Smoothness constants: analytic when the problem supplies them, otherwise
/// the sampled fallback estimate.
pub fn constants_for(problem: &BenchmarkProblem, x0: &[f64], y0: &[f64], seed: u64) -> bilevel::SmoothnessConstants {
    match problem.oracles.constants {
        Some(c) => c,
        None => estimate_constants(&problem.oracles, x0, y0, 1.0, 100, seed),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HyperPoint {
    pub k: usize,
    pub calls: u64,
    pub hyper_norm: f64,
}

pub struct JobOutput {
    pub method: String,
    pub k: usize,
    pub trace: Trace,
    /// Hypergradient-norm series at recorded iterates (strongly convex
    /// problems only; diagnostic, not charged to the counters).
    pub hyper_series: Option<Vec<HyperPoint>>,
    pub wall_ms: u128,
}

/// Runs one (method, K) job from the experiment's deterministic start point.
pub fn run_job(
    problem: &BenchmarkProblem,
    spec: &MethodSpec,
    k: usize,
    exp: &ExperimentConfig,
    want_hyper: bool,
) -> Result<JobOutput, BenchError> {
    let (x0, y0) = start_point(problem, exp.seed);
    let started = Instant::now();
    let want_hyper = want_hyper && problem.metadata.strongly_convex;
    let probe_cfg = BaselineConfig::aid(problem, 1);
    let mut hyper: Vec<HyperPoint> = Vec::new();

    let record_every = |method_override: &Option<usize>| {
        method_override.or(exp.record_every).unwrap_or_else(|| (k / 10_000).max(1))
    };

    let trace = match spec {
        MethodSpec::OursCor1 { record_every: re } | MethodSpec::OursCor3 { record_every: re } => {
            let consts = constants_for(problem, &x0, &y0, exp.seed);
            let mut cfg = if matches!(spec, MethodSpec::OursCor1 { .. }) {
                SolverConfig::cor1(k, &consts)
            } else {
                SolverConfig::cor3(k, &consts)
            };
            cfg.c0 = exp.c0;
            cfg.seed = exp.seed;
            cfg.record_every = record_every(re);
            let out = pipeline::run_with_inspector(problem, &cfg, &x0, &y0, |ctx| {
                if want_hyper {
                    if let Ok(norm) =
                        baselines::hypergradient_norm(problem, ctx.x, ctx.y, &probe_cfg)
                    {
                        hyper.push(HyperPoint {
                            k: ctx.k,
                            calls: ctx.record.oracle_calls.total(),
                            hyper_norm: norm,
                        });
                    }
                }
            })?;
            out.trace
        }
        MethodSpec::Aid { outer_step, inner_iters, inner_step, cg_tol, record_every: re } => {
            let mut cfg = BaselineConfig::aid(problem, k);
            if let Some(v) = outer_step {
                cfg.outer_step = *v;
            }
            if let Some(v) = inner_iters {
                cfg.inner_iters = *v;
            }
            if let Some(v) = inner_step {
                cfg.inner_step = *v;
            }
            if let Some(v) = cg_tol {
                cfg.cg_tol = *v;
            }
            cfg.record_every = record_every(re);
            baselines::aid_run_with_inspector(problem, &x0, &y0, &cfg, |k, _, _, r| {
                if want_hyper {
                    hyper.push(HyperPoint {
                        k,
                        calls: r.oracle_calls.total(),
                        hyper_norm: r.kkt_stationarity.sqrt(),
                    });
                }
            })?
        }
        MethodSpec::Bome { outer_step, inner_iters, inner_step, eta, record_every: re } => {
            let mut cfg = BaselineConfig::bome(problem, k);
            if let Some(v) = outer_step {
                cfg.outer_step = *v;
            }
            if let Some(v) = inner_iters {
                cfg.inner_iters = *v;
            }
            if let Some(v) = inner_step {
                cfg.inner_step = *v;
            }
            if let Some(v) = eta {
                cfg.bome_eta = *v;
            }
            cfg.record_every = record_every(re);
            baselines::bome_run_with_inspector(problem, &x0, &y0, &cfg, |k, x, y, r| {
                if want_hyper {
                    if let Ok(norm) = baselines::hypergradient_norm(problem, x, y, &probe_cfg) {
                        hyper.push(HyperPoint {
                            k,
                            calls: r.oracle_calls.total(),
                            hyper_norm: norm,
                        });
                    }
                }
            })?
        }
    };

    Ok(JobOutput {
        method: spec.name().to_string(),
        k,
        trace,
        hyper_series: if want_hyper { Some(hyper) } else { None },
        wall_ms: started.elapsed().as_millis(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BestSummary {
    pub k: usize,
    pub kkt_stationarity: f64,
    pub h: f64,
    pub grad_h_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub method: String,
    pub k: usize,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_config: Option<RunConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_record: Option<IterateRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best: Option<BestSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_delta_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_grad_h_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_calls: Option<OracleCalls>,
    pub wall_ms: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_csv: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    /// Fully resolved configuration (defaults materialized), replayable.
    pub config: ExperimentConfig,
    pub problem: String,
    pub problem_metadata: bilevel::problems::ProblemMetadata,
    pub runs: Vec<RunSummary>,
}

fn summarize(job: &JobOutput, csv_name: &str) -> RunSummary {
    use bilevel::solver::{best_record, BestIterateCriterion};
    let trace = &job.trace;
    let criterion = match &trace.config {
        RunConfig::Solver(c) if matches!(c.rho_variant, bilevel::RhoVariant::General) => {
            BestIterateCriterion::MaxOfHAndStationarity
        }
        _ => BestIterateCriterion::MaxOfGradHAndStationarity,
    };
    let best = best_record(trace, criterion).ok().map(|r| BestSummary {
        k: r.k,
        kkt_stationarity: r.kkt_stationarity,
        h: r.h_val,
        grad_h_sq: r.grad_h_sq,
    });
    RunSummary {
        method: job.method.clone(),
        k: job.k,
        status: "ok".into(),
        error: None,
        run_config: Some(trace.config.clone()),
        final_record: trace.records.last().cloned(),
        best,
        mean_delta_sq: Some(trace.mean_delta_sq()),
        mean_grad_h_sq: Some(trace.mean_grad_h_sq()),
        mean_h: Some(trace.mean_h()),
        total_calls: Some(trace.total_calls),
        wall_ms: job.wall_ms,
        trace_csv: Some(csv_name.to_string()),
    }
}

/// Executes every (method, K) combination, writes one trace CSV per run and
/// one summary JSON per experiment. Returns the summary and whether any run
/// diverged.
pub fn run_experiment(exp: &ExperimentConfig, out_dir: &Path) -> Result<(Summary, bool), BenchError> {
    exp.validate()?;
    let built = build_problem(&exp.problem, exp.seed)?;
    let problem = &built.problem;

    let jobs: Vec<(usize, MethodSpec, usize)> = exp
        .methods
        .iter()
        .flat_map(|m| exp.k_list.iter().map(move |&k| (m.clone(), k)))
        .enumerate()
        .map(|(i, (m, k))| (i, m, k))
        .collect();

    let results: Mutex<Vec<Option<Result<JobOutput, BenchError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = exp.jobs.min(jobs.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let (_, method, k) = &jobs[i];
                let out = run_job(problem, method, *k, exp, exp.emit_plot_data);
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });

    let mut runs = Vec::with_capacity(jobs.len());
    let mut any_diverged = false;
    let mut hyper_csvs: Vec<(String, Vec<HyperPoint>)> = Vec::new();
    for (i, (_, method, k)) in jobs.iter().enumerate() {
        let out = results.lock().unwrap()[i].take().expect("job ran");
        match out {
            Ok(job) => {
                let csv_name = format!("{}_{}_K{}.csv", problem.name, job.method, k);
                io::write_trace_csv(&out_dir.join(&csv_name), &job.trace)?;
                if let Some(series) = &job.hyper_series {
                    hyper_csvs.push((format!("{}_{}_K{}", problem.name, job.method, k), series.clone()));
                }
                runs.push(summarize(&job, &csv_name));
            }
            Err(BenchError::Run(Error::Diverged { k: at, magnitude, .. })) => {
                any_diverged = true;
                runs.push(RunSummary {
                    method: method.name().to_string(),
                    k: *k,
                    status: "diverged".into(),
                    error: Some(format!("diverged at iteration {at} (|coord| = {magnitude:.3e})")),
                    run_config: None,
                    final_record: None,
                    best: None,
                    mean_delta_sq: None,
                    mean_grad_h_sq: None,
                    mean_h: None,
                    total_calls: None,
                    wall_ms: 0,
                    trace_csv: None,
                });
            }
            Err(e) => return Err(e),
        }
    }

    if exp.emit_plot_data {
        emit_plots(problem, &runs, &hyper_csvs, out_dir)?;
    }

    let summary = Summary {
        config: exp.clone(),
        problem: problem.name.clone(),
        problem_metadata: problem.metadata.clone(),
        runs,
    };
    io::write_json(&out_dir.join("summary.json"), &summary)?;
    Ok((summary, any_diverged))
}

fn emit_plots(
    problem: &BenchmarkProblem,
    runs: &[RunSummary],
    hyper_series: &[(String, Vec<HyperPoint>)],
    out_dir: &Path,
) -> Result<(), BenchError> {
    // Plot-ready CSVs for the hypergradient curves.
    for (name, series) in hyper_series {
        let mut text = String::from("k,calls,hyper_norm\n");
        for p in series {
            text.push_str(&format!("{},{},{}\n", p.k, p.calls, io::fmt_float(p.hyper_norm)));
        }
        io::write_atomic(&out_dir.join(format!("{name}_hypergrad.csv")), text.as_bytes())?;
    }
    if !hyper_series.is_empty() {
        let series: Vec<(String, Vec<(f64, f64)>)> = hyper_series
            .iter()
            .map(|(name, pts)| {
                (
                    name.clone(),
                    pts.iter().map(|p| (p.calls as f64, p.hyper_norm)).collect(),
                )
            })
            .collect();
        plot::write_line_chart(
            &out_dir.join(format!("{}_hypergrad.svg", problem.name)),
            &format!("{}: hypergradient norm vs oracle calls", problem.name),
            "oracle calls",
            "‖F‖",
            &series,
            true,
        )?;
    }
    // Mean residual summary curve per method across K.
    let mut by_method: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for r in runs {
        if let (true, Some(m)) = (r.status == "ok", r.mean_delta_sq) {
            by_method.entry(r.method.clone()).or_default().push((r.k as f64, m));
        }
    }
    if by_method.values().any(|v| v.len() >= 2) {
        let series: Vec<(String, Vec<(f64, f64)>)> = by_method.into_iter().collect();
        plot::write_line_chart(
            &out_dir.join(format!("{}_mean_delta_sq.svg", problem.name)),
            &format!("{}: mean ‖Δ‖² vs K", problem.name),
            "K",
            "mean ‖Δ‖²",
            &series,
            true,
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RatePoint {
    pub k: usize,
    pub mean_delta_sq: f64,
    pub mean_grad_h_sq: f64,
    pub mean_h: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatesDoc {
    pub problem: String,
    pub schedule: String,
    pub points: Vec<RatePoint>,
    /// Metric name → fitted log-log slope.
    pub slopes: std::collections::BTreeMap<String, f64>,
    /// Metric name → pass threshold (slope must be ≤ threshold).
    pub thresholds: std::collections::BTreeMap<String, f64>,
    pub pass: bool,
}

/// Runs the schedule across `k_list` and fits the decay slopes of the
/// averaged metrics. Cor 1 is judged on mean ‖Δ‖² and mean ‖∇h‖² (≤ -0.4),
/// Cor 3 on mean ‖Δ‖² and mean h (≤ -0.2).
pub fn run_rate_sweep(exp: &ExperimentConfig, out_dir: &Path) -> Result<RatesDoc, BenchError> {
    exp.validate_for_rate_sweep()?;
    let built = build_problem(&exp.problem, exp.seed)?;
    let problem = &built.problem;
    let method = &exp.methods[0];

    let mut points = Vec::new();
    for &k in &exp.k_list {
        let job = run_job(problem, method, k, exp, false)?;
        let csv_name = format!("{}_{}_K{}.csv", problem.name, job.method, k);
        io::write_trace_csv(&out_dir.join(&csv_name), &job.trace)?;
        points.push(RatePoint {
            k,
            mean_delta_sq: job.trace.mean_delta_sq(),
            mean_grad_h_sq: job.trace.mean_grad_h_sq(),
            mean_h: job.trace.mean_h(),
        });
    }

    let fit = |metric: &dyn Fn(&RatePoint) -> f64| -> Result<f64, BenchError> {
        let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.k as f64, metric(p))).collect();
        Ok(rate_slope(&pts)?)
    };

    let cor1 = matches!(method, MethodSpec::OursCor1 { .. });
    let mut slopes = std::collections::BTreeMap::new();
    let mut thresholds = std::collections::BTreeMap::new();
    slopes.insert("mean_delta_sq".to_string(), fit(&|p: &RatePoint| p.mean_delta_sq)?);
    if cor1 {
        slopes.insert("mean_grad_h_sq".to_string(), fit(&|p: &RatePoint| p.mean_grad_h_sq)?);
        thresholds.insert("mean_delta_sq".to_string(), -0.4);
        thresholds.insert("mean_grad_h_sq".to_string(), -0.4);
    } else {
        slopes.insert("mean_h".to_string(), fit(&|p: &RatePoint| p.mean_h)?);
        thresholds.insert("mean_delta_sq".to_string(), -0.2);
        thresholds.insert("mean_h".to_string(), -0.2);
    }
    let pass = thresholds.iter().all(|(name, &thr)| slopes[name] <= thr);

    let doc = RatesDoc {
        problem: problem.name.clone(),
        schedule: method.name().to_string(),
        points,
        slopes,
        thresholds,
        pass,
    };
    io::write_json(&out_dir.join("rates.json"), &doc)?;
    Ok(doc)
}
