//! Standard run pipeline: warm start the lower level, resolve `h₀` for the
//! General forcing variant, then execute the main loop with warm-start work
//! charged to the trace's oracle counters.

use crate::error::Result;
use crate::oracle::OracleCalls;
use crate::problems::BenchmarkProblem;
use crate::solver::{self, RecordContext, SolverConfig, Trace, WarmStart};

pub struct PipelineRun {
    pub trace: Trace,
    pub warm: WarmStart,
}

pub fn run(
    problem: &BenchmarkProblem,
    config: &SolverConfig,
    x0: &[f64],
    y0: &[f64],
) -> Result<PipelineRun> {
    run_with_inspector(problem, config, x0, y0, |_| {})
}

pub fn run_with_inspector<F>(
    problem: &BenchmarkProblem,
    config: &SolverConfig,
    x0: &[f64],
    y0: &[f64],
    on_record: F,
) -> Result<PipelineRun>
where
    F: FnMut(&RecordContext<'_>),
{
    config.validate()?;
    let warm = solver::warm_start_auto(
        &problem.oracles,
        &*problem.g_eval,
        x0,
        y0,
        config.alpha,
        config.c0,
        config.warm_start_budget,
    )?;
    let mut resolved = config.clone();
    if resolved.h0.is_none() {
        resolved.h0 = Some(warm.h);
    }
    let start_calls = OracleCalls { grad_g: warm.grad_g_calls, ..OracleCalls::default() };
    let mut trace =
        solver::run_with_inspector(&problem.oracles, &resolved, x0, &warm.y, start_calls, on_record)?;
    trace.problem_name = problem.name.clone();
    Ok(PipelineRun { trace, warm })
}
