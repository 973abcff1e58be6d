use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bilevel_bench::config::ExperimentConfig;
use bilevel_bench::{experiment, BenchError};

/// Benchmark harness for the bilevel QP-safeguarded gradient descent solver.
#[derive(Parser)]
#[command(name = "bilevel-bench", version, about)]
struct Cli {
    /// Directory for trace CSVs, summary/rates JSON and plots
    /// (overrides the config file).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads for independent (method, K) jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Record an iterate every N steps (overrides the config file).
    #[arg(long, global = true)]
    record_every: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, K) combination of an experiment config.
    Run { config: PathBuf },
    /// Run one schedule across a K grid and verify the decay-rate slopes.
    RateSweep { config: PathBuf },
    /// Validate the analytic oracles of a named benchmark problem.
    Validate {
        /// One of: sc_synthetic, nc_synthetic, coreset, dhc, regularity.
        problem: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(cli: &Cli, path: &PathBuf) -> Result<ExperimentConfig, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    if cli.record_every.is_some() {
        cfg.record_every = cli.record_every;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode, BenchError> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load_config(cli, config)?;
            let out_dir = cfg.output_dir.clone();
            let (summary, diverged) = experiment::run_experiment(&cfg, &out_dir)?;
            for r in &summary.runs {
                println!(
                    "{} K={}: {}{}",
                    r.method,
                    r.k,
                    r.status,
                    r.best
                        .as_ref()
                        .map(|b| format!(
                            " (best k={} stationarity={:.3e} h={:.3e})",
                            b.k, b.kkt_stationarity, b.h
                        ))
                        .unwrap_or_default()
                );
            }
            println!("summary: {}", out_dir.join("summary.json").display());
            Ok(if diverged { ExitCode::from(3) } else { ExitCode::SUCCESS })
        }
        Command::RateSweep { config } => {
            let cfg = load_config(cli, config)?;
            cfg.validate_for_rate_sweep()?;
            let out_dir = cfg.output_dir.clone();
            let doc = experiment::run_rate_sweep(&cfg, &out_dir)?;
            for (metric, slope) in &doc.slopes {
                let thr = doc.thresholds.get(metric);
                println!(
                    "{} slope({metric}) = {slope:.4}{}",
                    doc.schedule,
                    thr.map(|t| format!(" (threshold {t})")).unwrap_or_default()
                );
            }
            println!("rates: {} (pass = {})", out_dir.join("rates.json").display(), doc.pass);
            Ok(if doc.pass { ExitCode::SUCCESS } else { ExitCode::from(4) })
        }
        Command::Validate { problem, seed } => {
            let p = bilevel::problems::from_name(problem, *seed)
                .map_err(|e| BenchError::Config(e.to_string()))?;
            let report = bilevel::validate::run_checks(&p, *seed)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report)
                    .map_err(|e| BenchError::Config(e.to_string()))?
            );
            if report.passed {
                Ok(ExitCode::SUCCESS)
            } else {
                let failed = report.first_failure().expect("failure present");
                eprintln!("validation failed: check '{}' (value {:.3e} > threshold {:.3e})",
                    failed.name, failed.value, failed.threshold);
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
