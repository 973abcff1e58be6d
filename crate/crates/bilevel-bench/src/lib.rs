//! Benchmark harness library: experiment configs, job execution, result
//! serialization, and plotting. The `bilevel-bench` binary is a thin CLI
//! over these functions.

pub mod config;
pub mod experiment;
pub mod io;
pub mod plot;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// Configuration parse or validation failure (CLI exit code 2).
    #[error("{0}")]
    Config(String),

    /// Solver or baseline failure; divergence maps to exit code 3.
    #[error(transparent)]
    Run(#[from] bilevel::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Run(bilevel::Error::Diverged { .. }) => 3,
            BenchError::Run(bilevel::Error::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}
