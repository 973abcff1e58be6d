//! Experiment configuration: JSON schema, defaults, and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Top-level experiment description, parsed from JSON.
///
/// Every field has a default except `problem` and `methods`; the summary
/// JSON written next to the results re-serializes this struct with all
/// defaults materialized, so a run can be replayed bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub methods: Vec<MethodSpec>,
    pub k_list: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_plot_data: bool,
    /// Overrides the per-run recording cadence; default is `max(1, K/10^4)`.
    #[serde(default)]
    pub record_every: Option<usize>,
    /// Warm-start level `C0` (the run starts once `h ≤ α² C0`).
    #[serde(default = "default_c0")]
    pub c0: f64,
    /// Worker threads for independent (method, K) jobs.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_c0() -> f64 {
    1.0
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    ScSynthetic {
        #[serde(default = "default_n20")]
        n: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    NcSynthetic {
        #[serde(default = "default_n20")]
        n: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Coreset {
        #[serde(default)]
        seed: Option<u64>,
    },
    Dhc {
        #[serde(default = "default_features")]
        n_features: usize,
        #[serde(default = "default_train")]
        n_train: usize,
        #[serde(default = "default_val")]
        n_val: usize,
        #[serde(default = "default_corruption")]
        corruption: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Regularity {
        #[serde(default = "default_p6")]
        p: usize,
        #[serde(default = "default_m4")]
        m: usize,
        #[serde(default = "default_m4")]
        n: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_n20() -> usize {
    20
}
fn default_features() -> usize {
    50
}
fn default_train() -> usize {
    1000
}
fn default_val() -> usize {
    500
}
fn default_corruption() -> f64 {
    0.25
}
fn default_p6() -> usize {
    6
}
fn default_m4() -> usize {
    4
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::ScSynthetic { .. } => "sc_synthetic",
            ProblemSpec::NcSynthetic { .. } => "nc_synthetic",
            ProblemSpec::Coreset { .. } => "coreset",
            ProblemSpec::Dhc { .. } => "dhc",
            ProblemSpec::Regularity { .. } => "regularity",
        }
    }
}

/// One method entry; optional fields override the per-method defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    OursCor1 {
        #[serde(default)]
        record_every: Option<usize>,
    },
    OursCor3 {
        #[serde(default)]
        record_every: Option<usize>,
    },
    Aid {
        #[serde(default)]
        outer_step: Option<f64>,
        #[serde(default)]
        inner_iters: Option<usize>,
        #[serde(default)]
        inner_step: Option<f64>,
        #[serde(default)]
        cg_tol: Option<f64>,
        #[serde(default)]
        record_every: Option<usize>,
    },
    Bome {
        #[serde(default)]
        outer_step: Option<f64>,
        #[serde(default)]
        inner_iters: Option<usize>,
        #[serde(default)]
        inner_step: Option<f64>,
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default)]
        record_every: Option<usize>,
    },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::OursCor1 { .. } => "ours_cor1",
            MethodSpec::OursCor3 { .. } => "ours_cor3",
            MethodSpec::Aid { .. } => "aid",
            MethodSpec::Bome { .. } => "bome",
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| BenchError::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.k_list.is_empty() {
            return Err(BenchError::Config("k_list must be non-empty".into()));
        }
        if self.k_list.iter().any(|&k| k == 0) {
            return Err(BenchError::Config("k_list entries must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(BenchError::Config("methods must be non-empty".into()));
        }
        if !(self.c0 > 0.0) {
            return Err(BenchError::Config(format!("c0 must be positive, got {}", self.c0)));
        }
        if self.jobs == 0 {
            return Err(BenchError::Config("jobs must be >= 1".into()));
        }
        if let Some(0) = self.record_every {
            return Err(BenchError::Config("record_every must be >= 1".into()));
        }
        // Method/problem compatibility: AID needs a strongly convex lower level.
        let aid_ok = match self.problem {
            ProblemSpec::ScSynthetic { .. }
            | ProblemSpec::Coreset { .. }
            | ProblemSpec::Dhc { .. }
            | ProblemSpec::Regularity { .. } => true,
            ProblemSpec::NcSynthetic { .. } => false,
        };
        for m in &self.methods {
            if matches!(m, MethodSpec::Aid { .. }) && !aid_ok {
                return Err(BenchError::Config(format!(
                    "method 'aid' requires a strongly convex lower level; problem '{}' is not",
                    self.problem.name()
                )));
            }
        }
        Ok(())
    }

    /// Validation specific to `rate-sweep`: one of our schedules, and a K
    /// grid with at least 3 points spanning at least two decades.
    pub fn validate_for_rate_sweep(&self) -> Result<(), BenchError> {
        self.validate()?;
        if self.methods.len() != 1 {
            return Err(BenchError::Config("rate-sweep takes exactly one method".into()));
        }
        if !matches!(self.methods[0], MethodSpec::OursCor1 { .. } | MethodSpec::OursCor3 { .. }) {
            return Err(BenchError::Config(
                "rate-sweep verifies the prescribed schedules (ours_cor1 or ours_cor3)".into(),
            ));
        }
        if self.k_list.len() < 3 {
            return Err(BenchError::Config("rate-sweep needs at least 3 K values".into()));
        }
        let min = *self.k_list.iter().min().unwrap() as f64;
        let max = *self.k_list.iter().max().unwrap() as f64;
        if max / min < 100.0 {
            return Err(BenchError::Config(
                "rate-sweep K values must span at least two decades".into(),
            ));
        }
        Ok(())
    }
}
