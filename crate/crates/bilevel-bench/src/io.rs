//! Result files: fixed-schema trace CSVs and JSON documents, written
//! atomically (temp file + rename).

use std::fs;
use std::io;
use std::path::Path;

use bilevel::Trace;
use serde::Serialize;

use crate::BenchError;

/// Fixed trace CSV header. One row per recorded iterate; floats carry 18
/// significant digits so re-runs can be compared bitwise.
pub const TRACE_HEADER: &str =
    "k,f,h,grad_h_sq,delta_sq,lambda,kkt_stationarity,oracle_grad_f,oracle_grad_g,oracle_hvp";

pub fn fmt_float(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn trace_csv_string(trace: &Trace) -> String {
    let mut out = String::with_capacity(trace.records.len() * 120 + 128);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.k,
            fmt_float(r.f_val),
            fmt_float(r.h_val),
            fmt_float(r.grad_h_sq),
            fmt_float(r.delta_sq),
            fmt_float(r.lambda),
            fmt_float(r.kkt_stationarity),
            r.oracle_calls.grad_f,
            r.oracle_calls.grad_g,
            r.oracle_calls.hvp,
        ));
    }
    out
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BenchError> {
    let io_err = |source: io::Error| BenchError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<(), BenchError> {
    write_atomic(path, trace_csv_string(trace).as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), BenchError> {
    let text = serde_json::to_string_pretty(doc)
        .map_err(|e| BenchError::Config(format!("serialization failed: {e}")))?;
    write_atomic(path, text.as_bytes())
}
