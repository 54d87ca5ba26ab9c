use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use super::{BatchError, BatchState, RunConfig};
use crate::analysis::benchmark;
use crate::fmt::round_sig;
use crate::market::io::{read_records, write_records};
use crate::market::BookingRecord;

/// Files written by [`write_outputs`]. All but `metadata.json` are byte-identical
/// for identical config and seed.
pub const OUTPUT_FILES: [&str; 8] = [
    "records.csv",
    "forecast.csv",
    "policy.csv",
    "benchmark.csv",
    "report.svg",
    "grouping.json",
    "run.json",
    "metadata.json",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BatchError + '_ {
    move |source| BatchError::Io { path: path.display().to_string(), source }
}

fn write(path: &Path, contents: &[u8]) -> Result<(), BatchError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Rounds every float in a JSON tree to 9 significant digits.
fn rounded(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => n.as_f64().map_or(Value::Null, |f| json!(round_sig(f, 9))),
        Value::Array(a) => Value::Array(a.into_iter().map(rounded).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

fn pretty(v: &Value) -> Result<Vec<u8>, BatchError> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

/// Writes the batch artefacts to `dir`. Policy, forecast and benchmark describe
/// the last simulated day; they are skipped when no day ran.
pub fn write_outputs(config: &RunConfig, state: &BatchState, dir: &Path) -> Result<Vec<PathBuf>, BatchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<(), BatchError> {
        let p = dir.join(name);
        write(&p, &bytes)?;
        written.push(p);
        Ok(())
    };

    let mut buf = Vec::new();
    write_records(&mut buf, &state.records, config.epoch)?;
    put("records.csv", buf)?;

    if let Some(f) = &state.forecast {
        put("forecast.csv", f.to_csv().into_bytes())?;
    }
    if let (Some(problem), Some(policy)) = (&state.last_problem, &state.last_policy) {
        put("policy.csv", policy.to_csv(problem).into_bytes())?;
        let (lo, hi) = problem.bounds;
        let heuristic = vec![1.0f64.clamp(lo, hi); problem.n_cells()];
        let table = benchmark(
            problem,
            &[("heuristic".to_string(), heuristic), ("optimized".to_string(), policy.multipliers.clone())],
        )?;
        put("benchmark.csv", table.to_csv().into_bytes())?;
        put("report.svg", table.to_svg().into_bytes())?;
    }
    if let Some(tree) = &state.tree {
        put("grouping.json", pretty(&rounded(tree.to_json()))?)?;
    }

    let run = json!({
        "config": serde_json::to_value(config)?,
        "first_day": state.first_day,
        "days_run": state.history.len(),
        "cumulative_margin": state.cumulative_margin(),
        "cumulative_heuristic_margin": state.cumulative_heuristic_margin(),
        "days": serde_json::to_value(&state.history)?,
    });
    put("run.json", pretty(&rounded(run))?)?;

    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "generated_unix_seconds": secs,
        "version": env!("CARGO_PKG_VERSION"),
        "files": OUTPUT_FILES,
    });
    put("metadata.json", pretty(&meta)?)?;
    Ok(written)
}

/// Reads a booking history CSV written by [`write_outputs`] or by hand.
pub fn ingest(path: &Path, config: &RunConfig) -> Result<Vec<BookingRecord>, BatchError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(read_records(file, config.epoch)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::run_batch;

    #[test]
    fn outputs_are_reproducible_and_round_trip() {
        let c = RunConfig::from_parts(None, &["batch.days=1".into(), "batch.warmup_days=35".into()]).unwrap();
        let s = run_batch(&c).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_outputs(&c, &s, a.path()).unwrap();
        write_outputs(&c, &s, b.path()).unwrap();
        for name in OUTPUT_FILES.iter().filter(|n| **n != "metadata.json") {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
        }
        let back = ingest(&a.path().join("records.csv"), &c).unwrap();
        assert_eq!(back, s.records);
    }

    #[test]
    fn rounding_keeps_integers() {
        let v = rounded(json!({"a": 1, "b": [0.1234567891234, 2.0]}));
        assert_eq!(v, json!({"a": 1, "b": [0.123456789, 2.0]}));
    }
}
