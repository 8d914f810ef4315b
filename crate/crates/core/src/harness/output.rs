use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use super::HarnessError;

pub const CSV_HEADER: [&str; 14] = [
    "command", "model", "law", "n", "t", "beta", "gamma", "statistic", "value", "stderr", "bias_bound", "samples",
    "seed", "wallclock_ms",
];

/// One output record. `None` fields are written empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub command: String,
    pub model: Option<String>,
    pub law: Option<String>,
    pub n: Option<usize>,
    pub t: Option<u64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub statistic: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub bias_bound: Option<f64>,
    pub samples: Option<u64>,
    pub seed: u64,
    pub wallclock_ms: u64,
}

/// 17 significant digits, round-trip safe.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn opt<T, F: Fn(&T) -> String>(v: &Option<T>, f: F) -> String {
    v.as_ref().map(f).unwrap_or_default()
}

impl Row {
    fn fields(&self) -> [String; 14] {
        [
            self.command.clone(),
            opt(&self.model, String::clone),
            opt(&self.law, String::clone),
            opt(&self.n, usize::to_string),
            opt(&self.t, u64::to_string),
            opt(&self.beta, |b| num(*b)),
            opt(&self.gamma, |g| num(*g)),
            self.statistic.clone(),
            num(self.value),
            opt(&self.stderr, |s| num(*s)),
            opt(&self.bias_bound, |s| num(*s)),
            opt(&self.samples, u64::to_string),
            self.seed.to_string(),
            self.wallclock_ms.to_string(),
        ]
    }
}

/// Writes the header and rows as CSV (LF line endings).
pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| HarnessError::Io(e.into());
    w.write_record(CSV_HEADER).map_err(io)?;
    for row in rows {
        w.write_record(row.fields()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes metadata and rows as one JSON document.
pub fn write_json<W: Write>(metadata: &Value, rows: &[Row], mut out: W) -> Result<(), HarnessError> {
    let doc = json!({ "metadata": metadata, "rows": rows });
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| HarnessError::Io(e.into()))?;
    out.write_all(b"\n")?;
    Ok(())
}
