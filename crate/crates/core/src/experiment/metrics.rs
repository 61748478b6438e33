use std::io::Write;

use crate::error::Result;

pub const CSV_HEADER: &str = "run_id,seed,step,metric,value";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run_id: String,
    pub seed: u64,
    pub step: u64,
    pub metric: String,
    pub value: f64,
}

/// Collects rows for one run.
#[derive(Debug, Clone)]
pub struct MetricLog {
    run_id: String,
    seed: u64,
    rows: Vec<MetricRow>,
}

impl MetricLog {
    pub fn new(run_id: impl Into<String>, seed: u64) -> Self {
        Self {
            run_id: run_id.into(),
            seed,
            rows: Vec::new(),
        }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn push(&mut self, step: u64, metric: &str, value: f64) {
        self.rows.push(MetricRow {
            run_id: self.run_id.clone(),
            seed: self.seed,
            step,
            metric: metric.to_string(),
            value,
        });
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<MetricRow> {
        self.rows
    }

    /// Values of one metric in logging order.
    pub fn series(&self, metric: &str) -> Vec<(u64, f64)> {
        series(&self.rows, metric)
    }
}

pub fn series(rows: &[MetricRow], metric: &str) -> Vec<(u64, f64)> {
    rows.iter()
        .filter(|r| r.metric == metric)
        .map(|r| (r.step, r.value))
        .collect()
}

/// Header plus one line per row; floats carry 17 significant digits.
pub fn write_csv<W: Write>(mut out: W, rows: &[MetricRow]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{:.16e}", r.run_id, r.seed, r.step, r.metric, r.value)?;
    }
    out.flush()?;
    Ok(())
}

pub fn to_csv(rows: &[MetricRow]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}
