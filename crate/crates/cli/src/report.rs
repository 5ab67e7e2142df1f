//! Tabular reports with the configuration that produced them.

use std::io::Write;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Config, Format};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Prefix of the CSV comment line that carries the configuration.
const CONFIG_TAG: &str = "# config ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config: Config,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Rows whose first cell names a statistic (`max`, `avg`, `min`, `dev`).
    pub summary: Vec<Vec<Value>>,
}

impl Report {
    pub fn new(config: &Config, columns: &[&str]) -> Self {
        Report {
            version: VERSION.to_string(),
            config: config.clone(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Appends `max/avg/min/dev` rows over the numeric cells of `columns`;
    /// other cells are left empty.
    pub fn summarize(&mut self, columns: &[&str]) {
        let idx: Vec<usize> = columns.iter().filter_map(|c| self.column(c)).collect();
        for stat in ["max", "avg", "min", "dev"] {
            let mut row = vec![Value::Null; self.columns.len()];
            row[0] = Value::from(stat);
            for &j in &idx {
                let xs: Vec<f64> = self.rows.iter().filter_map(|r| r[j].as_f64()).collect();
                row[j] = number(statistic(stat, &xs));
            }
            self.summary.push(row);
        }
    }

    pub fn write(&self, format: Format, mut out: impl Write) -> anyhow::Result<()> {
        match format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, self)?;
                writeln!(out)?;
            }
            Format::Csv => {
                writeln!(out, "# sensel {}", self.version)?;
                writeln!(out, "{CONFIG_TAG}{}", serde_json::to_string(&self.config)?)?;
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.columns)?;
                for row in self.rows.iter().chain(&self.summary) {
                    w.write_record(row.iter().map(cell_text))?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }

    /// The configuration embedded in a report written by [`Report::write`].
    pub fn embedded_config(text: &str) -> anyhow::Result<Config> {
        if text.trim_start().starts_with('{') {
            let v: Value = serde_json::from_str(text).context("report is not valid JSON")?;
            return serde_json::from_value(v["config"].clone()).context("report has no usable config");
        }
        for line in text.lines() {
            if let Some(json) = line.strip_prefix(CONFIG_TAG) {
                return serde_json::from_str(json).context("bad embedded config");
            }
        }
        bail!("no embedded configuration found")
    }
}

/// `max`, `avg`, `min`, or population standard deviation `dev`; NaN for no data.
pub fn statistic(stat: &str, xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let n = xs.len() as f64;
    let avg = xs.iter().sum::<f64>() / n;
    match stat {
        "max" => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "min" => xs.iter().copied().fold(f64::INFINITY, f64::min),
        "avg" => avg,
        "dev" => (xs.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / n).sqrt(),
        other => panic!("unknown statistic {other}"),
    }
}

/// A JSON number, or `null` for non-finite values.
pub fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}
