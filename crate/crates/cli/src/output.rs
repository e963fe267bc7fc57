//! Result tables written as CSV or JSON with a provenance record.

use std::path::{Path, PathBuf};

use cautious::mdp::format::write_atomic;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::manifest::{Format, RunManifest};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    /// Undefined for this row; `n/a` in CSV, `null` in JSON.
    Missing,
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Missing, Into::into)
    }
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Int(x) => x.to_string(),
            // shortest representation that reads back to the same bits
            Cell::Num(x) => format!("{x:?}"),
            Cell::Text(s) => s.clone(),
            Cell::Missing => "n/a".into(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(x) => json!(x),
            Cell::Num(x) => json!(x),
            Cell::Text(s) => json!(s),
            Cell::Missing => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from the header");
        self.rows.push(row);
    }

    fn provenance(hash: &str, seed: u64) -> String {
        format!("# manifest_sha256={hash} seed={seed}")
    }

    pub fn to_csv(&self, hash: &str, seed: u64) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| CliError::Output(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_csv)).map_err(|e| CliError::Output(e.to_string()))?;
        }
        let body = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        let body = String::from_utf8(body).map_err(|e| CliError::Output(e.to_string()))?;
        Ok(format!("{}\n{body}", Self::provenance(hash, seed)))
    }

    pub fn to_json(&self, hash: &str, seed: u64) -> String {
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::to_json).collect())).collect();
        let doc = json!({
            "provenance": { "manifest_sha256": hash, "seed": seed },
            "columns": self.columns,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("tables serialize");
        s.push('\n');
        s
    }

    /// Writes `dir/stem.{csv,json}` atomically and returns the path.
    pub fn write(&self, dir: &Path, stem: &str, manifest: &RunManifest) -> CliResult<PathBuf> {
        self.write_as(dir, stem, manifest.format, &manifest.hash, manifest.seed)
    }

    pub fn write_as(&self, dir: &Path, stem: &str, format: Format, hash: &str, seed: u64) -> CliResult<PathBuf> {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        let text = match format {
            Format::Csv => self.to_csv(hash, seed)?,
            Format::Json => self.to_json(hash, seed),
        };
        write_atomic(&path, &text)?;
        Ok(path)
    }
}

/// Normal-approximation 95% half-width of the mean, `None` below two values.
pub fn ci95_half_width(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(1.96 * (var / n).sqrt())
}
