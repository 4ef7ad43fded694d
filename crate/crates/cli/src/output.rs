//! Deterministic data files: CSV tables with unit-suffixed headers and
//! full-precision (shortest round-trip) decimal floats, or the same tables
//! as JSON arrays.

use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Json,
}

impl std::str::FromStr for DataFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "json" => Ok(DataFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

/// A columnar table: header names carry the unit suffix.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn render_json(&self) -> String {
        #[derive(Serialize)]
        struct JsonTable<'a> {
            columns: &'a [String],
            rows: &'a [Vec<f64>],
        }
        serde_json::to_string_pretty(&JsonTable {
            columns: &self.columns,
            rows: &self.rows,
        })
        .expect("table serialization")
    }

    /// Write `<dir>/<stem>.csv` or `.json`; returns the path written.
    pub fn write(
        &self,
        dir: &Path,
        stem: &str,
        format: DataFormat,
    ) -> std::io::Result<PathBuf> {
        let (ext, body) = match format {
            DataFormat::Csv => ("csv", self.render_csv()),
            DataFormat::Json => ("json", self.render_json()),
        };
        let path = dir.join(format!("{stem}.{ext}"));
        let mut f = std::fs::File::create(&path)?;
        f.write_all(body.as_bytes())?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(dir: &Path, stem: &str, value: &T) -> std::io::Result<PathBuf> {
    let path = dir.join(format!("{stem}.json"));
    let body = serde_json::to_string_pretty(value).expect("json serialization");
    std::fs::write(&path, body)?;
    Ok(path)
}
