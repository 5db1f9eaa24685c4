//! Tabular outputs with a provenance header, as CSV or JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, config_sha256: &str, seed: u64) -> Self {
        Self {
            tool: format!("echo-lab {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config_sha256: config_sha256.to_string(),
            seed,
        }
    }

    /// `#`-prefixed comment lines for text outputs.
    pub fn comment_lines(&self) -> String {
        format!(
            "# {}\n# command={}\n# config_sha256={}\n# seed={}\n",
            self.tool, self.command, self.config_sha256, self.seed
        )
    }
}

/// Rows of named columns.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn records(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|row| {
                let map = self
                    .columns
                    .iter()
                    .map(|c| c.to_string())
                    .zip(row.iter().cloned())
                    .collect();
                Value::Object(map)
            })
            .collect()
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => {
            format!("\"{}\"", s.replace('"', "\"\""))
        }
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Writes `table` to `<dir>/<stem>.<csv|json>`. JSON output also carries `extra`.
pub fn write_table(
    dir: &Path,
    stem: &str,
    format: Format,
    provenance: &Provenance,
    table: &Table,
    extra: Option<Value>,
) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut out = BufWriter::new(file);
    let result = match format {
        Format::Csv => (|| -> std::io::Result<()> {
            out.write_all(provenance.comment_lines().as_bytes())?;
            writeln!(out, "{}", table.columns.join(","))?;
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(csv_cell).collect();
                writeln!(out, "{}", cells.join(","))?;
            }
            out.flush()
        })(),
        Format::Json => (|| -> std::io::Result<()> {
            let mut doc = json!({ "provenance": provenance, "rows": table.records() });
            if let Some(Value::Object(map)) = extra {
                for (k, v) in map {
                    doc[k] = v;
                }
            }
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
            out.flush()
        })(),
    };
    result.map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// JSON number, or null when not finite.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_awkward_strings() {
        assert_eq!(csv_cell(&json!("a,b")), "\"a,b\"");
        assert_eq!(csv_cell(&json!("say \"hi\",")), "\"say \"\"hi\"\",\"");
        assert_eq!(csv_cell(&json!(1.5)), "1.5");
        assert_eq!(csv_cell(&Value::Null), "");
    }

    #[test]
    fn non_finite_numbers_become_null() {
        assert_eq!(num(f64::INFINITY), Value::Null);
        assert_eq!(num(2.0), json!(2.0));
    }
}
