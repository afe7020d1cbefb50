use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::Format;
use crate::error::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportEnvelope {
    pub tool_version: String,
    pub command: String,
    /// The fully resolved configuration. Feeding it back as a JSON config
    /// reproduces `results`.
    pub config: Value,
    pub timing: Timing,
    pub results: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i128),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 17 significant digits round-trip every f64.
            Cell::Num(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Num(x) => x.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<Option<bool>> for Cell {
    fn from(x: Option<bool>) -> Self {
        x.map_or(Cell::Empty, Cell::Bool)
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

impl From<Option<&str>> for Cell {
    fn from(x: Option<&str>) -> Self {
        x.map_or(Cell::Empty, Cell::from)
    }
}

/// The main table of a command, emitted with `--format csv`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Runtime(e.to_string());
        w.write_record(&self.headers).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
    }
}

pub fn render(envelope: &ReportEnvelope, table: &Table, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(envelope)
                .map_err(|e| CliError::Runtime(format!("cannot serialize report: {e}")))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        Format::Csv => table.to_csv(),
    }
}

pub fn emit(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write to stdout: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_keeps_full_precision() {
        let mut t = Table::new(&["x", "flag", "note"]);
        t.push(vec![Cell::from(0.1 + 0.2), Cell::from(true), Cell::Empty]);
        let text = String::from_utf8(t.to_csv().unwrap()).unwrap();
        let value: f64 = text.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
        assert_eq!(value, 0.1 + 0.2);
        assert!(text.starts_with("x,flag,note\n"));
    }
}
