//! Artifact files of one run: CSV tables, plot data and the JSON summary.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use conc_lab::io::format_float;
use serde_json::{json, Map, Value};

use crate::{CliError, CliResult, Params};

pub const SUMMARY_FILE: &str = "summary.json";
pub const SCHEMA_VERSION: u64 = 1;

/// JSON number, or a string for values JSON cannot carry.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// A CSV cell: floats in 17-digit scientific notation.
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format_float(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::I(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

/// Row macro: `row![a, b, c]` converts each entry into a [`Cell`].
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::output::Cell::from($x)),*] };
}

/// Collects checks, results and artifacts of one experiment.
pub struct Run {
    command: String,
    seed: u64,
    dir: PathBuf,
    params: Value,
    checks: Vec<Value>,
    results: Map<String, Value>,
    artifacts: Vec<String>,
    all_passed: bool,
}

impl Run {
    pub fn new(command: &str, seed: u64, dir: &Path, params: &Params) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::ConfigInvalid(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            command: command.to_string(),
            seed,
            dir: dir.to_path_buf(),
            params: params.as_json(),
            checks: Vec::new(),
            results: Map::new(),
            artifacts: Vec::new(),
            all_passed: true,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Record a check; `value` and `limit` describe what was compared.
    pub fn check(&mut self, name: &str, passed: bool, value: f64, limit: f64) {
        if !passed {
            log::warn!("check {name} failed: value {value}, limit {limit}");
        }
        self.all_passed &= passed;
        self.checks.push(json!({ "name": name, "passed": passed, "value": num(value), "limit": num(limit) }));
    }

    pub fn result(&mut self, key: &str, value: Value) {
        self.results.insert(key.to_string(), value);
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> CliResult<()> {
        let path = self.dir.join(name);
        let io_err = |e: csv::Error| CliError::ConfigInvalid(format!("cannot write {}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io_err)?;
        w.write_record(header).map_err(io_err)?;
        for r in rows {
            w.write_record(r.iter().map(Cell::render)).map_err(io_err)?;
        }
        w.flush().map_err(|e| CliError::ConfigInvalid(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    /// Two-column plot data `plot_<curve>.csv`.
    pub fn write_plot(&mut self, curve: &str, x: &[f64], y: &[f64]) -> CliResult<()> {
        let rows: Vec<Vec<Cell>> = x.iter().zip(y).map(|(&a, &b)| row![a, b]).collect();
        self.write_csv(&format!("plot_{curve}.csv"), &["x", "y"], &rows)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::ConfigInvalid(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    /// Write summary.json and report whether every check passed.
    pub fn finish(mut self) -> CliResult<bool> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.artifacts.sort();
        let summary = json!({
            "schema_version": SCHEMA_VERSION,
            "tool": "conc-lab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "status": if self.all_passed { "pass" } else { "fail" },
            "seed": self.seed,
            "parameters": self.params,
            "checks": self.checks,
            "results": self.results,
            "artifacts": self.artifacts,
            "metadata": { "timestamp": timestamp },
        });
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        let path = self.dir.join(SUMMARY_FILE);
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::ConfigInvalid(format!("cannot write {}: {e}", path.display())))?;
        Ok(self.all_passed)
    }
}
