//! Results of one experiment run and their on-disk formats.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Version of the summary JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

/// How replicate streams are derived from the master seed.
pub const STREAM_DERIVATION: &str =
    "ChaCha8 keyed by SHA-256(\"conewalk/replicate-stream/v1\" || master_seed || grid_index || replicate), all little-endian u64";

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v:e}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Empty => Ok(()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

/// A CSV table with a fixed column order.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the header");
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Header line followed by the rows, comma separated.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub reference: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, passed: bool, statistic: f64, reference: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            statistic,
            reference,
            detail: detail.into(),
        }
    }
}

/// `(x, y, y_err)` triples for plotting.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub points: Vec<[f64; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

/// Everything one run produced. All fields except the timing are a deterministic
/// function of the configuration.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub table: Table,
    pub replicate_table: Option<Table>,
    pub aggregate: Value,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
    pub plot: Option<PlotData>,
    pub wall_time_secs: f64,
    pub workers: usize,
}

impl RunRecord {
    /// A record with no rows, e.g. for a run that was cut short.
    pub fn empty(config: &ExperimentConfig, columns: &[&'static str]) -> Self {
        RunRecord {
            config: config.clone(),
            config_hash: config.hash(),
            table: Table::new(columns),
            replicate_table: None,
            aggregate: Value::Object(Default::default()),
            checks: Vec::new(),
            warnings: Vec::new(),
            plot: None,
            wall_time_secs: 0.0,
            workers: 1,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// The summary document written to `<name>.summary.json`.
    pub fn summary_json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "generator": format!("conewalk {}", env!("CARGO_PKG_VERSION")),
            "experiment": self.config.experiment.as_str(),
            "name": self.config.name,
            "config_hash": self.config_hash,
            "config": self.config,
            "seed_provenance": {
                "master_seed": self.config.master_seed,
                "stream_derivation": STREAM_DERIVATION,
            },
            "columns": self.table.columns,
            "row_count": self.table.rows.len(),
            "aggregate": self.aggregate,
            "checks": self.checks,
            "passed": self.passed(),
            "warnings": self.warnings,
        })
    }
}

fn timestamp_line() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# conewalk {} generated_unix={secs}\n", env!("CARGO_PKG_VERSION"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    Ok(())
}

/// Writes the record into `dir`; returns the paths written.
///
/// CSV files start with one `# conewalk <version> generated_unix=<t>` line, which is the
/// only part of any output (besides `<name>.timing.json`) that differs between reruns.
pub fn emit_outputs(record: &RunRecord, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let name = &record.config.name;
    let mut written = Vec::new();
    if format.csv() {
        let path = dir.join(format!("{name}.csv"));
        write_file(&path, &(timestamp_line() + &record.table.to_csv()))?;
        written.push(path);
        if let Some(t) = &record.replicate_table {
            let path = dir.join(format!("{name}.replicates.csv"));
            write_file(&path, &(timestamp_line() + &t.to_csv()))?;
            written.push(path);
        }
        if let Some(plot) = &record.plot {
            let mut t = Table::new(&["x", "y", "y_err"]);
            for p in &plot.points {
                t.push(p.iter().map(|v| Cell::Float(*v)).collect());
            }
            let header = format!("{}# x = {}, y = {}\n", timestamp_line(), plot.x_label, plot.y_label);
            let path = dir.join(format!("{name}.plot.csv"));
            write_file(&path, &(header + &t.to_csv()))?;
            written.push(path);
        }
    }
    if format.json() {
        let path = dir.join(format!("{name}.summary.json"));
        let text = serde_json::to_string_pretty(&record.summary_json())? + "\n";
        write_file(&path, &text)?;
        written.push(path);
        let timing = json!({
            "wall_time_secs": record.wall_time_secs,
            "workers": record.workers,
        });
        let path = dir.join(format!("{name}.timing.json"));
        write_file(&path, &(serde_json::to_string_pretty(&timing)? + "\n"))?;
        written.push(path);
    }
    Ok(written)
}
