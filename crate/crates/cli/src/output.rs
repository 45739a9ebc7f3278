//! Result tables, file writers and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use lr_ergo_core::C64;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::RunError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    I(i64),
    B(bool),
    S(String),
}

impl Cell {
    /// Shortest text that parses back to the same value.
    pub fn text(&self) -> String {
        match self {
            Cell::F(x) if x.is_finite() => {
                serde_json::to_string(x).expect("finite floats serialize")
            }
            Cell::F(x) if x.is_nan() => "NaN".into(),
            Cell::F(x) => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::U(x) => x.to_string(),
            Cell::I(x) => x.to_string(),
            Cell::B(x) => x.to_string(),
            Cell::S(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(x) if x.is_finite() => Value::from(*x),
            Cell::F(_) => Value::String(self.text()),
            Cell::U(x) => Value::from(*x),
            Cell::I(x) => Value::from(*x),
            Cell::B(x) => Value::from(*x),
            Cell::S(s) => Value::from(s.as_str()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}
impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::U(x)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::U(x as u64)
    }
}
impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::U(x as u64)
    }
}
impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::I(x)
    }
}
impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::B(x)
    }
}
impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

/// Semicolon-joined vector, used for `k`, `kappa` and horizon lists.
pub fn join(v: &[f64]) -> Cell {
    Cell::S(
        v.iter()
            .map(|x| Cell::F(*x).text())
            .collect::<Vec<_>>()
            .join(";"),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Pushes real and imaginary parts as two cells.
    pub fn complex(z: C64) -> [Cell; 2] {
        [Cell::F(z.re), Cell::F(z.im)]
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::text))?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .cloned()
                        .zip(row.iter().map(Cell::json))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

/// Everything a command produces before it is written out.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    /// Machine-readable document written in place of the generic JSON.
    pub document: Option<(String, Value)>,
    /// Extra human-readable files.
    pub text: Vec<(String, String)>,
    /// Set when a certificate or check failed.
    pub violation: Option<String>,
}

impl Report {
    pub fn summary(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.into(), value.into());
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub format: Format,
    pub workers: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        context: format!("writing {}", path.display()),
        source,
    }
}

fn write(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    files: &mut Vec<OutputFile>,
) -> Result<(), RunError> {
    let path: PathBuf = dir.join(name);
    fs::write(&path, bytes).map_err(io_err(&path))?;
    files.push(OutputFile {
        file: name.into(),
        bytes: bytes.len(),
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("json values serialize");
    out.push(b'\n');
    out
}

/// Writes the report in `format` and returns the file list in write order.
pub fn write_report(
    dir: &Path,
    command: &str,
    format: Format,
    report: &Report,
) -> Result<Vec<OutputFile>, RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    match format {
        Format::Csv => {
            for t in &report.tables {
                let bytes = t.to_csv().map_err(|e| RunError::Io {
                    context: format!("encoding {}.csv", t.name),
                    source: e.into(),
                })?;
                write(dir, &format!("{}.csv", t.name), &bytes, &mut files)?;
            }
            if let Some((name, doc)) = &report.document {
                write(dir, &format!("{name}.json"), &pretty(doc), &mut files)?;
            }
        }
        Format::Json => {
            let (name, doc) = match &report.document {
                Some((name, doc)) => (name.clone(), doc.clone()),
                None => {
                    let mut doc = Map::new();
                    doc.insert("command".into(), command.into());
                    doc.insert("summary".into(), Value::Object(report.summary.clone()));
                    for t in &report.tables {
                        doc.insert(t.name.clone(), t.to_json());
                    }
                    (command.replace('-', "_"), Value::Object(doc))
                }
            };
            write(dir, &format!("{name}.json"), &pretty(&doc), &mut files)?;
        }
    }
    for (name, body) in &report.text {
        write(dir, name, body.as_bytes(), &mut files)?;
    }
    Ok(files)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), RunError> {
    let path = dir.join("manifest.json");
    let v = serde_json::to_value(manifest).expect("manifest serializes");
    fs::write(&path, pretty(&v)).map_err(io_err(&path))
}
