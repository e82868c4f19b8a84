//! Results bundle: unit-tagged numeric tables plus a JSON manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use qpp_dbm::units::{Dimension, UnitSystem};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{Format, ScenarioConfig};

pub const MANIFEST: &str = "manifest.json";
const BINARY_MAGIC: &[u8; 4] = b"QPPT";
const BINARY_VERSION: u32 = 1;

/// One table cell. Numbers are stored in internal units and converted with
/// the column dimension on write.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
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

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub dim: Dimension,
}

pub fn col(name: impl Into<String>, dim: Dimension) -> Column {
    Column { name: name.into(), dim }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Self {
        Self { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableEntry {
    pub name: String,
    pub files: Vec<String>,
    pub rows: usize,
    pub columns: Vec<ColumnEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnEntry {
    pub name: String,
    pub unit: String,
}

/// `name [unit]` header cell.
pub fn header(c: &Column, units: UnitSystem) -> String {
    format!("{} [{}]", c.name, units.label(c.dim))
}

/// SHA-256 of the canonical (compact, field-ordered) serialization.
pub fn config_hash(config: &ScenarioConfig) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// 17 significant digits, enough to round-trip any f64.
fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub struct Bundle {
    dir: PathBuf,
    units: UnitSystem,
    formats: Vec<Format>,
    tables: Vec<TableEntry>,
    sections: serde_json::Map<String, Value>,
}

impl Bundle {
    pub fn create(dir: &Path, units: UnitSystem, formats: &[Format]) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), units, formats: formats.to_vec(), tables: Vec::new(), sections: Default::default() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn units(&self) -> UnitSystem {
        self.units
    }

    /// Adds or replaces a top-level manifest section.
    pub fn section(&mut self, key: &str, value: impl Serialize) {
        self.sections.insert(key.to_string(), serde_json::to_value(value).expect("manifest section serializes"));
    }

    pub fn write_json(&self, file: &str, value: &impl Serialize) -> io::Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        fs::write(self.dir.join(file), text + "\n")
    }

    pub fn write_table(&mut self, table: &Table) -> io::Result<()> {
        let mut files = Vec::new();
        for f in &self.formats {
            match f {
                Format::Csv => {
                    let name = format!("{}.csv", table.name);
                    self.write_csv(&name, table)?;
                    files.push(name);
                }
                Format::Binary => {
                    let name = format!("{}.bin", table.name);
                    self.write_binary(&name, table)?;
                    files.push(name);
                }
            }
        }
        let entry = TableEntry {
            name: table.name.clone(),
            files,
            rows: table.rows.len(),
            columns: table
                .columns
                .iter()
                .map(|c| ColumnEntry { name: c.name.clone(), unit: self.units.label(c.dim).to_string() })
                .collect(),
        };
        self.tables.retain(|t| t.name != entry.name);
        self.tables.push(entry);
        Ok(())
    }

    fn external(&self, cell: &Cell, dim: Dimension) -> Cell {
        match cell {
            Cell::Num(v) => Cell::Num(self.units.to_external(*v, dim)),
            other => other.clone(),
        }
    }

    fn write_csv(&self, file: &str, table: &Table) -> io::Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(file)).map_err(io::Error::other)?;
        w.write_record(table.columns.iter().map(|c| header(c, self.units))).map_err(io::Error::other)?;
        for row in &table.rows {
            let rec = row.iter().zip(&table.columns).map(|(cell, c)| match self.external(cell, c.dim) {
                Cell::Num(v) => fmt_num(v),
                Cell::Int(i) => i.to_string(),
                Cell::Text(s) => s,
            });
            w.write_record(rec).map_err(io::Error::other)?;
        }
        w.flush()
    }

    /// Little-endian layout: magic, version, column count, row count, column
    /// headers (u32 length + UTF-8), then cells as a tag byte (0 f64, 1 i64,
    /// 2 string) and payload.
    fn write_binary(&self, file: &str, table: &Table) -> io::Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(BINARY_MAGIC);
        buf.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        buf.extend_from_slice(&(table.columns.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(table.rows.len() as u64).to_le_bytes());
        let put_str = |buf: &mut Vec<u8>, s: &str| {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        };
        for c in &table.columns {
            put_str(&mut buf, &header(c, self.units));
        }
        for row in &table.rows {
            for (cell, c) in row.iter().zip(&table.columns) {
                match self.external(cell, c.dim) {
                    Cell::Num(v) => {
                        buf.push(0);
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                    Cell::Int(i) => {
                        buf.push(1);
                        buf.extend_from_slice(&i.to_le_bytes());
                    }
                    Cell::Text(s) => {
                        buf.push(2);
                        put_str(&mut buf, &s);
                    }
                }
            }
        }
        let mut f = fs::File::create(self.dir.join(file))?;
        f.write_all(&buf)
    }

    /// Writes the manifest. `config` is embedded verbatim (re-serialized) so
    /// the manifest alone reproduces the run.
    pub fn finish(&mut self, command: &str, config: &ScenarioConfig) -> io::Result<()> {
        let mut m = serde_json::Map::new();
        m.insert("tool".into(), Value::from(env!("CARGO_PKG_NAME")));
        m.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
        m.insert("command".into(), Value::from(command));
        m.insert("config_hash".into(), Value::from(config_hash(config)));
        m.insert("config".into(), serde_json::to_value(config).map_err(io::Error::other)?);
        for (k, v) in &self.sections {
            m.insert(k.clone(), v.clone());
        }
        self.tables.sort_by(|a, b| a.name.cmp(&b.name));
        m.insert("tables".into(), serde_json::to_value(&self.tables).map_err(io::Error::other)?);
        self.write_json(MANIFEST, &Value::Object(m))
    }
}

/// Reads a bundle CSV back as header names and string records.
pub fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(io::Error::other)?;
    let headers = r.headers().map_err(io::Error::other)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(io::Error::other)?.iter().map(String::from).collect());
    }
    Ok((headers, rows))
}
