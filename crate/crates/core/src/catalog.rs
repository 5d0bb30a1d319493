//! Relational views over delimited text files.
//!
//! A [`Catalog`] maps table names to files with explicit schemas and is
//! persisted as a `catalog.json` manifest. Scans turn every file record into
//! one row; an empty field decodes to `Null` whatever the column type.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relation::{Relation, Row};
use crate::types::{Column, ColumnType, Schema, SchemaError, Value};

pub const MANIFEST_FILE: &str = "catalog.json";
pub const DEFAULT_SAMPLE_ROWS: usize = 1000;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("schema inference failed for `{path}` at line {line}: {message}")]
    Inference {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("scan of `{table}` failed at line {line}: {message}")]
    Scan {
        table: String,
        line: u64,
        message: String,
    },
    #[error("table `{0}` already exists")]
    Conflict(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("invalid schema for `{table}`: {source}")]
    Schema {
        table: String,
        #[source]
        source: SchemaError,
    },
    #[error("invalid delimiter {0:?}: must be a single ASCII character")]
    Delimiter(char),
    #[error("invalid catalog manifest `{path}`: {message}")]
    Manifest { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    DelimitedText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub table_name: String,
    pub source_path: PathBuf,
    pub format: Format,
    pub delimiter: char,
    pub has_header: bool,
    #[serde(rename = "columns")]
    pub schema: Schema,
}

impl CatalogEntry {
    pub fn delimited(
        table_name: impl Into<String>,
        source_path: impl Into<PathBuf>,
        delimiter: char,
        has_header: bool,
        schema: Schema,
    ) -> Self {
        CatalogEntry {
            table_name: table_name.into(),
            source_path: source_path.into(),
            format: Format::DelimitedText,
            delimiter,
            has_header,
            schema,
        }
    }
}

/// Anything that can hand out named relations: the file catalog, an
/// in-memory table set, or an external connector.
pub trait TableProvider: Send + Sync {
    fn table_schema(&self, name: &str) -> Result<Schema, CatalogError>;
    fn scan(&self, name: &str) -> Result<Arc<Relation>, CatalogError>;
    fn table_names(&self) -> Vec<String>;
}

fn delimiter_byte(d: char) -> Result<u8, CatalogError> {
    if d.is_ascii() && d != '"' && d != '\n' && d != '\r' {
        Ok(d as u8)
    } else {
        Err(CatalogError::Delimiter(d))
    }
}

fn reader(path: &Path, delimiter: char) -> Result<csv::Reader<fs::File>, CatalogError> {
    let file = fs::File::open(path).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter_byte(delimiter)?)
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CatalogError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CatalogError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CatalogError::Inference {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    if s.eq_ignore_ascii_case("true") {
        Some(true)
    } else if s.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}

/// Narrowest type in Bool < Int64 < Float64 < Utf8 that `field` parses as.
fn classify(field: &str) -> ColumnType {
    let t = field.trim();
    if parse_bool(t).is_some() {
        ColumnType::Bool
    } else if t.parse::<i64>().is_ok() {
        ColumnType::Int64
    } else if t.bytes().any(|b| b.is_ascii_digit()) && t.parse::<f64>().is_ok() {
        ColumnType::Float64
    } else {
        ColumnType::Utf8
    }
}

/// Joins two observed types: the narrowest type both values parse as.
fn widen(a: ColumnType, b: ColumnType) -> ColumnType {
    use ColumnType::*;
    match (a, b) {
        (x, y) if x == y => x,
        (Int64, Float64) | (Float64, Int64) => Float64,
        _ => Utf8,
    }
}

/// Infers a schema from the first `sample_rows` records of a delimited file.
pub fn infer_schema(
    path: &Path,
    delimiter: char,
    has_header: bool,
    sample_rows: usize,
) -> Result<Schema, CatalogError> {
    let sample_rows = sample_rows.max(1);
    let mut rdr = reader(path, delimiter)?;
    let mut records = rdr.records();

    let mut names: Option<Vec<String>> = None;
    if has_header {
        match records.next() {
            Some(rec) => {
                let rec = rec.map_err(|e| csv_error(path, e))?;
                names = Some(rec.iter().map(|s| s.trim().to_string()).collect());
            }
            None => {
                return Err(CatalogError::Inference {
                    path: path.to_path_buf(),
                    line: 1,
                    message: "file is empty".into(),
                })
            }
        }
    }

    let mut width = names.as_ref().map(Vec::len);
    let mut observed: Vec<Option<ColumnType>> = Vec::new();
    for rec in records.take(sample_rows) {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(CatalogError::Inference {
                    path: path.to_path_buf(),
                    line,
                    message: format!("ragged row: expected {w} fields, found {}", rec.len()),
                })
            }
            _ => {}
        }
        observed.resize(rec.len(), None);
        for (slot, field) in observed.iter_mut().zip(rec.iter()) {
            if field.is_empty() {
                continue;
            }
            let t = classify(field);
            *slot = Some(slot.map_or(t, |prev| widen(prev, t)));
        }
    }

    let width = width.ok_or_else(|| CatalogError::Inference {
        path: path.to_path_buf(),
        line: 1,
        message: "file is empty".into(),
    })?;
    observed.resize(width, None);
    let names = names.unwrap_or_else(|| (0..width).map(|i| format!("col{i}")).collect());
    let columns = names
        .into_iter()
        .enumerate()
        .zip(observed)
        .map(|((i, n), t)| {
            let n = if n.is_empty() { format!("col{i}") } else { n };
            Column::new(n, t.unwrap_or(ColumnType::Utf8))
        })
        .collect();
    Schema::new(columns).map_err(|e| CatalogError::Inference {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })
}

fn parse_field(field: &str, ty: ColumnType) -> Result<Value, String> {
    if field.is_empty() {
        return Ok(Value::Null);
    }
    let t = field.trim();
    match ty {
        ColumnType::Utf8 => Ok(Value::Utf8(field.to_string())),
        ColumnType::Bool => parse_bool(t)
            .map(Value::Bool)
            .ok_or_else(|| format!("`{field}` is not a Bool")),
        ColumnType::Int64 => t
            .parse::<i64>()
            .map(Value::Int64)
            .map_err(|_| format!("`{field}` is not an Int64")),
        ColumnType::Float64 => t
            .parse::<f64>()
            .map(Value::Float64)
            .map_err(|_| format!("`{field}` is not a Float64")),
    }
}

/// Reads every record of `entry`'s file into a single-partition relation.
pub fn scan_entry(entry: &CatalogEntry, base: Option<&Path>) -> Result<Relation, CatalogError> {
    let path = resolve_path(&entry.source_path, base);
    let mut rdr = reader(&path, entry.delimiter)?;
    let scan_err = |line: u64, message: String| CatalogError::Scan {
        table: entry.table_name.clone(),
        line,
        message,
    };
    let width = entry.schema.len();
    let mut rows: Vec<Row> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| match csv_error(&path, e) {
            CatalogError::Inference { line, message, .. } => scan_err(line, message),
            other => other,
        })?;
        if i == 0 && entry.has_header {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(scan_err(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let row = rec
            .iter()
            .zip(entry.schema.columns())
            .map(|(f, c)| {
                parse_field(f, c.ty)
                    .map_err(|m| scan_err(line, format!("column `{}`: {m}", c.name)))
            })
            .collect::<Result<Row, _>>()?;
        rows.push(row);
    }
    Ok(Relation::from_partitions_unchecked(
        entry.schema.clone(),
        vec![rows],
    ))
}

fn resolve_path(p: &Path, base: Option<&Path>) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

/// Named tables over files, optionally rooted at a directory holding the
/// manifest (relative source paths resolve against it).
///
/// Readers may share a catalog freely; registration takes `&mut self`.
#[derive(Debug, Default)]
pub struct Catalog {
    root: Option<PathBuf>,
    entries: BTreeMap<String, CatalogEntry>,
    cache: RwLock<HashMap<String, Arc<Relation>>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens (or starts) the catalog whose manifest lives in `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let dir = dir.into();
        let manifest = dir.join(MANIFEST_FILE);
        let mut cat = Catalog {
            root: Some(dir),
            ..Default::default()
        };
        if manifest.exists() {
            let text = fs::read_to_string(&manifest).map_err(|source| CatalogError::Io {
                path: manifest.clone(),
                source,
            })?;
            let entries: Vec<CatalogEntry> =
                serde_json::from_str(&text).map_err(|e| CatalogError::Manifest {
                    path: manifest.clone(),
                    message: e.to_string(),
                })?;
            for e in entries {
                cat.register_table(e)?;
            }
        }
        Ok(cat)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Writes `catalog.json` into the root directory.
    pub fn save(&self) -> Result<(), CatalogError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let path = root.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.list_tables()).expect("entries serialize");
        fs::write(&path, json + "\n").map_err(|source| CatalogError::Io { path, source })
    }

    pub fn register_table(&mut self, entry: CatalogEntry) -> Result<(), CatalogError> {
        if self.entries.contains_key(&entry.table_name) {
            return Err(CatalogError::Conflict(entry.table_name));
        }
        if entry.schema.is_empty() {
            return Err(CatalogError::Schema {
                table: entry.table_name,
                source: SchemaError::Empty,
            });
        }
        delimiter_byte(entry.delimiter)?;
        self.entries.insert(entry.table_name.clone(), entry);
        Ok(())
    }

    /// Infers the schema of `path` and registers it as `name`.
    pub fn load_table(
        &mut self,
        name: &str,
        path: &Path,
        delimiter: char,
        has_header: bool,
    ) -> Result<&CatalogEntry, CatalogError> {
        let resolved = resolve_path(path, self.root.as_deref());
        let schema = infer_schema(&resolved, delimiter, has_header, DEFAULT_SAMPLE_ROWS)?;
        self.register_table(CatalogEntry::delimited(
            name, path, delimiter, has_header, schema,
        ))?;
        Ok(&self.entries[name])
    }

    /// All entries sorted by table name.
    pub fn list_tables(&self) -> Vec<CatalogEntry> {
        self.entries.values().cloned().collect()
    }

    pub fn entry(&self, name: &str) -> Option<&CatalogEntry> {
        self.entries.get(name)
    }

    pub fn clear_cache(&self) {
        self.cache.write().expect("cache lock").clear();
    }
}

impl Clone for Catalog {
    /// Copies the entries and shares already scanned relations.
    fn clone(&self) -> Self {
        Catalog {
            root: self.root.clone(),
            entries: self.entries.clone(),
            cache: RwLock::new(self.cache.read().expect("cache lock").clone()),
        }
    }
}

impl TableProvider for Catalog {
    fn table_schema(&self, name: &str) -> Result<Schema, CatalogError> {
        self.entries
            .get(name)
            .map(|e| e.schema.clone())
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    fn scan(&self, name: &str) -> Result<Arc<Relation>, CatalogError> {
        if let Some(r) = self.cache.read().expect("cache lock").get(name) {
            return Ok(Arc::clone(r));
        }
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))?;
        let rel = Arc::new(scan_entry(entry, self.root.as_deref())?);
        self.cache
            .write()
            .expect("cache lock")
            .insert(name.to_string(), Arc::clone(&rel));
        Ok(rel)
    }

    fn table_names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }
}

/// In-memory tables.
#[derive(Debug, Clone, Default)]
pub struct MemoryTables {
    tables: BTreeMap<String, Arc<Relation>>,
}

impl MemoryTables {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, rel: Relation) {
        self.tables.insert(name.into(), Arc::new(rel));
    }

    pub fn with(mut self, name: impl Into<String>, rel: Relation) -> Self {
        self.insert(name, rel);
        self
    }
}

impl TableProvider for MemoryTables {
    fn table_schema(&self, name: &str) -> Result<Schema, CatalogError> {
        self.tables
            .get(name)
            .map(|r| r.schema().clone())
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    fn scan(&self, name: &str) -> Result<Arc<Relation>, CatalogError> {
        self.tables
            .get(name)
            .cloned()
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    fn table_names(&self) -> Vec<String> {
        self.tables.keys().cloned().collect()
    }
}
