//! Scalar values, column types and relation schemas.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four column types a relation may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColumnType {
    Bool,
    Int64,
    Float64,
    Utf8,
}

impl ColumnType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Int64 | ColumnType::Float64)
    }

    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Bool => "Bool",
            ColumnType::Int64 => "Int64",
            ColumnType::Float64 => "Float64",
            ColumnType::Utf8 => "Utf8",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A tagged scalar.
///
/// `PartialEq`, `Eq`, `Hash` and [`Value::total_cmp`] implement *grouping*
/// semantics: `Null` equals `Null`, `-0.0` equals `0.0` and all NaNs are equal.
/// SQL comparison semantics (where `Null` compares unknown) live in
/// [`Value::sql_cmp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Null,
    Bool(bool),
    Int64(i64),
    Float64(f64),
    Utf8(String),
}

/// Folds `-0.0` into `0.0` and every NaN payload into one canonical NaN.
pub(crate) fn canonical_f64(f: f64) -> f64 {
    if f == 0.0 {
        0.0
    } else if f.is_nan() {
        f64::NAN
    } else {
        f
    }
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    canonical_f64(a).total_cmp(&canonical_f64(b))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot compare {left} with {right}")]
pub struct IncomparableTypes {
    pub left: ColumnType,
    pub right: ColumnType,
}

impl Value {
    pub fn data_type(&self) -> Option<ColumnType> {
        match self {
            Value::Null => None,
            Value::Bool(_) => Some(ColumnType::Bool),
            Value::Int64(_) => Some(ColumnType::Int64),
            Value::Float64(_) => Some(ColumnType::Float64),
            Value::Utf8(_) => Some(ColumnType::Utf8),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int64(i) => Some(*i as f64),
            Value::Float64(f) => Some(*f),
            _ => None,
        }
    }

    /// SQL comparison. `Ok(None)` when either side is `Null`; Int64 is
    /// widened to Float64 when compared against a Float64.
    pub fn sql_cmp(&self, other: &Value) -> Result<Option<Ordering>, IncomparableTypes> {
        let ord = match (self, other) {
            (Value::Null, _) | (_, Value::Null) => return Ok(None),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int64(a), Value::Int64(b)) => a.cmp(b),
            (Value::Float64(a), Value::Float64(b)) => cmp_f64(*a, *b),
            (Value::Int64(a), Value::Float64(b)) => cmp_f64(*a as f64, *b),
            (Value::Float64(a), Value::Int64(b)) => cmp_f64(*a, *b as f64),
            (Value::Utf8(a), Value::Utf8(b)) => a.cmp(b),
            (a, b) => {
                return Err(IncomparableTypes {
                    left: a.data_type().expect("non-null"),
                    right: b.data_type().expect("non-null"),
                })
            }
        };
        Ok(Some(ord))
    }

    /// A total order over all values: `Null` first, then by type, then by
    /// value. Used for canonical row ordering and sort tie-breaking.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Bool(_) => 1,
                Value::Int64(_) => 2,
                Value::Float64(_) => 3,
                Value::Utf8(_) => 4,
            }
        }
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int64(a), Value::Int64(b)) => a.cmp(b),
            (Value::Float64(a), Value::Float64(b)) => cmp_f64(*a, *b),
            (Value::Utf8(a), Value::Utf8(b)) => a.cmp(b),
            (a, b) => rank(a).cmp(&rank(b)),
        }
    }

    /// Widens an Int64 to Float64; other values are returned unchanged.
    pub fn widen_to_f64(&self) -> Value {
        match self {
            Value::Int64(i) => Value::Float64(*i as f64),
            v => v.clone(),
        }
    }

    /// Literal-style rendering: strings quoted, `NULL` spelled out.
    pub fn to_sql_literal(&self) -> String {
        match self {
            Value::Null => "NULL".to_string(),
            Value::Bool(true) => "TRUE".to_string(),
            Value::Bool(false) => "FALSE".to_string(),
            Value::Int64(i) => i.to_string(),
            Value::Float64(f) => {
                let s = format!("{f:?}");
                if s.contains(['.', 'e', 'E']) || !f.is_finite() {
                    s
                } else {
                    format!("{s}.0")
                }
            }
            Value::Utf8(s) => format!("'{}'", s.replace('\'', "''")),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.total_cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Null => 0u8.hash(state),
            Value::Bool(b) => {
                1u8.hash(state);
                b.hash(state)
            }
            Value::Int64(i) => {
                2u8.hash(state);
                i.hash(state)
            }
            Value::Float64(f) => {
                3u8.hash(state);
                canonical_f64(*f).to_bits().hash(state)
            }
            Value::Utf8(s) => {
                4u8.hash(state);
                s.hash(state)
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int64(i) => write!(f, "{i}"),
            Value::Float64(x) => write!(f, "{x}"),
            Value::Utf8(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column {
            name: name.into(),
            ty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("schema has no columns")]
    Empty,
}

/// Ordered, uniquely named columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self, SchemaError> {
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(SchemaError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Schema { columns })
    }

    /// Builds a schema from `(name, type)` pairs; panics on duplicate names.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, ColumnType)>) -> Self {
        Schema::new(pairs.into_iter().map(|(n, t)| Column::new(n, t)).collect())
            .expect("duplicate column name")
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Schema for `self` followed by `other`. Fails on name collisions.
    pub fn concat(&self, other: &Schema) -> Result<Schema, SchemaError> {
        let mut cols = self.columns.clone();
        cols.extend(other.columns.iter().cloned());
        Schema::new(cols)
    }

    pub fn push(&mut self, column: Column) -> Result<(), SchemaError> {
        if self.index_of(&column.name).is_some() {
            return Err(SchemaError::DuplicateColumn(column.name));
        }
        self.columns.push(column);
        Ok(())
    }
}
