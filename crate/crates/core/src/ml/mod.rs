//! Estimators over relations: k-means clustering and logistic regression,
//! plus a name-based registry used by pipelines.

mod kmeans;
mod logreg;
mod registry;

use thiserror::Error;

pub use kmeans::{
    assign_cluster, kmeans_predict, kmeans_train, kmeans_train_from, KMeansModel, KMeansParams,
};
pub use logreg::{
    logreg_loss_grad, logreg_predict, logreg_train, sigmoid, LogRegModel, LogRegParams, LOGIT_CLAMP,
};
pub use registry::{Estimator, Fitted, ParamKind, ParamSpec, Registry};

use crate::relation::{Relation, Row};
use crate::types::{Column, ColumnType, Schema, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("feature column `{column}` has type {ty}; features must be Int64 or Float64")]
    NotNumeric { column: String, ty: ColumnType },
    #[error("row {row} has a NULL in column `{column}`")]
    NullValue { row: usize, column: String },
    #[error("label column `{column}` must be Bool or Int64 0/1, found {found} in row {row}")]
    BadLabel {
        column: String,
        row: usize,
        found: String,
    },
    #[error("no feature columns selected")]
    NoFeatures,
    #[error("training input is empty")]
    EmptyInput,
    #[error("k must be between 1 and the number of rows ({n}), got {k}")]
    InvalidK { k: usize, n: usize },
    #[error("model expects {expected} features, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch} (non-finite loss); lower the learning rate")]
    Divergence { epoch: usize },
    #[error("{algorithm} requires a label column")]
    LabelRequired { algorithm: String },
    #[error("output column `{0}` already exists in the input")]
    OutputColumnExists(String),
    #[error("unknown algorithm `{name}`; available: {available}")]
    UnknownAlgorithm { name: String, available: String },
    #[error("{algorithm} takes at most {max} parameters, got {got}")]
    TooManyParameters {
        algorithm: String,
        max: usize,
        got: usize,
    },
    #[error("parameter {name} of {algorithm}: `{value}` is not a valid {expected}")]
    BadParameter {
        algorithm: String,
        name: String,
        value: String,
        expected: &'static str,
    },
}

/// Dense row-major feature values with the rows they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    source: Relation,
}

impl FeatureMatrix {
    /// Builds a matrix directly from rows of equal length; the source
    /// relation gets Float64 columns `x0..`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MlError> {
        let n = rows.len();
        if n == 0 {
            return Err(MlError::EmptyInput);
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(MlError::NoFeatures);
        }
        let mut values = Vec::with_capacity(n * d);
        for r in rows {
            if r.len() != d {
                return Err(MlError::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        let schema = Schema::new(
            (0..d)
                .map(|j| Column::new(format!("x{j}"), ColumnType::Float64))
                .collect(),
        )
        .expect("distinct names");
        let source_rows = rows
            .iter()
            .map(|r| r.iter().map(|&v| Value::Float64(v)).collect())
            .collect();
        let source = Relation::from_partitions_unchecked(schema, vec![source_rows]);
        Ok(FeatureMatrix {
            n,
            d,
            values,
            source,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.d)
    }

    /// The originating relation, one row per matrix row, in order.
    pub fn source(&self) -> &Relation {
        &self.source
    }

    /// Rows of the source relation extended with `extra` columns.
    pub(crate) fn extend_source(
        &self,
        columns: &[(&str, ColumnType)],
        values: impl Iterator<Item = Vec<Value>>,
    ) -> Result<Relation, MlError> {
        let mut schema = self.source.schema().clone();
        for (name, ty) in columns {
            schema
                .push(Column::new(*name, *ty))
                .map_err(|_| MlError::OutputColumnExists(name.to_string()))?;
        }
        let rows: Vec<Row> = self
            .source
            .rows()
            .zip(values)
            .map(|(r, extra)| r.iter().cloned().chain(extra).collect())
            .collect();
        Ok(Relation::from_partitions_unchecked(schema, vec![rows]))
    }
}

/// Numeric columns of `r`, excluding `exclude`, in schema order.
pub fn numeric_columns(r: &Relation, exclude: Option<&str>) -> Vec<String> {
    r.schema()
        .columns()
        .iter()
        .filter(|c| c.ty.is_numeric() && Some(c.name.as_str()) != exclude)
        .map(|c| c.name.clone())
        .collect()
}

/// Extracts features (Int64 widened to Float64) and an optional 0/1 label
/// vector. Any NULL in a selected column is an error naming the row.
pub fn relation_to_matrix(
    r: &Relation,
    feature_cols: &[String],
    label_col: Option<&str>,
) -> Result<(FeatureMatrix, Option<Vec<f64>>), MlError> {
    if feature_cols.is_empty() {
        return Err(MlError::NoFeatures);
    }
    let schema = r.schema();
    let mut idx = Vec::with_capacity(feature_cols.len());
    for name in feature_cols {
        let i = schema
            .index_of(name)
            .ok_or_else(|| MlError::UnknownColumn(name.clone()))?;
        let ty = schema.columns()[i].ty;
        if !ty.is_numeric() {
            return Err(MlError::NotNumeric {
                column: name.clone(),
                ty,
            });
        }
        idx.push(i);
    }
    let label_idx = label_col
        .map(|l| {
            schema
                .index_of(l)
                .ok_or_else(|| MlError::UnknownColumn(l.to_string()))
        })
        .transpose()?;
    if r.is_empty() {
        return Err(MlError::EmptyInput);
    }
    let d = idx.len();
    let mut values = Vec::with_capacity(r.num_rows() * d);
    let mut labels = label_idx.map(|_| Vec::with_capacity(r.num_rows()));
    for (row_no, row) in r.rows().enumerate() {
        for (&i, name) in idx.iter().zip(feature_cols) {
            let v = row[i].as_f64().ok_or_else(|| MlError::NullValue {
                row: row_no,
                column: name.clone(),
            })?;
            values.push(v);
        }
        if let (Some(li), Some(out)) = (label_idx, labels.as_mut()) {
            let name = label_col.expect("label index implies name");
            let y = match &row[li] {
                Value::Bool(b) => f64::from(u8::from(*b)),
                Value::Int64(0) => 0.0,
                Value::Int64(1) => 1.0,
                Value::Null => {
                    return Err(MlError::NullValue {
                        row: row_no,
                        column: name.to_string(),
                    })
                }
                other => {
                    return Err(MlError::BadLabel {
                        column: name.to_string(),
                        row: row_no,
                        found: other.to_sql_literal(),
                    })
                }
            };
            out.push(y);
        }
    }
    let source = Relation::from_partitions_unchecked(r.schema().clone(), vec![r.to_rows()]);
    Ok((
        FeatureMatrix {
            n: r.num_rows(),
            d,
            values,
            source,
        },
        labels,
    ))
}
