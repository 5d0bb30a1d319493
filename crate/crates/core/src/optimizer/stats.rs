//! Per-table statistics: exact below a size threshold, sampled above it.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::reservoir;
use crate::relation::{Relation, Row};
use crate::types::{Schema, Value};

pub const DEFAULT_SAMPLE_THRESHOLD: usize = 10_000;
pub const STATS_FILE: &str = "stats.json";
const SAMPLE_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub ndv_estimate: f64,
    /// Smallest non-null value, `Null` when the column has none.
    pub min: Value,
    pub max: Value,
    pub null_count: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TableStats {
    pub row_count: u64,
    pub columns: BTreeMap<String, ColumnStats>,
}

/// Stats for several tables, persisted as `stats.json`.
pub type StatsMap = BTreeMap<String, TableStats>;

/// Chao84 distinct-count estimate from a sample's frequency counts.
pub fn chao84(distinct: u64, f1: u64, f2: u64) -> f64 {
    let (d, f1, f2) = (distinct as f64, f1 as f64, f2 as f64);
    if f2 > 0.0 {
        d + f1 * f1 / (2.0 * f2)
    } else {
        d + f1 * (f1 - 1.0) / 2.0
    }
}

/// Mergeable single-column summary over part of a relation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartialColumn {
    pub min: Option<Value>,
    pub max: Option<Value>,
    pub null_count: u64,
    /// Value frequencies, kept only on the exact path.
    pub counts: Option<HashMap<Value, u64>>,
}

/// Mergeable summary of a set of rows. [`PartialStats::merge`] is
/// associative and commutative, so partitions can be summarised in any
/// order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartialStats {
    pub rows: u64,
    pub columns: Vec<PartialColumn>,
}

impl PartialStats {
    pub fn from_rows<'a>(
        width: usize,
        rows: impl IntoIterator<Item = &'a Row>,
        keep_counts: bool,
    ) -> Self {
        let mut columns: Vec<PartialColumn> = (0..width)
            .map(|_| PartialColumn {
                counts: keep_counts.then(HashMap::new),
                ..Default::default()
            })
            .collect();
        let mut n = 0;
        for row in rows {
            n += 1;
            for (c, v) in columns.iter_mut().zip(row) {
                if v.is_null() {
                    c.null_count += 1;
                    continue;
                }
                if c.min.as_ref().is_none_or(|m| v.total_cmp(m).is_lt()) {
                    c.min = Some(v.clone());
                }
                if c.max.as_ref().is_none_or(|m| v.total_cmp(m).is_gt()) {
                    c.max = Some(v.clone());
                }
                if let Some(counts) = &mut c.counts {
                    *counts.entry(v.clone()).or_default() += 1;
                }
            }
        }
        PartialStats { rows: n, columns }
    }

    pub fn merge(mut self, other: PartialStats) -> PartialStats {
        self.rows += other.rows;
        for (a, b) in self.columns.iter_mut().zip(other.columns) {
            a.null_count += b.null_count;
            a.min = match (a.min.take(), b.min) {
                (Some(x), Some(y)) => Some(if y.total_cmp(&x).is_lt() { y } else { x }),
                (x, y) => x.or(y),
            };
            a.max = match (a.max.take(), b.max) {
                (Some(x), Some(y)) => Some(if y.total_cmp(&x).is_gt() { y } else { x }),
                (x, y) => x.or(y),
            };
            a.counts = match (a.counts.take(), b.counts) {
                (Some(mut x), Some(y)) => {
                    for (v, n) in y {
                        *x.entry(v).or_default() += n;
                    }
                    Some(x)
                }
                _ => None,
            };
        }
        self
    }
}

fn clamp_ndv(ndv: f64, non_null: u64) -> f64 {
    ndv.min(non_null as f64).max(1.0)
}

fn finish(schema: &Schema, partial: PartialStats, sample: Option<&[Row]>) -> TableStats {
    let mut columns = BTreeMap::new();
    for (i, (col, p)) in schema.columns().iter().zip(partial.columns).enumerate() {
        let non_null = partial.rows - p.null_count;
        let ndv = match (&p.counts, sample) {
            (Some(counts), _) => counts.len() as f64,
            (None, Some(sample)) => {
                let mut freq: HashMap<&Value, u64> = HashMap::new();
                for row in sample {
                    if !row[i].is_null() {
                        *freq.entry(&row[i]).or_default() += 1;
                    }
                }
                let f1 = freq.values().filter(|&&n| n == 1).count() as u64;
                let f2 = freq.values().filter(|&&n| n == 2).count() as u64;
                chao84(freq.len() as u64, f1, f2)
            }
            (None, None) => non_null as f64,
        };
        columns.insert(
            col.name.clone(),
            ColumnStats {
                ndv_estimate: clamp_ndv(ndv, non_null),
                min: p.min.unwrap_or(Value::Null),
                max: p.max.unwrap_or(Value::Null),
                null_count: p.null_count,
            },
        );
    }
    TableStats {
        row_count: partial.rows,
        columns,
    }
}

/// Computes table statistics. Up to `sample_threshold` rows everything is
/// exact; above it min, max and null counts still come from a full pass but
/// the distinct count is a Chao84 estimate over a reservoir sample of
/// `sample_threshold` rows.
pub fn collect_stats(r: &Relation, sample_threshold: usize) -> TableStats {
    collect_stats_seeded(r, sample_threshold, SAMPLE_SEED)
}

/// [`collect_stats`] with an explicit seed for the reservoir sample.
pub fn collect_stats_seeded(r: &Relation, sample_threshold: usize, seed: u64) -> TableStats {
    let threshold = sample_threshold.max(1);
    let exact = r.num_rows() <= threshold;
    let width = r.schema().len();
    let partial = r
        .partitions()
        .par_iter()
        .map(|p| PartialStats::from_rows(width, p, exact))
        .reduce(
            || PartialStats::from_rows(width, std::iter::empty(), exact),
            PartialStats::merge,
        );
    if exact {
        finish(r.schema(), partial, None)
    } else {
        let sample = reservoir(r.rows(), threshold, seed);
        finish(r.schema(), partial, Some(&sample))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StatsIoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed stats file {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Reads `stats.json` from `dir`; a missing file is an empty map.
pub fn load_stats(dir: &Path) -> Result<StatsMap, StatsIoError> {
    let path = dir.join(STATS_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(StatsMap::new()),
        Err(source) => {
            return Err(StatsIoError::Io {
                path: path.display().to_string(),
                source,
            })
        }
    };
    serde_json::from_str(&text).map_err(|source| StatsIoError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_stats(dir: &Path, stats: &StatsMap) -> Result<(), StatsIoError> {
    let path = dir.join(STATS_FILE);
    let text = serde_json::to_string_pretty(stats).expect("stats serialize");
    fs::write(&path, text).map_err(|source| StatsIoError::Io {
        path: path.display().to_string(),
        source,
    })
}
