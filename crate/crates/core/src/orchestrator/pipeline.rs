use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{check_scheme, ConfigError, DbConfig, Mode, PipelineConfig};
use crate::cancel::CancelToken;
use crate::catalog::{Catalog, CatalogError, TableProvider};
use crate::exec::{ExecError, Executor};
use crate::ml::{numeric_columns, relation_to_matrix, MlError, Registry};
use crate::optimizer::{load_stats, StatsIoError, StatsMap};
use crate::query::{run_query, QueryError};
use crate::relation::{Relation, Row};
use crate::types::{Column, Schema, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Branch {
    Relational,
    #[serde(rename = "ML")]
    Ml,
}

#[derive(Debug, Error)]
pub enum JoinError {
    #[error("no join keys given and the branch results share no column names")]
    NoCommonColumns,
    #[error("join key `{key}` is missing from the {side} result")]
    MissingKey { key: String, side: &'static str },
    #[error("join key `{key}` has type {left} on the relational side and {right} on the ML side")]
    KeyTypes {
        key: String,
        left: crate::types::ColumnType,
        right: crate::types::ColumnType,
    },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot open database: {0}")]
    Connect(String),
    #[error("relational branch: {0}")]
    Relational(QueryError),
    #[error("ML branch query: {0}")]
    TrainingQuery(QueryError),
    #[error("ML branch: {0}")]
    Ml(#[from] MlError),
    #[error("result join: {0}")]
    Join(#[from] JoinError),
    #[error("pipeline cancelled")]
    Cancelled,
}

fn is_cancel(e: &QueryError) -> bool {
    matches!(e, QueryError::Exec(ExecError::Cancelled))
}

/// Tables and statistics a pipeline runs against.
pub struct Connection {
    pub tables: Arc<dyn TableProvider>,
    pub stats: StatsMap,
}

/// Opens the database a [`DbConfig`] points at.
pub trait Connector: Send + Sync {
    fn connect(&self, db: &DbConfig) -> Result<Connection, PipelineError>;
}

/// `local:<dir>` urls: a catalog directory with its saved statistics.
pub struct LocalConnector {
    pub base_dir: PathBuf,
}

impl LocalConnector {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        LocalConnector {
            base_dir: base_dir.into(),
        }
    }

    pub fn resolve(&self, db: &DbConfig) -> Result<PathBuf, ConfigError> {
        check_scheme(&db.url)?;
        db.local_dir(&self.base_dir)
    }
}

fn open_local(dir: &Path) -> Result<Connection, PipelineError> {
    let catalog =
        Catalog::open(dir).map_err(|e: CatalogError| PipelineError::Connect(e.to_string()))?;
    let stats = load_stats(dir).map_err(|e: StatsIoError| PipelineError::Connect(e.to_string()))?;
    Ok(Connection {
        tables: Arc::new(catalog),
        stats,
    })
}

impl Connector for LocalConnector {
    fn connect(&self, db: &DbConfig) -> Result<Connection, PipelineError> {
        open_local(&self.resolve(db)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub result: Relation,
    pub branches_run: Vec<Branch>,
    pub timings: Vec<StageTiming>,
    pub model_summary: Option<serde_json::Value>,
}

pub struct PipelineContext<'a> {
    pub executor: &'a Executor,
    pub registry: &'a Registry,
    pub cancel: &'a CancelToken,
}

fn check(cancel: &CancelToken) -> Result<(), PipelineError> {
    if cancel.is_cancelled() {
        Err(PipelineError::Cancelled)
    } else {
        Ok(())
    }
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push(StageTiming {
        stage: stage.to_string(),
        ms: start.elapsed().as_secs_f64() * 1e3,
    });
    out
}

fn relational_branch(
    cfg: &PipelineConfig,
    conn: &Connection,
    cx: &PipelineContext,
) -> Result<Relation, PipelineError> {
    run_query(
        cfg.primary_sql(),
        conn.tables.as_ref(),
        &conn.stats,
        cx.executor,
        cx.cancel,
    )
    .map_err(|e| {
        if is_cancel(&e) {
            PipelineError::Cancelled
        } else {
            PipelineError::Relational(e)
        }
    })
}

struct MlOutput {
    predictions: Relation,
    model: serde_json::Value,
}

fn ml_branch(
    cfg: &PipelineConfig,
    conn: &Connection,
    cx: &PipelineContext,
) -> Result<MlOutput, PipelineError> {
    let training = run_query(
        &cfg.input_sql,
        conn.tables.as_ref(),
        &conn.stats,
        cx.executor,
        cx.cancel,
    )
    .map_err(|e| {
        if is_cancel(&e) {
            PipelineError::Cancelled
        } else {
            PipelineError::TrainingQuery(e)
        }
    })?;
    check(cx.cancel)?;
    let features = if cfg.feature_cols.is_empty() {
        numeric_columns(&training, cfg.label_col.as_deref())
    } else {
        cfg.feature_cols.clone()
    };
    let (m, labels) = relation_to_matrix(&training, &features, cfg.label_col.as_deref())?;
    let model = cx
        .registry
        .fit(&cfg.algorithm, &m, labels.as_deref(), &cfg.parameters)?;
    check(cx.cancel)?;
    Ok(MlOutput {
        predictions: model.predict(&m)?,
        model: model.to_json(),
    })
}

/// Runs the relational branch, then the ML branch when the mode asks for
/// it: in Fallback mode only if the relational result is empty, in Fuse
/// mode always (concurrently) followed by a join of both results.
pub fn execute_pipeline(
    cfg: &PipelineConfig,
    conn: &Connection,
    cx: &PipelineContext,
) -> Result<PipelineResult, PipelineError> {
    let mut timings = Vec::new();
    check(cx.cancel)?;
    match cfg.mode {
        Mode::Fallback => {
            let rel = timed(&mut timings, "relational", || {
                relational_branch(cfg, conn, cx)
            })?;
            if !rel.is_empty() {
                return Ok(PipelineResult {
                    result: rel,
                    branches_run: vec![Branch::Relational],
                    timings,
                    model_summary: None,
                });
            }
            check(cx.cancel)?;
            let ml = timed(&mut timings, "ml", || ml_branch(cfg, conn, cx))?;
            Ok(PipelineResult {
                result: ml.predictions,
                branches_run: vec![Branch::Relational, Branch::Ml],
                timings,
                model_summary: Some(ml.model),
            })
        }
        Mode::Fuse => {
            let ((rel, rel_ms), (ml, ml_ms)) = std::thread::scope(|s| {
                let ml = s.spawn(|| {
                    let start = Instant::now();
                    (ml_branch(cfg, conn, cx), start.elapsed())
                });
                let start = Instant::now();
                let rel = relational_branch(cfg, conn, cx);
                let rel_ms = start.elapsed();
                ((rel, rel_ms), ml.join().expect("ML branch thread panicked"))
            });
            timings.push(StageTiming {
                stage: "relational".into(),
                ms: rel_ms.as_secs_f64() * 1e3,
            });
            timings.push(StageTiming {
                stage: "ml".into(),
                ms: ml_ms.as_secs_f64() * 1e3,
            });
            let (rel, ml) = (rel?, ml?);
            check(cx.cancel)?;
            let joined = timed(&mut timings, "join", || {
                join_results(&rel, &ml.predictions, &cfg.join_keys)
            })?;
            Ok(PipelineResult {
                result: joined,
                branches_run: vec![Branch::Relational, Branch::Ml],
                timings,
                model_summary: Some(ml.model),
            })
        }
    }
}

/// Inner equi-join: relational columns, then ML columns other than the
/// keys. Empty `keys` means every column name the two sides share. NULL
/// keys never match. Non-key ML columns whose name is already taken get an
/// `ml_` prefix.
pub fn join_results(
    relational: &Relation,
    ml: &Relation,
    keys: &[String],
) -> Result<Relation, JoinError> {
    let (ls, rs) = (relational.schema(), ml.schema());
    let keys: Vec<String> = if keys.is_empty() {
        ls.columns()
            .iter()
            .filter(|c| rs.index_of(&c.name).is_some())
            .map(|c| c.name.clone())
            .collect()
    } else {
        keys.to_vec()
    };
    if keys.is_empty() {
        return Err(JoinError::NoCommonColumns);
    }
    let mut lk = Vec::new();
    let mut rk = Vec::new();
    let mut widen = Vec::new();
    for key in &keys {
        let li = ls.index_of(key).ok_or_else(|| JoinError::MissingKey {
            key: key.clone(),
            side: "relational",
        })?;
        let ri = rs.index_of(key).ok_or_else(|| JoinError::MissingKey {
            key: key.clone(),
            side: "ML",
        })?;
        let (lt, rt) = (ls.columns()[li].ty, rs.columns()[ri].ty);
        let numeric = lt.is_numeric() && rt.is_numeric();
        if lt != rt && !numeric {
            return Err(JoinError::KeyTypes {
                key: key.clone(),
                left: lt,
                right: rt,
            });
        }
        lk.push(li);
        rk.push(ri);
        widen.push(lt != rt);
    }
    let key_of = |row: &Row, idx: &[usize]| -> Option<Vec<Value>> {
        idx.iter()
            .zip(&widen)
            .map(|(&i, &w)| match &row[i] {
                Value::Null => None,
                v if w => Some(v.widen_to_f64()),
                v => Some(v.clone()),
            })
            .collect()
    };

    let kept: Vec<usize> = (0..rs.len()).filter(|i| !rk.contains(i)).collect();
    let mut columns: Vec<Column> = ls.columns().to_vec();
    for &i in &kept {
        let mut c = rs.columns()[i].clone();
        while columns.iter().any(|x| x.name == c.name) {
            c.name = format!("ml_{}", c.name);
        }
        columns.push(c);
    }
    let schema = Schema::new(columns).expect("names made unique");

    let mut index: HashMap<Vec<Value>, Vec<&Row>> = HashMap::new();
    for row in ml.rows() {
        if let Some(k) = key_of(row, &rk) {
            index.entry(k).or_default().push(row);
        }
    }
    let mut rows = Vec::new();
    for l in relational.rows() {
        let Some(k) = key_of(l, &lk) else { continue };
        for r in index.get(&k).into_iter().flatten() {
            rows.push(
                l.iter()
                    .cloned()
                    .chain(kept.iter().map(|&i| r[i].clone()))
                    .collect(),
            );
        }
    }
    Ok(Relation::from_partitions_unchecked(schema, vec![rows]))
}
