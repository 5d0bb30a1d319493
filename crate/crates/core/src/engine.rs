//! Shared handle over a data directory: catalog, statistics, executor and
//! estimator registry. Readers work on snapshots, so queries never block
//! table registration.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::cancel::CancelToken;
use crate::catalog::{Catalog, CatalogEntry, CatalogError, TableProvider};
use crate::exec::{ExecError, Executor};
use crate::graph::{connected_components, relation_to_graph, shortest_paths, GraphError};
use crate::ml::Registry;
use crate::optimizer::{
    collect_stats, load_stats, save_stats, StatsIoError, StatsMap, TableStats,
    DEFAULT_SAMPLE_THRESHOLD,
};
use crate::orchestrator::{
    execute_pipeline, parse_db_config, parse_ml_config, ConfigError, Connection, DbConfig,
    LocalConnector, ParseOptions, PipelineConfig, PipelineContext, PipelineError, PipelineResult,
};
use crate::query::{explain, run_query, Explained, QueryError};
use crate::relation::Relation;
use crate::sql::{PlanError, SqlError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Stats(#[from] StatsIoError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("source node `{0}` is not a valid node value for this graph")]
    BadNode(String),
}

/// Coarse error classes for exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Invalid,
    Cancelled,
    Internal,
}

fn catalog_class(e: &CatalogError) -> ErrorClass {
    match e {
        CatalogError::UnknownTable(_) => ErrorClass::NotFound,
        CatalogError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            ErrorClass::NotFound
        }
        CatalogError::Manifest { .. } => ErrorClass::Internal,
        _ => ErrorClass::Invalid,
    }
}

fn exec_class(e: &ExecError) -> ErrorClass {
    match e {
        ExecError::Cancelled => ErrorClass::Cancelled,
        ExecError::Catalog(c) => catalog_class(c),
        ExecError::Runtime { .. } | ExecError::SchemaDrift(_) => ErrorClass::Invalid,
        _ => ErrorClass::Internal,
    }
}

fn query_class(e: &QueryError) -> ErrorClass {
    match e {
        QueryError::Sql(SqlError::Plan(PlanError::UnknownTable(_))) => ErrorClass::NotFound,
        QueryError::Sql(_) => ErrorClass::Invalid,
        QueryError::Exec(x) => exec_class(x),
        QueryError::Catalog(c) => catalog_class(c),
    }
}

impl EngineError {
    pub fn class(&self) -> ErrorClass {
        match self {
            EngineError::Catalog(c) => catalog_class(c),
            EngineError::Stats(_) => ErrorClass::Internal,
            EngineError::Query(q) => query_class(q),
            EngineError::Graph(_) | EngineError::Config(_) | EngineError::BadNode(_) => {
                ErrorClass::Invalid
            }
            EngineError::Exec(x) => exec_class(x),
            EngineError::Pipeline(p) => match p {
                PipelineError::Cancelled => ErrorClass::Cancelled,
                PipelineError::Relational(q) | PipelineError::TrainingQuery(q) => query_class(q),
                PipelineError::Connect(_) => ErrorClass::NotFound,
                _ => ErrorClass::Invalid,
            },
        }
    }

    /// Short machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Catalog(CatalogError::UnknownTable(_)) => "unknown_table",
            EngineError::Catalog(CatalogError::Conflict(_)) => "table_exists",
            EngineError::Catalog(_) => "catalog_error",
            EngineError::Stats(_) => "stats_error",
            EngineError::Query(QueryError::Sql(SqlError::Plan(PlanError::UnknownTable(_)))) => {
                "unknown_table"
            }
            EngineError::Query(QueryError::Sql(_)) => "sql_error",
            EngineError::Query(_) | EngineError::Exec(_) => match self.class() {
                ErrorClass::Cancelled => "cancelled",
                ErrorClass::NotFound => "unknown_table",
                ErrorClass::Invalid => "execution_error",
                _ => "internal_error",
            },
            EngineError::Graph(_) | EngineError::BadNode(_) => "graph_error",
            EngineError::Config(_) => "config_error",
            EngineError::Pipeline(PipelineError::Cancelled) => "cancelled",
            EngineError::Pipeline(_) => "pipeline_error",
        }
    }
}

pub struct Engine {
    data_dir: PathBuf,
    catalog: RwLock<Arc<Catalog>>,
    stats: RwLock<Arc<StatsMap>>,
    executor: Executor,
    registry: Registry,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("data_dir", &self.data_dir)
            .field("workers", &self.executor.workers())
            .finish()
    }
}

impl Engine {
    /// Opens the catalog and statistics in `data_dir`, creating the
    /// directory if needed.
    pub fn open(data_dir: impl Into<PathBuf>, workers: usize) -> Result<Self, EngineError> {
        let data_dir = data_dir.into();
        std::fs::create_dir_all(&data_dir).map_err(|source| CatalogError::Io {
            path: data_dir.clone(),
            source,
        })?;
        let catalog = Catalog::open(&data_dir)?;
        let stats = load_stats(&data_dir)?;
        Ok(Engine {
            data_dir,
            catalog: RwLock::new(Arc::new(catalog)),
            stats: RwLock::new(Arc::new(stats)),
            executor: Executor::new(workers)?,
            registry: Registry::default(),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn workers(&self) -> usize {
        self.executor.workers()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    pub fn catalog(&self) -> Arc<Catalog> {
        Arc::clone(&self.catalog.read().expect("catalog lock"))
    }

    pub fn stats(&self) -> Arc<StatsMap> {
        Arc::clone(&self.stats.read().expect("stats lock"))
    }

    pub fn list_tables(&self) -> Vec<CatalogEntry> {
        self.catalog().list_tables()
    }

    /// Registers a delimited file, inferring its schema, and saves the
    /// manifest.
    pub fn load_table(
        &self,
        name: &str,
        path: &Path,
        delimiter: char,
        has_header: bool,
    ) -> Result<CatalogEntry, EngineError> {
        let mut guard = self.catalog.write().expect("catalog lock");
        let mut next = Catalog::clone(&guard);
        let entry = next.load_table(name, path, delimiter, has_header)?.clone();
        next.save()?;
        *guard = Arc::new(next);
        Ok(entry)
    }

    /// Recomputes statistics for `table` and saves them.
    pub fn analyze(&self, table: &str) -> Result<TableStats, EngineError> {
        let rel = self.catalog().scan(table)?;
        let ts = collect_stats(&rel, DEFAULT_SAMPLE_THRESHOLD);
        let mut guard = self.stats.write().expect("stats lock");
        let mut next = StatsMap::clone(&guard);
        next.insert(table.to_string(), ts.clone());
        save_stats(&self.data_dir, &next)?;
        *guard = Arc::new(next);
        Ok(ts)
    }

    pub fn query(&self, sql: &str, cancel: &CancelToken) -> Result<Relation, EngineError> {
        let catalog = self.catalog();
        Ok(run_query(
            sql,
            catalog.as_ref(),
            &self.stats(),
            &self.executor,
            cancel,
        )?)
    }

    pub fn explain(&self, sql: &str) -> Result<Explained, EngineError> {
        Ok(explain(sql, self.catalog().as_ref(), &self.stats())?)
    }

    /// Shortest paths over the edge table `table`; `source` is parsed as a
    /// node of the graph's type.
    pub fn shortest_paths(
        &self,
        table: &str,
        src_col: &str,
        dst_col: &str,
        weight_col: Option<&str>,
        source: &str,
    ) -> Result<Relation, EngineError> {
        let rel = self.catalog().scan(table)?;
        let g = relation_to_graph(&rel, src_col, dst_col, weight_col)?;
        let node = g
            .parse_node(source)
            .ok_or_else(|| EngineError::BadNode(source.to_string()))?;
        Ok(shortest_paths(&g, &node)?)
    }

    pub fn connected_components(
        &self,
        table: &str,
        src_col: &str,
        dst_col: &str,
    ) -> Result<Relation, EngineError> {
        let rel = self.catalog().scan(table)?;
        let g = relation_to_graph(&rel, src_col, dst_col, None)?;
        Ok(connected_components(&g))
    }

    /// Parses both documents; the pipeline's inline database settings take
    /// precedence over the database document.
    pub fn parse_configs(
        &self,
        ml_xml: &str,
        db_xml: &str,
        opts: ParseOptions,
    ) -> Result<(PipelineConfig, DbConfig), EngineError> {
        let cfg = parse_ml_config(ml_xml, &self.registry, opts)?;
        let db = parse_db_config(db_xml, opts)?.overridden_by(&cfg.db);
        Ok((cfg, db))
    }

    /// Opens the database `db` names. Relative `local:` paths resolve
    /// against `base_dir`; a url naming this engine's own directory uses
    /// the live catalog and statistics.
    pub fn connect(&self, db: &DbConfig, base_dir: &Path) -> Result<Connection, EngineError> {
        let connector = LocalConnector::new(base_dir);
        let dir = connector.resolve(db)?;
        let same = match (dir.canonicalize(), self.data_dir.canonicalize()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
        if same {
            return Ok(Connection {
                tables: self.catalog() as Arc<dyn TableProvider>,
                stats: StatsMap::clone(&self.stats()),
            });
        }
        if !dir.is_dir() {
            return Err(
                PipelineError::Connect(format!("`{}` is not a directory", dir.display())).into(),
            );
        }
        Ok(crate::orchestrator::Connector::connect(&connector, db)?)
    }

    pub fn run_pipeline(
        &self,
        cfg: &PipelineConfig,
        db: &DbConfig,
        base_dir: &Path,
        cancel: &CancelToken,
    ) -> Result<PipelineResult, EngineError> {
        let conn = self.connect(db, base_dir)?;
        let cx = PipelineContext {
            executor: &self.executor,
            registry: &self.registry,
            cancel,
        };
        Ok(execute_pipeline(cfg, &conn, &cx)?)
    }
}
