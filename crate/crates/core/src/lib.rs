//! Hybrid analytical engine: relational queries, model training and graph
//! analytics over a shared catalog of delimited-text tables.

pub mod cancel;
pub mod catalog;
pub mod engine;
pub mod exec;
pub mod export;
pub mod expr;
pub mod graph;
pub mod ml;
pub mod numeric;
pub mod optimizer;
pub mod orchestrator;
pub mod query;
pub mod relation;
pub mod sql;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod types;

pub use cancel::CancelToken;
pub use catalog::{Catalog, CatalogEntry, CatalogError, TableProvider};
pub use engine::{Engine, EngineError, ErrorClass};
pub use relation::{Relation, Row};
pub use types::{Column, ColumnType, Schema, Value};
