//! Physical planning and execution.

mod aggregate;
mod executor;
mod grouping;
mod physical;
mod reference;

use thiserror::Error;

pub use aggregate::Accumulator;
pub use executor::{default_workers, Executor};
pub use grouping::{grouping_id, grouping_sets, DuplicateGroupColumn};
pub use physical::{compile_physical, BuildSide, CompileError, PhysicalAggregate, PhysicalPlan};
pub use reference::reference_interpret;

use crate::catalog::CatalogError;
use crate::expr::EvalError;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("{operator} failed: {source}")]
    Runtime {
        operator: &'static str,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("table `{0}` changed shape since the query was planned")]
    SchemaDrift(String),
    #[error("query cancelled")]
    Cancelled,
    #[error("worker count must be at least 1")]
    InvalidWorkers,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}
