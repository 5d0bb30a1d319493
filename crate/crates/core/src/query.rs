//! The full relational path: parse, plan, optimize, compile, execute.

use std::borrow::Cow;

use thiserror::Error;

use crate::cancel::CancelToken;
use crate::catalog::{CatalogError, TableProvider};
use crate::exec::{compile_physical, ExecError, Executor, PhysicalPlan};
use crate::optimizer::{collect_stats, optimize, StatsMap, DEFAULT_SAMPLE_THRESHOLD};
use crate::relation::Relation;
use crate::sql::{plan_sql, LogicalPlan, SqlError};

#[derive(Debug, Error)]
pub enum QueryError {
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// The plans a query goes through.
#[derive(Debug, Clone)]
pub struct Explained {
    pub logical: LogicalPlan,
    pub optimized: LogicalPlan,
    pub physical: PhysicalPlan,
}

/// `stats` extended with freshly collected statistics for any table the
/// plan scans that has none yet. Nothing is persisted.
pub fn stats_for_plan<'a>(
    plan: &LogicalPlan,
    tables: &dyn TableProvider,
    stats: &'a StatsMap,
) -> Result<Cow<'a, StatsMap>, CatalogError> {
    let mut out = Cow::Borrowed(stats);
    for (table, _) in plan.scans() {
        if !out.contains_key(table) {
            let rel = tables.scan(table)?;
            out.to_mut().insert(
                table.to_string(),
                collect_stats(&rel, DEFAULT_SAMPLE_THRESHOLD),
            );
        }
    }
    Ok(out)
}

pub fn explain(
    sql: &str,
    tables: &dyn TableProvider,
    stats: &StatsMap,
) -> Result<Explained, QueryError> {
    let logical = plan_sql(sql, tables)?;
    let stats = stats_for_plan(&logical, tables, stats)?;
    let optimized = optimize(&logical, &stats);
    let physical = compile_physical(&optimized, &stats).map_err(ExecError::from)?;
    Ok(Explained {
        logical,
        optimized,
        physical,
    })
}

pub fn run_query(
    sql: &str,
    tables: &dyn TableProvider,
    stats: &StatsMap,
    executor: &Executor,
    cancel: &CancelToken,
) -> Result<Relation, QueryError> {
    let plans = explain(sql, tables, stats)?;
    Ok(executor.execute_with_cancel(&plans.physical, tables, cancel)?)
}
