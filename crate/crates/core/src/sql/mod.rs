//! Query language: lexing, parsing, printing and planning.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod plan;
pub mod planner;

use std::fmt;

use thiserror::Error;

pub use ast::{GroupBy, GroupingMode, JoinClause, OrderItem, Query, SelectItem, TableRef};
pub use parser::parse_sql;
pub use plan::{AggregateCall, Field, LogicalPlan, PlanSchema, SortKey, GROUPING_ID};
pub use planner::{plan_query, PlanError};

use crate::catalog::TableProvider;

/// A lexing or parsing failure with its 1-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    /// Text of the offending token.
    pub token: String,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "syntax error at {}:{} near `{}`: {}",
            self.line, self.column, self.token, self.message
        )
    }
}

impl std::error::Error for SyntaxError {}

#[derive(Debug, Error)]
pub enum SqlError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Parses and plans `text` in one step.
pub fn plan_sql(text: &str, provider: &dyn TableProvider) -> Result<LogicalPlan, SqlError> {
    let q = parse_sql(text)?;
    Ok(plan_query(&q, provider)?)
}
