//! Physical operator trees compiled from logical plans.

use std::fmt;

use thiserror::Error;

use super::grouping::{grouping_sets, DuplicateGroupColumn};
use crate::expr::{AggFunc, BoundExpr, EvalError, Expr};
use crate::optimizer::{estimate_cardinality, StatsMap};
use crate::sql::plan::SchemaCheckError;
use crate::sql::{LogicalPlan, PlanSchema};
use crate::types::ColumnType;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuildSide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalAggregate {
    pub func: AggFunc,
    /// `None` for `COUNT(*)`.
    pub arg: Option<BoundExpr>,
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhysicalPlan {
    TableScan {
        table: String,
        schema: PlanSchema,
    },
    Filter {
        input: Box<PhysicalPlan>,
        predicate: BoundExpr,
    },
    Project {
        input: Box<PhysicalPlan>,
        exprs: Vec<BoundExpr>,
        schema: PlanSchema,
    },
    HashJoin {
        left: Box<PhysicalPlan>,
        right: Box<PhysicalPlan>,
        left_keys: Vec<usize>,
        right_keys: Vec<usize>,
        build: BuildSide,
        schema: PlanSchema,
    },
    HashAggregate {
        input: Box<PhysicalPlan>,
        /// Input positions of the GROUP BY columns.
        group_cols: Vec<usize>,
        /// Grouping sets as positions into `group_cols`.
        sets: Vec<Vec<usize>>,
        aggregates: Vec<PhysicalAggregate>,
        schema: PlanSchema,
    },
    Sort {
        input: Box<PhysicalPlan>,
        /// `(position, descending)`.
        keys: Vec<(usize, bool)>,
    },
    Limit {
        input: Box<PhysicalPlan>,
        n: u64,
    },
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("invalid plan: {0}")]
    Schema(#[from] SchemaCheckError),
    #[error("invalid plan: {0}")]
    Bind(#[from] EvalError),
    #[error(transparent)]
    Grouping(#[from] DuplicateGroupColumn),
}

impl PhysicalPlan {
    pub fn schema(&self) -> PlanSchema {
        match self {
            PhysicalPlan::TableScan { schema, .. }
            | PhysicalPlan::Project { schema, .. }
            | PhysicalPlan::HashJoin { schema, .. }
            | PhysicalPlan::HashAggregate { schema, .. } => schema.clone(),
            PhysicalPlan::Filter { input, .. }
            | PhysicalPlan::Sort { input, .. }
            | PhysicalPlan::Limit { input, .. } => input.schema(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PhysicalPlan::TableScan { .. } => "TableScan",
            PhysicalPlan::Filter { .. } => "FilterExec",
            PhysicalPlan::Project { .. } => "ProjectExec",
            PhysicalPlan::HashJoin { .. } => "HashJoinExec",
            PhysicalPlan::HashAggregate { .. } => "HashAggregateExec",
            PhysicalPlan::Sort { .. } => "SortExec",
            PhysicalPlan::Limit { .. } => "LimitExec",
        }
    }

    pub fn children(&self) -> Vec<&PhysicalPlan> {
        match self {
            PhysicalPlan::TableScan { .. } => vec![],
            PhysicalPlan::Filter { input, .. }
            | PhysicalPlan::Project { input, .. }
            | PhysicalPlan::HashAggregate { input, .. }
            | PhysicalPlan::Sort { input, .. }
            | PhysicalPlan::Limit { input, .. } => vec![input],
            PhysicalPlan::HashJoin { left, right, .. } => vec![left, right],
        }
    }

    fn fmt_indented(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        write!(f, "{:indent$}{}", "", self.name(), indent = depth * 2)?;
        match self {
            PhysicalPlan::TableScan { table, .. } => write!(f, " {table}")?,
            PhysicalPlan::HashJoin { build, .. } => write!(f, " build={build:?}")?,
            PhysicalPlan::HashAggregate { sets, .. } => write!(f, " sets={sets:?}")?,
            PhysicalPlan::Limit { n, .. } => write!(f, " {n}")?,
            _ => {}
        }
        writeln!(f)?;
        for c in self.children() {
            c.fmt_indented(f, depth + 1)?;
        }
        Ok(())
    }
}

impl fmt::Display for PhysicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indented(f, 0)
    }
}

fn bind(e: &Expr, schema: &PlanSchema) -> Result<BoundExpr, CompileError> {
    e.bind(&mut |c| position(schema, c))
}

fn position(schema: &PlanSchema, c: &crate::expr::ColumnRef) -> Result<usize, CompileError> {
    schema
        .index_of(c)
        .ok_or_else(|| EvalError::UnresolvedColumn(c.to_string()).into())
}

/// Maps each logical operator to its physical counterpart. The hash-join
/// build side is the input with the smaller estimated cardinality, the
/// left one on ties or when estimates are unavailable.
pub fn compile_physical(
    plan: &LogicalPlan,
    stats: &StatsMap,
) -> Result<PhysicalPlan, CompileError> {
    let schema = plan.try_schema()?;
    Ok(match plan {
        LogicalPlan::Scan { table, .. } => PhysicalPlan::TableScan {
            table: table.clone(),
            schema,
        },
        LogicalPlan::Filter { input, predicate } => PhysicalPlan::Filter {
            predicate: bind(predicate, &input.try_schema()?)?,
            input: Box::new(compile_physical(input, stats)?),
        },
        LogicalPlan::Project { input, exprs, .. } => {
            let in_schema = input.try_schema()?;
            PhysicalPlan::Project {
                exprs: exprs
                    .iter()
                    .map(|e| bind(e, &in_schema))
                    .collect::<Result<_, _>>()?,
                input: Box::new(compile_physical(input, stats)?),
                schema,
            }
        }
        LogicalPlan::Join { left, right, on } => {
            let (ls, rs) = (left.try_schema()?, right.try_schema()?);
            let left_keys = on
                .iter()
                .map(|(a, _)| position(&ls, a))
                .collect::<Result<_, _>>()?;
            let right_keys = on
                .iter()
                .map(|(_, b)| position(&rs, b))
                .collect::<Result<_, _>>()?;
            let build = match (
                estimate_cardinality(left, stats),
                estimate_cardinality(right, stats),
            ) {
                (Ok(l), Ok(r)) if r < l => BuildSide::Right,
                _ => BuildSide::Left,
            };
            PhysicalPlan::HashJoin {
                left: Box::new(compile_physical(left, stats)?),
                right: Box::new(compile_physical(right, stats)?),
                left_keys,
                right_keys,
                build,
                schema,
            }
        }
        LogicalPlan::Aggregate {
            input,
            group_by,
            mode,
            aggregates,
        } => {
            let in_schema = input.try_schema()?;
            let group_cols = group_by
                .iter()
                .map(|c| position(&in_schema, c))
                .collect::<Result<Vec<_>, _>>()?;
            let sets = grouping_sets(group_by, *mode)?;
            let aggs = aggregates
                .iter()
                .zip(&schema.fields[group_by.len()..])
                .map(|(a, field)| {
                    Ok(PhysicalAggregate {
                        func: a.func,
                        arg: a.arg.as_ref().map(|e| bind(e, &in_schema)).transpose()?,
                        ty: field.ty,
                    })
                })
                .collect::<Result<_, CompileError>>()?;
            PhysicalPlan::HashAggregate {
                input: Box::new(compile_physical(input, stats)?),
                group_cols,
                sets,
                aggregates: aggs,
                schema,
            }
        }
        LogicalPlan::Sort { input, keys } => PhysicalPlan::Sort {
            keys: keys
                .iter()
                .map(|k| Ok((position(&schema, &k.column)?, k.descending)))
                .collect::<Result<_, CompileError>>()?,
            input: Box::new(compile_physical(input, stats)?),
        },
        LogicalPlan::Limit { input, n } => PhysicalPlan::Limit {
            input: Box::new(compile_physical(input, stats)?),
            n: *n,
        },
    })
}
