//! Cardinality estimation and the cost model.
//!
//! Predicates are assumed independent and values uniformly spread between
//! a column's min and max. Plan cost is the sum of the estimated
//! cardinalities of every node.

use thiserror::Error;

use super::stats::{ColumnStats, StatsMap};
use crate::exec::grouping_sets;
use crate::expr::{BinaryOp, ColumnRef, Expr, UnaryOp};
use crate::numeric::ExactSum;
use crate::sql::LogicalPlan;
use crate::types::Value;

/// Equality selectivity when the column has no statistics.
pub const DEFAULT_EQ_SELECTIVITY: f64 = 0.1;
/// Selectivity of range and opaque predicates without usable statistics.
pub const DEFAULT_RANGE_SELECTIVITY: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CardinalityError {
    #[error("no statistics for table `{0}`; run analyze first")]
    MissingStats(String),
}

/// Statistics of the base column that `c` (a column of `plan`'s output)
/// carries through unchanged, if any.
pub fn column_lineage<'s>(
    plan: &LogicalPlan,
    c: &ColumnRef,
    stats: &'s StatsMap,
) -> Option<&'s ColumnStats> {
    match plan {
        LogicalPlan::Scan { table, alias, .. } => {
            if c.qualifier.as_deref() != Some(alias.as_str()) {
                return None;
            }
            stats.get(table)?.columns.get(&c.name)
        }
        LogicalPlan::Filter { input, .. }
        | LogicalPlan::Sort { input, .. }
        | LogicalPlan::Limit { input, .. } => column_lineage(input, c, stats),
        LogicalPlan::Join { left, right, .. } => {
            if left.try_schema().ok()?.index_of(c).is_some() {
                column_lineage(left, c, stats)
            } else {
                column_lineage(right, c, stats)
            }
        }
        LogicalPlan::Project {
            input,
            exprs,
            aliases,
        } => {
            let pos = aliases.iter().position(|a| a == c)?;
            match &exprs[pos] {
                Expr::Column(inner) => column_lineage(input, inner, stats),
                _ => None,
            }
        }
        LogicalPlan::Aggregate {
            input, group_by, ..
        } => {
            if group_by.contains(c) {
                column_lineage(input, c, stats)
            } else {
                None
            }
        }
    }
}

fn ndv(plan: &LogicalPlan, c: &ColumnRef, stats: &StatsMap) -> Option<f64> {
    column_lineage(plan, c, stats).map(|s| s.ndv_estimate.max(1.0))
}

/// Fraction of `input`'s rows expected to satisfy `pred`, in `[0, 1]`.
pub fn selectivity(pred: &Expr, input: &LogicalPlan, stats: &StatsMap) -> f64 {
    let s = match pred {
        Expr::Literal(Value::Bool(true)) => 1.0,
        Expr::Literal(_) => 0.0,
        Expr::Unary {
            op: UnaryOp::Not,
            expr,
        } => 1.0 - selectivity(expr, input, stats),
        Expr::Binary {
            op: BinaryOp::And,
            left,
            right,
        } => selectivity(left, input, stats) * selectivity(right, input, stats),
        Expr::Binary {
            op: BinaryOp::Or,
            left,
            right,
        } => {
            let (a, b) = (
                selectivity(left, input, stats),
                selectivity(right, input, stats),
            );
            a + b - a * b
        }
        Expr::Binary { op, left, right } if op.is_comparison() => {
            match (left.as_ref(), right.as_ref()) {
                (Expr::Column(c), Expr::Literal(v)) => {
                    compare_selectivity(column_lineage(input, c, stats), *op, v)
                }
                (Expr::Literal(v), Expr::Column(c)) => {
                    compare_selectivity(column_lineage(input, c, stats), op.flip(), v)
                }
                (Expr::Column(a), Expr::Column(b)) if *op == BinaryOp::Eq => {
                    match (ndv(input, a, stats), ndv(input, b, stats)) {
                        (None, None) => DEFAULT_EQ_SELECTIVITY,
                        (x, y) => 1.0 / x.unwrap_or(1.0).max(y.unwrap_or(1.0)),
                    }
                }
                _ => DEFAULT_RANGE_SELECTIVITY,
            }
        }
        _ => DEFAULT_RANGE_SELECTIVITY,
    };
    s.clamp(0.0, 1.0)
}

fn compare_selectivity(stats: Option<&ColumnStats>, op: BinaryOp, v: &Value) -> f64 {
    if v.is_null() {
        return 0.0;
    }
    let Some(s) = stats else {
        return match op {
            BinaryOp::Eq => DEFAULT_EQ_SELECTIVITY,
            BinaryOp::NotEq => 1.0 - DEFAULT_EQ_SELECTIVITY,
            _ => DEFAULT_RANGE_SELECTIVITY,
        };
    };
    let eq = 1.0 / s.ndv_estimate.max(1.0);
    match op {
        BinaryOp::Eq => eq,
        BinaryOp::NotEq => 1.0 - eq,
        _ => range_selectivity(s, op, v).unwrap_or(DEFAULT_RANGE_SELECTIVITY),
    }
}

fn range_selectivity(s: &ColumnStats, op: BinaryOp, v: &Value) -> Option<f64> {
    let (lo, hi, x) = (s.min.as_f64()?, s.max.as_f64()?, v.as_f64()?);
    if !(lo.is_finite() && hi.is_finite() && x.is_finite()) {
        return None;
    }
    if hi <= lo {
        let holds = match op {
            BinaryOp::Lt => lo < x,
            BinaryOp::LtEq => lo <= x,
            BinaryOp::Gt => lo > x,
            _ => lo >= x,
        };
        return Some(if holds { 1.0 } else { 0.0 });
    }
    let below = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    Some(match op {
        BinaryOp::Lt | BinaryOp::LtEq => below,
        _ => 1.0 - below,
    })
}

/// Estimated output rows of `plan`.
pub fn estimate_cardinality(plan: &LogicalPlan, stats: &StatsMap) -> Result<f64, CardinalityError> {
    Ok(estimate_with_cost(plan, stats)?.0)
}

/// Sum of the estimated cardinalities of every node of `plan`, correctly
/// rounded so that mirrored trees cost exactly the same.
pub fn plan_cost(plan: &LogicalPlan, stats: &StatsMap) -> Result<f64, CardinalityError> {
    Ok(estimate_with_cost(plan, stats)?.1)
}

/// `(cardinality, cost)` of `plan` in one pass.
pub fn estimate_with_cost(
    plan: &LogicalPlan,
    stats: &StatsMap,
) -> Result<(f64, f64), CardinalityError> {
    let (card, cost) = cost_terms(plan, stats)?;
    Ok((card, cost.value()))
}

/// Cardinality and the unrounded cost sum, for callers that extend it.
pub(crate) fn cost_terms(
    plan: &LogicalPlan,
    stats: &StatsMap,
) -> Result<(f64, ExactSum), CardinalityError> {
    let mut cost = ExactSum::new();
    let card = estimate_node(plan, stats, &mut cost)?;
    Ok((card, cost))
}

fn estimate_node(
    plan: &LogicalPlan,
    stats: &StatsMap,
    cost: &mut ExactSum,
) -> Result<f64, CardinalityError> {
    let card = match plan {
        LogicalPlan::Scan { table, .. } => {
            stats
                .get(table)
                .ok_or_else(|| CardinalityError::MissingStats(table.clone()))?
                .row_count as f64
        }
        LogicalPlan::Filter { input, predicate } => {
            estimate_node(input, stats, cost)? * selectivity(predicate, input, stats)
        }
        LogicalPlan::Project { input, .. } | LogicalPlan::Sort { input, .. } => {
            estimate_node(input, stats, cost)?
        }
        LogicalPlan::Limit { input, n } => estimate_node(input, stats, cost)?.min(*n as f64),
        LogicalPlan::Join { left, right, on } => {
            let l = estimate_node(left, stats, cost)?;
            let r = estimate_node(right, stats, cost)?;
            let mut card = l * r;
            for (a, b) in on {
                let d = match (ndv(left, a, stats), ndv(right, b, stats)) {
                    (Some(x), Some(y)) => x.max(y),
                    (Some(x), None) | (None, Some(x)) => x,
                    (None, None) => l.max(r).max(1.0),
                };
                card /= d;
            }
            card
        }
        LogicalPlan::Aggregate {
            input,
            group_by,
            mode,
            ..
        } => {
            let n = estimate_node(input, stats, cost)?;
            let sets = grouping_sets(group_by, *mode).unwrap_or_default();
            sets.iter()
                .map(|set| {
                    if set.is_empty() {
                        1.0
                    } else {
                        let groups: f64 = set
                            .iter()
                            .map(|&i| ndv(input, &group_by[i], stats).unwrap_or(n))
                            .product();
                        groups.min(n)
                    }
                })
                .sum()
        }
    };
    let card = if card.is_finite() {
        card.max(0.0)
    } else {
        f64::MAX
    };
    cost.add(card);
    Ok(card)
}
