//! Plan rewrites: predicate pushdown, join reordering and projection
//! pruning.

use std::collections::BTreeSet;

use thiserror::Error;

use super::join_order::{choose_join_order, JoinEdge, JoinOrderError};
use super::stats::StatsMap;
use crate::expr::{BinaryOp, ColumnRef, Expr};
use crate::sql::plan::SchemaCheckError;
use crate::sql::{LogicalPlan, PlanSchema};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    JoinOrder(#[from] JoinOrderError),
    #[error("rewrite changed the output schema")]
    SchemaChanged,
}

impl From<SchemaCheckError> for OptimizeError {
    fn from(e: SchemaCheckError) -> Self {
        OptimizeError::InvalidPlan(e.to_string())
    }
}

/// Optimizes `plan`, falling back to the unchanged plan if any rewrite
/// step fails (for instance when statistics are missing).
pub fn optimize(plan: &LogicalPlan, stats: &StatsMap) -> LogicalPlan {
    match try_optimize(plan, stats) {
        Ok(p) => p,
        Err(e) => {
            log::debug!("optimizer fell back to the input plan: {e}");
            plan.clone()
        }
    }
}

/// Pushes filters down, reorders joins by cost, then prunes unused columns.
pub fn try_optimize(plan: &LogicalPlan, stats: &StatsMap) -> Result<LogicalPlan, OptimizeError> {
    let before = plan.try_schema()?;
    let reordered = reorder(plan.clone(), stats, false)?;
    let pruned = prune(reordered, None);
    if pruned.try_schema()? != before {
        return Err(OptimizeError::SchemaChanged);
    }
    Ok(pruned)
}

fn is_join_region(plan: &LogicalPlan) -> bool {
    match plan {
        LogicalPlan::Join { .. } => true,
        LogicalPlan::Filter { input, .. } => is_join_region(input),
        _ => false,
    }
}

/// `free_order`: whether the parent addresses columns by reference only,
/// so this subtree may permute its output fields.
fn reorder(
    plan: LogicalPlan,
    stats: &StatsMap,
    free_order: bool,
) -> Result<LogicalPlan, OptimizeError> {
    if is_join_region(&plan) {
        return reorder_region(plan, stats, free_order);
    }
    Ok(match plan {
        LogicalPlan::Scan { .. } => plan,
        LogicalPlan::Filter { input, predicate } => LogicalPlan::Filter {
            input: Box::new(reorder(*input, stats, free_order)?),
            predicate,
        },
        LogicalPlan::Project {
            input,
            exprs,
            aliases,
        } => LogicalPlan::Project {
            input: Box::new(reorder(*input, stats, true)?),
            exprs,
            aliases,
        },
        LogicalPlan::Aggregate {
            input,
            group_by,
            mode,
            aggregates,
        } => LogicalPlan::Aggregate {
            input: Box::new(reorder(*input, stats, true)?),
            group_by,
            mode,
            aggregates,
        },
        LogicalPlan::Sort { input, keys } => LogicalPlan::Sort {
            input: Box::new(reorder(*input, stats, free_order)?),
            keys,
        },
        LogicalPlan::Limit { input, n } => LogicalPlan::Limit {
            input: Box::new(reorder(*input, stats, free_order)?),
            n,
        },
        LogicalPlan::Join { .. } => unreachable!("joins are handled as regions"),
    })
}

fn flatten(
    plan: LogicalPlan,
    stats: &StatsMap,
    leaves: &mut Vec<LogicalPlan>,
    conjuncts: &mut Vec<Expr>,
) -> Result<(), OptimizeError> {
    match plan {
        LogicalPlan::Filter { input, predicate } if is_join_region(&input) => {
            conjuncts.extend(predicate.split_conjunction());
            flatten(*input, stats, leaves, conjuncts)
        }
        LogicalPlan::Join { left, right, on } => {
            for (a, b) in on {
                conjuncts.push(Expr::binary(BinaryOp::Eq, Expr::Column(a), Expr::Column(b)));
            }
            flatten(*left, stats, leaves, conjuncts)?;
            flatten(*right, stats, leaves, conjuncts)
        }
        other => {
            leaves.push(reorder(other, stats, true)?);
            Ok(())
        }
    }
}

fn owner(schemas: &[PlanSchema], c: &ColumnRef) -> Option<usize> {
    schemas.iter().position(|s| s.index_of(c).is_some())
}

fn reorder_region(
    plan: LogicalPlan,
    stats: &StatsMap,
    free_order: bool,
) -> Result<LogicalPlan, OptimizeError> {
    let original = plan.try_schema()?;
    let mut leaves = Vec::new();
    let mut conjuncts = Vec::new();
    flatten(plan, stats, &mut leaves, &mut conjuncts)?;
    let schemas: Vec<PlanSchema> = leaves
        .iter()
        .map(LogicalPlan::try_schema)
        .collect::<Result<_, _>>()?;

    let mut leaf_preds: Vec<Vec<Expr>> = vec![Vec::new(); leaves.len()];
    let mut edges = Vec::new();
    let mut residual = Vec::new();
    for conj in conjuncts {
        let mut owners = BTreeSet::new();
        for c in conj.column_refs() {
            let i = owner(&schemas, c)
                .ok_or_else(|| OptimizeError::InvalidPlan(format!("unresolved column `{c}`")))?;
            owners.insert(i);
        }
        match owners.len() {
            1 => leaf_preds[*owners.first().expect("one owner")].push(conj),
            2 => match &conj {
                Expr::Binary {
                    op: BinaryOp::Eq,
                    left,
                    right,
                } => match (left.as_ref(), right.as_ref()) {
                    (Expr::Column(a), Expr::Column(b)) => edges.push(JoinEdge {
                        left: owner(&schemas, a).expect("resolved"),
                        right: owner(&schemas, b).expect("resolved"),
                        left_col: a.clone(),
                        right_col: b.clone(),
                    }),
                    _ => residual.push(conj),
                },
                _ => residual.push(conj),
            },
            _ => residual.push(conj),
        }
    }

    let leaves = leaves
        .into_iter()
        .zip(leaf_preds)
        .map(|(leaf, preds)| match Expr::conjunction(preds) {
            Some(p) => LogicalPlan::Filter {
                input: Box::new(leaf),
                predicate: p,
            },
            None => leaf,
        })
        .collect();
    let tree = choose_join_order(leaves, &edges, stats)?;
    let (mut tree, rest) = place_residuals(tree, residual)?;
    if let Some(p) = Expr::conjunction(rest) {
        tree = LogicalPlan::Filter {
            input: Box::new(tree),
            predicate: p,
        };
    }
    let current = tree.try_schema()?;
    if !free_order && current != original {
        let refs: Vec<ColumnRef> = original.fields.iter().map(|f| f.column_ref()).collect();
        tree = LogicalPlan::Project {
            input: Box::new(tree),
            exprs: refs.iter().cloned().map(Expr::Column).collect(),
            aliases: refs,
        };
    }
    Ok(tree)
}

/// Attaches each predicate above the lowest join whose output covers all
/// of its columns; returns the ones no join covers.
fn place_residuals(
    plan: LogicalPlan,
    preds: Vec<Expr>,
) -> Result<(LogicalPlan, Vec<Expr>), OptimizeError> {
    if preds.is_empty() {
        return Ok((plan, preds));
    }
    let LogicalPlan::Join { left, right, on } = plan else {
        return Ok((plan, preds));
    };
    let (left, preds) = place_residuals(*left, preds)?;
    let (right, preds) = place_residuals(*right, preds)?;
    let joined = LogicalPlan::Join {
        left: Box::new(left),
        right: Box::new(right),
        on,
    };
    let schema = joined.try_schema()?;
    let (here, rest): (Vec<Expr>, Vec<Expr>) = preds.into_iter().partition(|p| {
        !p.column_refs().is_empty() && p.column_refs().iter().all(|c| schema.index_of(c).is_some())
    });
    let plan = match Expr::conjunction(here) {
        Some(p) => LogicalPlan::Filter {
            input: Box::new(joined),
            predicate: p,
        },
        None => joined,
    };
    Ok((plan, rest))
}

type Required = BTreeSet<ColumnRef>;

fn with_refs<'a>(
    required: Option<&Required>,
    refs: impl IntoIterator<Item = &'a ColumnRef>,
) -> Option<Required> {
    required.map(|r| {
        let mut r = r.clone();
        r.extend(refs.into_iter().cloned());
        r
    })
}

/// Drops columns no ancestor uses. `None` means every output is needed.
fn prune(plan: LogicalPlan, required: Option<&Required>) -> LogicalPlan {
    match plan {
        LogicalPlan::Scan { ref schema, .. } => {
            let Some(req) = required else { return plan };
            let mut keep: Vec<ColumnRef> = schema
                .fields
                .iter()
                .map(|f| f.column_ref())
                .filter(|c| req.contains(c))
                .collect();
            if keep.len() == schema.len() {
                return plan;
            }
            if keep.is_empty() {
                keep.push(schema.fields[0].column_ref());
            }
            LogicalPlan::Project {
                input: Box::new(plan),
                exprs: keep.iter().cloned().map(Expr::Column).collect(),
                aliases: keep,
            }
        }
        LogicalPlan::Filter { input, predicate } => {
            let req = with_refs(required, predicate.column_refs());
            LogicalPlan::Filter {
                input: Box::new(prune(*input, req.as_ref())),
                predicate,
            }
        }
        LogicalPlan::Project {
            input,
            exprs,
            aliases,
        } => {
            let mut kept: Vec<(Expr, ColumnRef)> = exprs
                .into_iter()
                .zip(aliases)
                .filter(|(_, a)| required.is_none_or(|r| r.contains(a)))
                .collect();
            if kept.is_empty() {
                let schema = input.schema();
                let c = schema.fields[0].column_ref();
                kept.push((Expr::Column(c.clone()), c));
            }
            let child: Required = kept
                .iter()
                .flat_map(|(e, _)| e.column_refs())
                .cloned()
                .collect();
            let (exprs, aliases) = kept.into_iter().unzip();
            LogicalPlan::Project {
                input: Box::new(prune(*input, Some(&child))),
                exprs,
                aliases,
            }
        }
        LogicalPlan::Join { left, right, on } => {
            let need = with_refs(required, on.iter().flat_map(|(a, b)| [a, b]));
            let split = |side: &LogicalPlan| {
                need.as_ref().map(|n| {
                    let s = side.schema();
                    n.iter()
                        .filter(|c| s.index_of(c).is_some())
                        .cloned()
                        .collect::<Required>()
                })
            };
            let (lr, rr) = (split(&left), split(&right));
            LogicalPlan::Join {
                left: Box::new(prune(*left, lr.as_ref())),
                right: Box::new(prune(*right, rr.as_ref())),
                on,
            }
        }
        LogicalPlan::Aggregate {
            input,
            group_by,
            mode,
            aggregates,
        } => {
            let mut child: Required = group_by.iter().cloned().collect();
            for a in &aggregates {
                if let Some(arg) = &a.arg {
                    child.extend(arg.column_refs().into_iter().cloned());
                }
            }
            LogicalPlan::Aggregate {
                input: Box::new(prune(*input, Some(&child))),
                group_by,
                mode,
                aggregates,
            }
        }
        // Sort breaks ties and Limit picks rows using every column, so
        // their inputs stay whole.
        LogicalPlan::Sort { input, keys } => LogicalPlan::Sort {
            input: Box::new(prune(*input, None)),
            keys,
        },
        LogicalPlan::Limit { input, n } => LogicalPlan::Limit {
            input: Box::new(prune(*input, None)),
            n,
        },
    }
}
