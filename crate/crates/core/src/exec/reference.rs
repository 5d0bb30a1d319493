//! Naive single-threaded interpreter over logical plans, used as an
//! independent oracle for the optimizer and the parallel executor. Joins
//! are nested loops and aggregation scans each group's rows directly.

use std::cmp::Ordering;

use super::ExecError;
use crate::catalog::TableProvider;
use crate::expr::{AggFunc, EvalError, Expr};
use crate::numeric::exact_sum;
use crate::relation::{Relation, Row};
use crate::sql::{GroupingMode, LogicalPlan, PlanSchema};
use crate::types::{ColumnType, Value};

pub fn reference_interpret(
    plan: &LogicalPlan,
    tables: &dyn TableProvider,
) -> Result<Relation, ExecError> {
    let schema = plan
        .try_schema()
        .map_err(|e| ExecError::InvalidPlan(e.to_string()))?;
    let rows = eval(plan, tables)?;
    Ok(Relation::from_partitions_unchecked(
        schema.to_schema(),
        vec![rows],
    ))
}

fn value_of(expr: &Expr, row: &Row, schema: &PlanSchema) -> Result<Value, EvalError> {
    let bound = expr.bind(&mut |c| {
        schema
            .index_of(c)
            .ok_or_else(|| EvalError::UnresolvedColumn(c.to_string()))
    })?;
    bound.eval(row)
}

fn schema_of(plan: &LogicalPlan) -> Result<PlanSchema, ExecError> {
    plan.try_schema()
        .map_err(|e| ExecError::InvalidPlan(e.to_string()))
}

fn eval(plan: &LogicalPlan, tables: &dyn TableProvider) -> Result<Vec<Row>, ExecError> {
    let runtime =
        |operator: &'static str| move |source: EvalError| ExecError::Runtime { operator, source };
    match plan {
        LogicalPlan::Scan { table, .. } => Ok(tables.scan(table)?.to_rows()),
        LogicalPlan::Filter { input, predicate } => {
            let schema = schema_of(input)?;
            let mut out = Vec::new();
            for row in eval(input, tables)? {
                let v = value_of(predicate, &row, &schema).map_err(runtime("Filter"))?;
                if v == Value::Bool(true) {
                    out.push(row);
                }
            }
            Ok(out)
        }
        LogicalPlan::Project { input, exprs, .. } => {
            let schema = schema_of(input)?;
            let mut out = Vec::new();
            for row in eval(input, tables)? {
                let mut new_row = Vec::new();
                for e in exprs {
                    new_row.push(value_of(e, &row, &schema).map_err(runtime("Project"))?);
                }
                out.push(new_row);
            }
            Ok(out)
        }
        LogicalPlan::Join { left, right, on } => {
            let (ls, rs) = (schema_of(left)?, schema_of(right)?);
            let lrows = eval(left, tables)?;
            let rrows = eval(right, tables)?;
            let mut out = Vec::new();
            for l in &lrows {
                for r in &rrows {
                    let mut all = true;
                    for (a, b) in on {
                        let x = &l[ls.index_of(a).expect("checked schema")];
                        let y = &r[rs.index_of(b).expect("checked schema")];
                        let eq = x.sql_cmp(y).map_err(|e| {
                            runtime("Join")(EvalError::TypeMismatch {
                                op: "=",
                                left: e.left.to_string(),
                                right: e.right.to_string(),
                            })
                        })? == Some(Ordering::Equal);
                        all &= eq;
                    }
                    if all {
                        out.push(l.iter().chain(r.iter()).cloned().collect());
                    }
                }
            }
            Ok(out)
        }
        LogicalPlan::Aggregate {
            input,
            group_by,
            mode,
            aggregates,
        } => {
            let in_schema = schema_of(input)?;
            let out_schema = schema_of(plan)?;
            let rows = eval(input, tables)?;
            let d = group_by.len();
            let positions: Vec<usize> = group_by
                .iter()
                .map(|c| in_schema.index_of(c).expect("checked schema"))
                .collect();
            let mut out = Vec::new();
            for set in naive_sets(d, *mode) {
                // groups in first-seen order, found by linear search
                let mut groups: Vec<(Vec<Value>, Vec<&Row>)> = Vec::new();
                for row in &rows {
                    let key: Vec<Value> = set.iter().map(|&g| row[positions[g]].clone()).collect();
                    match groups.iter_mut().find(|(k, _)| *k == key) {
                        Some((_, members)) => members.push(row),
                        None => groups.push((key, vec![row])),
                    }
                }
                if set.is_empty() && groups.is_empty() {
                    groups.push((Vec::new(), Vec::new()));
                }
                let mut gid = 0i64;
                for i in 0..d {
                    if !set.contains(&i) {
                        gid += 1 << i;
                    }
                }
                for (key, members) in groups {
                    let mut row = vec![Value::Null; d];
                    for (j, &g) in set.iter().enumerate() {
                        row[g] = key[j].clone();
                    }
                    for (k, agg) in aggregates.iter().enumerate() {
                        let ty = out_schema.fields[d + k].ty;
                        let mut vals = Vec::new();
                        if let Some(arg) = &agg.arg {
                            for m in &members {
                                let v =
                                    value_of(arg, m, &in_schema).map_err(runtime("Aggregate"))?;
                                if !v.is_null() {
                                    vals.push(v);
                                }
                            }
                        }
                        let v = match agg.func {
                            AggFunc::Count if agg.arg.is_none() => {
                                Value::Int64(members.len() as i64)
                            }
                            f => naive_aggregate(f, &vals, ty).map_err(runtime("Aggregate"))?,
                        };
                        row.push(v);
                    }
                    row.push(Value::Int64(gid));
                    out.push(row);
                }
            }
            Ok(out)
        }
        LogicalPlan::Sort { input, keys } => {
            let schema = schema_of(input)?;
            let idx: Vec<(usize, bool)> = keys
                .iter()
                .map(|k| {
                    (
                        schema.index_of(&k.column).expect("checked schema"),
                        k.descending,
                    )
                })
                .collect();
            let mut rows = eval(input, tables)?;
            rows.sort_by(|a, b| {
                idx.iter()
                    .map(|&(i, desc)| {
                        let o = a[i].total_cmp(&b[i]);
                        if desc {
                            o.reverse()
                        } else {
                            o
                        }
                    })
                    .find(|o| o.is_ne())
                    .unwrap_or_else(|| full_row_order(a, b))
            });
            Ok(rows)
        }
        LogicalPlan::Limit { input, n } => {
            let mut rows = eval(input, tables)?;
            if !matches!(**input, LogicalPlan::Sort { .. }) {
                rows.sort_by(full_row_order);
            }
            rows.truncate(usize::try_from(*n).unwrap_or(usize::MAX));
            Ok(rows)
        }
    }
}

fn full_row_order(a: &Row, b: &Row) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(a.len().cmp(&b.len()))
}

/// Grouping sets enumerated directly from bitmasks.
fn naive_sets(d: usize, mode: GroupingMode) -> Vec<Vec<usize>> {
    let masks: Vec<u32> = match mode {
        GroupingMode::Plain => vec![(1 << d) - 1],
        GroupingMode::Rollup => (0..=d).map(|k| (1u32 << k) - 1).collect(),
        GroupingMode::Cube => (0..1u32 << d).collect(),
    };
    let mut sets: Vec<Vec<usize>> = masks
        .into_iter()
        .map(|m| (0..d).filter(|&i| m & (1 << i) != 0).collect())
        .collect();
    sets.sort_by(|a: &Vec<usize>, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    sets
}

fn naive_aggregate(func: AggFunc, vals: &[Value], ty: ColumnType) -> Result<Value, EvalError> {
    if func == AggFunc::Count {
        return Ok(Value::Int64(vals.len() as i64));
    }
    if vals.is_empty() {
        return Ok(Value::Null);
    }
    let ints: i128 = vals
        .iter()
        .filter_map(|v| match v {
            Value::Int64(i) => Some(i128::from(*i)),
            _ => None,
        })
        .sum();
    let floats = || {
        exact_sum(vals.iter().filter_map(|v| match v {
            Value::Float64(f) => Some(*f),
            _ => None,
        }))
    };
    Ok(match func {
        AggFunc::Sum if ty == ColumnType::Int64 => {
            Value::Int64(i64::try_from(ints).map_err(|_| EvalError::Overflow("SUM"))?)
        }
        AggFunc::Sum => Value::Float64(floats() + ints as f64),
        AggFunc::Avg => Value::Float64((floats() + ints as f64) / vals.len() as f64),
        AggFunc::Min => vals
            .iter()
            .min_by(|a, b| a.total_cmp(b))
            .cloned()
            .unwrap_or(Value::Null),
        AggFunc::Max => vals
            .iter()
            .max_by(|a, b| a.total_cmp(b))
            .cloned()
            .unwrap_or(Value::Null),
        AggFunc::Count => unreachable!("handled above"),
    })
}
