//! Partition-parallel evaluation of physical plans on a private worker pool.

use std::collections::HashMap;

use rayon::prelude::*;

use super::aggregate::Accumulator;
use super::grouping::grouping_id;
use super::physical::{BuildSide, PhysicalAggregate, PhysicalPlan};
use super::ExecError;
use crate::cancel::CancelToken;
use crate::catalog::TableProvider;
use crate::expr::EvalError;
use crate::relation::{cmp_rows, split_contiguous, Relation, Row};
use crate::types::{ColumnType, Value};

type Partitions = Vec<Vec<Row>>;

/// Runs physical plans with a fixed number of worker threads. Results do
/// not depend on the worker count: scans split tables into contiguous
/// chunks and every operator preserves or canonicalises row order.
pub struct Executor {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("workers", &self.workers)
            .finish()
    }
}

/// Hardware parallelism, or 1 when unknown.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Executor {
    pub fn new(workers: usize) -> Result<Self, ExecError> {
        if workers == 0 {
            return Err(ExecError::InvalidWorkers);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("hmdap-exec-{i}"))
            .build()
            .map_err(|e| ExecError::Pool(e.to_string()))?;
        Ok(Executor { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn execute(
        &self,
        plan: &PhysicalPlan,
        tables: &dyn TableProvider,
    ) -> Result<Relation, ExecError> {
        self.execute_with_cancel(plan, tables, &CancelToken::new())
    }

    /// Like [`Executor::execute`], checking `cancel` before each operator.
    pub fn execute_with_cancel(
        &self,
        plan: &PhysicalPlan,
        tables: &dyn TableProvider,
        cancel: &CancelToken,
    ) -> Result<Relation, ExecError> {
        let schema = plan.schema().to_schema();
        let parts = self.pool.install(|| self.run(plan, tables, cancel))?;
        Ok(Relation::from_partitions_unchecked(schema, parts))
    }

    fn run(
        &self,
        plan: &PhysicalPlan,
        tables: &dyn TableProvider,
        cancel: &CancelToken,
    ) -> Result<Partitions, ExecError> {
        if cancel.is_cancelled() {
            return Err(ExecError::Cancelled);
        }
        let op = plan.name();
        let runtime = |source: EvalError| ExecError::Runtime {
            operator: op,
            source,
        };
        match plan {
            PhysicalPlan::TableScan { table, schema } => {
                let rel = tables.scan(table)?;
                let expected: Vec<ColumnType> = schema.fields.iter().map(|f| f.ty).collect();
                let actual: Vec<ColumnType> = rel.schema().columns().iter().map(|c| c.ty).collect();
                if expected != actual {
                    return Err(ExecError::SchemaDrift(table.clone()));
                }
                Ok(split_contiguous(rel.to_rows(), self.workers))
            }
            PhysicalPlan::Filter { input, predicate } => {
                let parts = self.run(input, tables, cancel)?;
                parts
                    .into_par_iter()
                    .map(|part| {
                        let mut out = Vec::with_capacity(part.len());
                        for row in part {
                            if predicate.is_true(&row)? {
                                out.push(row);
                            }
                        }
                        Ok(out)
                    })
                    .collect::<Result<_, EvalError>>()
                    .map_err(runtime)
            }
            PhysicalPlan::Project { input, exprs, .. } => {
                let parts = self.run(input, tables, cancel)?;
                parts
                    .into_par_iter()
                    .map(|part| {
                        part.iter()
                            .map(|row| exprs.iter().map(|e| e.eval(row)).collect())
                            .collect::<Result<Vec<Row>, _>>()
                    })
                    .collect::<Result<_, EvalError>>()
                    .map_err(runtime)
            }
            PhysicalPlan::HashJoin {
                left,
                right,
                left_keys,
                right_keys,
                build,
                ..
            } => {
                let (l, r) = rayon::join(
                    || self.run(left, tables, cancel),
                    || self.run(right, tables, cancel),
                );
                let (l, r) = (l?, r?);
                let widen: Vec<bool> = left_keys
                    .iter()
                    .zip(right_keys)
                    .map(|(&a, &b)| left.schema().fields[a].ty != right.schema().fields[b].ty)
                    .collect();
                Ok(match build {
                    BuildSide::Left => hash_join(l, left_keys, r, right_keys, &widen, false),
                    BuildSide::Right => hash_join(r, right_keys, l, left_keys, &widen, true),
                })
            }
            PhysicalPlan::HashAggregate {
                input,
                group_cols,
                sets,
                aggregates,
                ..
            } => {
                let parts = self.run(input, tables, cancel)?;
                hash_aggregate(&parts, group_cols, sets, aggregates).map_err(runtime)
            }
            PhysicalPlan::Sort { input, keys } => {
                let mut rows: Vec<Row> = self
                    .run(input, tables, cancel)?
                    .into_iter()
                    .flatten()
                    .collect();
                rows.par_sort_by(|a, b| {
                    for &(i, desc) in keys {
                        let o = a[i].total_cmp(&b[i]);
                        let o = if desc { o.reverse() } else { o };
                        if o.is_ne() {
                            return o;
                        }
                    }
                    cmp_rows(a, b)
                });
                Ok(vec![rows])
            }
            PhysicalPlan::Limit { input, n } => {
                let n = usize::try_from(*n).unwrap_or(usize::MAX);
                let ordered = matches!(**input, PhysicalPlan::Sort { .. });
                let mut rows: Vec<Row> = self
                    .run(input, tables, cancel)?
                    .into_iter()
                    .flatten()
                    .collect();
                if !ordered {
                    rows.par_sort_by(|a, b| cmp_rows(a, b));
                }
                rows.truncate(n);
                Ok(vec![rows])
            }
        }
    }
}

/// Hash key of a row, `None` when any key is Null (Null never joins).
fn join_key(row: &Row, keys: &[usize], widen: &[bool]) -> Option<Vec<Value>> {
    keys.iter()
        .zip(widen)
        .map(|(&i, &w)| match &row[i] {
            Value::Null => None,
            v if w => Some(v.widen_to_f64()),
            v => Some(v.clone()),
        })
        .collect()
}

/// Builds a table over `build` (fully, before any probe), then probes it
/// partition by partition in parallel. Output rows are always
/// `left ++ right`; `build_is_right` says which input `build` is.
fn hash_join(
    build: Partitions,
    build_keys: &[usize],
    probe: Partitions,
    probe_keys: &[usize],
    widen: &[bool],
    build_is_right: bool,
) -> Partitions {
    let mut table: HashMap<Vec<Value>, Vec<Row>> = HashMap::new();
    for row in build.into_iter().flatten() {
        if let Some(k) = join_key(&row, build_keys, widen) {
            table.entry(k).or_default().push(row);
        }
    }
    probe
        .into_par_iter()
        .map(|part| {
            let mut out = Vec::new();
            for p in part {
                let Some(k) = join_key(&p, probe_keys, widen) else {
                    continue;
                };
                if let Some(matches) = table.get(&k) {
                    for b in matches {
                        let (l, r) = if build_is_right { (&p, b) } else { (b, &p) };
                        let mut row = Vec::with_capacity(l.len() + r.len());
                        row.extend_from_slice(l);
                        row.extend_from_slice(r);
                        out.push(row);
                    }
                }
            }
            out
        })
        .collect()
}

type Groups = HashMap<Vec<Value>, Vec<Accumulator>>;

fn new_accumulators(aggs: &[PhysicalAggregate]) -> Vec<Accumulator> {
    aggs.iter().map(|a| Accumulator::new(a.func)).collect()
}

fn partial_aggregate(
    part: &[Row],
    group_cols: &[usize],
    sets: &[Vec<usize>],
    aggs: &[PhysicalAggregate],
) -> Result<Vec<Groups>, EvalError> {
    let mut out: Vec<Groups> = vec![HashMap::new(); sets.len()];
    for row in part {
        let args: Vec<Option<Value>> = aggs
            .iter()
            .map(|a| a.arg.as_ref().map(|e| e.eval(row)).transpose())
            .collect::<Result<_, _>>()?;
        for (set, groups) in sets.iter().zip(out.iter_mut()) {
            let key: Vec<Value> = set.iter().map(|&g| row[group_cols[g]].clone()).collect();
            let accs = groups.entry(key).or_insert_with(|| new_accumulators(aggs));
            for (acc, v) in accs.iter_mut().zip(&args) {
                acc.update(v.as_ref());
            }
        }
    }
    Ok(out)
}

/// Per-partition partial aggregation for every grouping set, then a merge
/// that owns each group key exclusively. Output is ordered by grouping set,
/// then by key.
fn hash_aggregate(
    parts: &Partitions,
    group_cols: &[usize],
    sets: &[Vec<usize>],
    aggs: &[PhysicalAggregate],
) -> Result<Partitions, EvalError> {
    let partials: Vec<Vec<Groups>> = parts
        .par_iter()
        .map(|p| partial_aggregate(p, group_cols, sets, aggs))
        .collect::<Result<_, _>>()?;
    let d = group_cols.len();
    let mut rows = Vec::new();
    for (s, set) in sets.iter().enumerate() {
        let mut merged: Groups = HashMap::new();
        for partial in &partials {
            for (key, accs) in &partial[s] {
                match merged.get_mut(key) {
                    Some(cur) => {
                        for (a, b) in cur.iter_mut().zip(accs) {
                            a.merge(b);
                        }
                    }
                    None => {
                        merged.insert(key.clone(), accs.clone());
                    }
                }
            }
        }
        if set.is_empty() && merged.is_empty() {
            merged.insert(Vec::new(), new_accumulators(aggs));
        }
        let mut groups: Vec<(Vec<Value>, Vec<Accumulator>)> = merged.into_iter().collect();
        groups.sort_by(|a, b| cmp_rows(&a.0, &b.0));
        let gid = grouping_id(set, d);
        for (key, accs) in groups {
            let mut row = vec![Value::Null; d];
            for (&g, v) in set.iter().zip(key) {
                row[g] = v;
            }
            for (acc, a) in accs.iter().zip(aggs) {
                row.push(acc.finish(a.ty)?);
            }
            row.push(Value::Int64(gid));
            rows.push(row);
        }
    }
    Ok(vec![rows])
}
