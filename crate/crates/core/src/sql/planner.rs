//! Name resolution, validation and lowering of a [`Query`] to a
//! [`LogicalPlan`].

use std::collections::HashSet;

use thiserror::Error;

use super::ast::{GroupingMode, Query, SelectItem};
use super::plan::{
    exact_type, AggregateCall, LogicalPlan, PlanSchema, ResolveError, SchemaCheckError, SortKey,
    GROUPING_ID,
};
use crate::catalog::{CatalogError, TableProvider};
use crate::expr::{ColumnRef, Expr, ExprTypeError};
use crate::types::ColumnType;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error(transparent)]
    Catalog(CatalogError),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("ambiguous column `{0}`; qualify it as table.column")]
    AmbiguousColumn(String),
    #[error("table binding `{0}` is used twice; add an alias")]
    DuplicateBinding(String),
    #[error("column `{0}` must appear in GROUP BY or inside an aggregate")]
    NonGroupedColumn(String),
    #[error("duplicate GROUP BY column `{0}`")]
    DuplicateGroupColumn(String),
    #[error("duplicate output column `{0}`; use AS to rename")]
    DuplicateOutput(String),
    #[error("aggregate functions are not allowed in {0}")]
    MisplacedAggregate(&'static str),
    #[error("invalid join condition: {0}")]
    InvalidJoin(String),
    #[error("type error in {context}: {source}")]
    Type {
        context: &'static str,
        #[source]
        source: ExprTypeError,
    },
    #[error("{context} must be Bool, found {found}")]
    NotBoolean {
        context: &'static str,
        found: ColumnType,
    },
}

impl From<ResolveError> for PlanError {
    fn from(e: ResolveError) -> Self {
        match e {
            ResolveError::Unknown(c) => PlanError::UnknownColumn(c),
            ResolveError::Ambiguous(c) => PlanError::AmbiguousColumn(c),
        }
    }
}

fn check_error(context: &'static str) -> impl Fn(SchemaCheckError) -> PlanError {
    move |e| match e {
        SchemaCheckError::Resolve(r) => r.into(),
        SchemaCheckError::Type(source) => PlanError::Type { context, source },
    }
}

/// Rewrites user references to exact references into `schema`.
fn resolve_expr(expr: &Expr, schema: &PlanSchema) -> Result<Expr, PlanError> {
    expr.map_columns(&mut |c| {
        let i = schema.resolve(c)?;
        Ok::<_, PlanError>(schema.fields[i].column_ref())
    })
}

fn resolve_ref(c: &ColumnRef, schema: &PlanSchema) -> Result<ColumnRef, PlanError> {
    Ok(schema.fields[schema.resolve(c)?].column_ref())
}

fn scan_plan(
    provider: &dyn TableProvider,
    name: &str,
    binding: &str,
) -> Result<LogicalPlan, PlanError> {
    let schema = provider.table_schema(name).map_err(|e| match e {
        CatalogError::UnknownTable(t) => PlanError::UnknownTable(t),
        other => PlanError::Catalog(other),
    })?;
    Ok(LogicalPlan::scan(name, binding, &schema))
}

fn compatible(a: ColumnType, b: ColumnType) -> bool {
    a == b || (a.is_numeric() && b.is_numeric())
}

/// Lowers a parsed query against the tables of `provider`.
pub fn plan_query(q: &Query, provider: &dyn TableProvider) -> Result<LogicalPlan, PlanError> {
    let mut bindings = HashSet::new();
    let first = q.from.binding();
    bindings.insert(first.to_string());
    let mut plan = scan_plan(provider, &q.from.name, first)?;

    for j in &q.joins {
        let binding = j.table.binding();
        if !bindings.insert(binding.to_string()) {
            return Err(PlanError::DuplicateBinding(binding.to_string()));
        }
        let right = scan_plan(provider, &j.table.name, binding)?;
        let ls = plan.schema();
        let rs = right.schema();
        let both = ls.concat(&rs);
        let mut on = Vec::with_capacity(j.on.len());
        for (a, b) in &j.on {
            let ia = both.resolve(a)?;
            let ib = both.resolve(b)?;
            let (li, ri) = match (ia < ls.len(), ib < ls.len()) {
                (true, false) => (ia, ib),
                (false, true) => (ib, ia),
                _ => {
                    return Err(PlanError::InvalidJoin(format!(
                        "`{a} = {b}` must compare a column of `{binding}` with an earlier table"
                    )))
                }
            };
            let (lf, rf) = (&both.fields[li], &both.fields[ri]);
            if !compatible(lf.ty, rf.ty) {
                return Err(PlanError::InvalidJoin(format!(
                    "cannot compare {} ({}) with {} ({})",
                    lf.column_ref(),
                    lf.ty,
                    rf.column_ref(),
                    rf.ty
                )));
            }
            on.push((lf.column_ref(), rf.column_ref()));
        }
        plan = LogicalPlan::Join {
            left: Box::new(plan),
            right: Box::new(right),
            on,
        };
    }

    let input_schema = plan.schema();

    if let Some(w) = &q.selection {
        if w.contains_aggregate() {
            return Err(PlanError::MisplacedAggregate("WHERE"));
        }
        let predicate = resolve_expr(w, &input_schema)?;
        let ty = predicate
            .infer_type(&mut exact_type(&input_schema))
            .map_err(check_error("WHERE"))?;
        if let Some(t) = ty.filter(|t| *t != ColumnType::Bool) {
            return Err(PlanError::NotBoolean {
                context: "WHERE",
                found: t,
            });
        }
        plan = LogicalPlan::Filter {
            input: Box::new(plan),
            predicate,
        };
    }

    // expand `*` and name every select item
    let star_names = input_schema.output_names();
    let mut items: Vec<(Expr, String)> = Vec::new();
    for item in &q.projection {
        match item {
            SelectItem::Wildcard => {
                for (f, n) in input_schema.fields.iter().zip(&star_names) {
                    items.push((Expr::Column(f.column_ref()), n.clone()));
                }
            }
            SelectItem::Expr { expr, alias } => {
                let name = alias.clone().unwrap_or_else(|| expr.output_name());
                items.push((expr.clone(), name));
            }
        }
    }

    let is_aggregate = q.group_by.is_some() || items.iter().any(|(e, _)| e.contains_aggregate());

    let (mut exprs, mut names): (Vec<Expr>, Vec<String>) = if is_aggregate {
        let (group_by, mode) = match &q.group_by {
            Some(g) => (g.columns.clone(), g.mode),
            None => (Vec::new(), GroupingMode::Plain),
        };
        let mut group_refs: Vec<ColumnRef> = Vec::new();
        for g in &group_by {
            let r = resolve_ref(g, &input_schema)?;
            if group_refs.contains(&r) {
                return Err(PlanError::DuplicateGroupColumn(g.to_string()));
            }
            group_refs.push(r);
        }

        let mut aggregates: Vec<AggregateCall> = Vec::new();
        let mut rewritten = Vec::with_capacity(items.len());
        for (e, name) in &items {
            let resolved = resolve_expr(e, &input_schema)?;
            resolved
                .infer_type(&mut exact_type(&input_schema))
                .map_err(check_error("select list"))?;
            let out = resolved.transform(&mut |node| -> Result<Expr, PlanError> {
                match node {
                    Expr::Aggregate { func, arg } => {
                        let arg = arg.map(|a| *a);
                        let idx = match aggregates
                            .iter()
                            .position(|a| a.func == func && a.arg == arg)
                        {
                            Some(i) => i,
                            None => {
                                aggregates.push(AggregateCall {
                                    func,
                                    arg,
                                    output: format!("__agg{}", aggregates.len()),
                                });
                                aggregates.len() - 1
                            }
                        };
                        Ok(Expr::Column(ColumnRef::new(aggregates[idx].output.clone())))
                    }
                    other => Ok(other),
                }
            })?;
            for c in out.column_refs() {
                let is_agg_output =
                    c.qualifier.is_none() && aggregates.iter().any(|a| a.output == c.name);
                if !is_agg_output && !group_refs.contains(c) {
                    return Err(PlanError::NonGroupedColumn(c.to_string()));
                }
            }
            rewritten.push((out, name.clone()));
        }
        plan = LogicalPlan::Aggregate {
            input: Box::new(plan),
            group_by: group_refs,
            mode,
            aggregates,
        };
        let (mut exprs, mut names): (Vec<Expr>, Vec<String>) = rewritten.into_iter().unzip();
        if mode != GroupingMode::Plain {
            exprs.push(Expr::Column(ColumnRef::new(GROUPING_ID)));
            names.push(GROUPING_ID.to_string());
        }
        (exprs, names)
    } else {
        let mut exprs = Vec::with_capacity(items.len());
        let mut names = Vec::with_capacity(items.len());
        for (e, n) in items {
            exprs.push(resolve_expr(&e, &input_schema)?);
            names.push(n);
        }
        (exprs, names)
    };

    let project_input = plan.schema();
    for e in &exprs {
        e.infer_type(&mut exact_type(&project_input))
            .map_err(check_error("select list"))?;
    }
    let mut seen = HashSet::new();
    for n in &names {
        if !seen.insert(n.as_str()) {
            return Err(PlanError::DuplicateOutput(n.clone()));
        }
    }

    // ORDER BY resolves against the select list
    let mut keys = Vec::with_capacity(q.order_by.len());
    for o in &q.order_by {
        let by_name = o.column.to_string();
        let pos = names
            .iter()
            .position(|n| *n == o.column.name && o.column.qualifier.is_none())
            .or_else(|| names.iter().position(|n| *n == by_name))
            .or_else(|| {
                let target = resolve_ref(&o.column, &input_schema).ok()?;
                exprs
                    .iter()
                    .position(|e| *e == Expr::Column(target.clone()))
            })
            .ok_or_else(|| PlanError::UnknownColumn(by_name.clone()))?;
        keys.push(SortKey {
            column: ColumnRef::new(names[pos].clone()),
            descending: o.descending,
        });
    }

    let aliases = names.drain(..).map(ColumnRef::new).collect();
    plan = LogicalPlan::Project {
        input: Box::new(plan),
        exprs: std::mem::take(&mut exprs),
        aliases,
    };
    if !keys.is_empty() {
        plan = LogicalPlan::Sort {
            input: Box::new(plan),
            keys,
        };
    }
    if let Some(n) = q.limit {
        plan = LogicalPlan::Limit {
            input: Box::new(plan),
            n,
        };
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::MemoryTables;
    use crate::relation::Relation;
    use crate::sql::parse_sql;
    use crate::types::Schema;

    fn tables() -> MemoryTables {
        let trips = Schema::from_pairs([
            ("trip_id", ColumnType::Int64),
            ("city", ColumnType::Utf8),
            ("fare", ColumnType::Float64),
            ("zone_id", ColumnType::Int64),
        ]);
        let zones =
            Schema::from_pairs([("zone_id", ColumnType::Int64), ("name", ColumnType::Utf8)]);
        MemoryTables::new()
            .with("trips", Relation::empty(trips))
            .with("zones", Relation::empty(zones))
    }

    fn plan(sql: &str) -> Result<LogicalPlan, PlanError> {
        plan_query(&parse_sql(sql).unwrap(), &tables())
    }

    #[test]
    fn star_projects_all_columns_over_scan() {
        let p = plan("SELECT * FROM trips").unwrap();
        let LogicalPlan::Project { input, exprs, .. } = &p else {
            panic!("{p}")
        };
        assert!(matches!(**input, LogicalPlan::Scan { .. }));
        assert_eq!(exprs.len(), 4);
        let names: Vec<_> = p.schema().fields.into_iter().map(|f| f.name).collect();
        assert_eq!(names, vec!["trip_id", "city", "fare", "zone_id"]);
    }

    #[test]
    fn resolution_errors() {
        assert!(matches!(
            plan("SELECT nope FROM trips"),
            Err(PlanError::UnknownColumn(_))
        ));
        assert!(matches!(
            plan("SELECT a FROM nope"),
            Err(PlanError::UnknownTable(_))
        ));
        assert!(matches!(
            plan("SELECT zone_id FROM trips JOIN zones ON trips.zone_id = zones.zone_id"),
            Err(PlanError::AmbiguousColumn(_))
        ));
        assert!(matches!(
            plan("SELECT * FROM trips JOIN trips ON trip_id = trip_id"),
            Err(PlanError::DuplicateBinding(_))
        ));
    }

    #[test]
    fn non_grouped_column_is_rejected() {
        assert!(matches!(
            plan("SELECT city, fare FROM trips GROUP BY city"),
            Err(PlanError::NonGroupedColumn(_))
        ));
        assert!(matches!(
            plan("SELECT city, SUM(fare) FROM trips"),
            Err(PlanError::NonGroupedColumn(_))
        ));
        assert!(plan("SELECT city, SUM(fare) / COUNT(*) AS m FROM trips GROUP BY city").is_ok());
    }

    #[test]
    fn type_errors() {
        assert!(matches!(
            plan("SELECT * FROM trips WHERE city > 3"),
            Err(PlanError::Type { .. })
        ));
        assert!(matches!(
            plan("SELECT * FROM trips WHERE fare"),
            Err(PlanError::NotBoolean { .. })
        ));
        assert!(matches!(
            plan("SELECT SUM(city) FROM trips"),
            Err(PlanError::Type { .. })
        ));
        assert!(matches!(
            plan("SELECT * FROM trips WHERE COUNT(*) > 1"),
            Err(PlanError::MisplacedAggregate(_))
        ));
        assert!(matches!(
            plan("SELECT * FROM trips JOIN zones ON trips.city = zones.zone_id"),
            Err(PlanError::InvalidJoin(_))
        ));
    }

    #[test]
    fn join_star_schema_qualifies_collisions() {
        let p = plan("SELECT * FROM trips JOIN zones ON zones.zone_id = trips.zone_id").unwrap();
        let names: Vec<_> = p.schema().fields.into_iter().map(|f| f.name).collect();
        assert_eq!(
            names,
            vec![
                "trip_id",
                "city",
                "fare",
                "trips.zone_id",
                "zones.zone_id",
                "name"
            ]
        );
        // reversed ON pair is normalised to (left, right)
        let LogicalPlan::Project { input, .. } = &p else {
            panic!()
        };
        let LogicalPlan::Join { on, .. } = &**input else {
            panic!()
        };
        assert_eq!(on[0].0, ColumnRef::qualified("trips", "zone_id"));
    }

    #[test]
    fn cube_appends_grouping_id() {
        let p = plan("SELECT city, SUM(fare) FROM trips GROUP BY city WITH CUBE").unwrap();
        let names: Vec<_> = p.schema().fields.into_iter().map(|f| f.name).collect();
        assert_eq!(names, vec!["city", "SUM(fare)", "grouping_id"]);
    }

    #[test]
    fn order_by_resolves_outputs() {
        let p =
            plan("SELECT city AS c, fare FROM trips ORDER BY c DESC, trips.fare LIMIT 3").unwrap();
        let LogicalPlan::Limit { input, n: 3 } = &p else {
            panic!()
        };
        let LogicalPlan::Sort { keys, .. } = &**input else {
            panic!()
        };
        assert_eq!(keys[0].column, ColumnRef::new("c"));
        assert!(keys[0].descending);
        assert_eq!(keys[1].column, ColumnRef::new("fare"));
        assert!(matches!(
            plan("SELECT city FROM trips ORDER BY fare"),
            Err(PlanError::UnknownColumn(_))
        ));
    }
}
