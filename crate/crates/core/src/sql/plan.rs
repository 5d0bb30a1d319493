//! Logical plans and their schemas.

use std::collections::HashMap;
use std::fmt;

use crate::expr::{AggFunc, ColumnRef, Expr, ExprTypeError};
use crate::types::{Column, ColumnType, Schema};

pub use super::ast::GroupingMode;

pub const GROUPING_ID: &str = "grouping_id";

/// One output column of a plan node. Columns coming from a scan are
/// qualified by the table binding; computed columns are unqualified.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Field {
    pub qualifier: Option<String>,
    pub name: String,
    pub ty: ColumnType,
}

impl Field {
    pub fn column_ref(&self) -> ColumnRef {
        ColumnRef {
            qualifier: self.qualifier.clone(),
            name: self.name.clone(),
        }
    }

    fn is(&self, r: &ColumnRef) -> bool {
        self.name == r.name && self.qualifier == r.qualifier
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolveError {
    Unknown(String),
    Ambiguous(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlanSchema {
    pub fields: Vec<Field>,
}

impl PlanSchema {
    pub fn new(fields: Vec<Field>) -> Self {
        PlanSchema { fields }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Exact lookup of an already resolved reference.
    pub fn index_of(&self, r: &ColumnRef) -> Option<usize> {
        self.fields.iter().position(|f| f.is(r))
    }

    pub fn field(&self, r: &ColumnRef) -> Option<&Field> {
        self.index_of(r).map(|i| &self.fields[i])
    }

    /// Lookup of a user-written reference: an unqualified name matches any
    /// field with that name and must be unique.
    pub fn resolve(&self, r: &ColumnRef) -> Result<usize, ResolveError> {
        let mut hits = self.fields.iter().enumerate().filter(|(_, f)| {
            f.name == r.name && (r.qualifier.is_none() || f.qualifier == r.qualifier)
        });
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => Ok(i),
            (None, _) => Err(ResolveError::Unknown(r.to_string())),
            (Some(_), Some(_)) => Err(ResolveError::Ambiguous(r.to_string())),
        }
    }

    pub fn concat(&self, other: &PlanSchema) -> PlanSchema {
        let mut fields = self.fields.clone();
        fields.extend(other.fields.iter().cloned());
        PlanSchema { fields }
    }

    /// Output names: the bare name when unique, `qualifier.name` otherwise.
    pub fn output_names(&self) -> Vec<String> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for f in &self.fields {
            *counts.entry(f.name.as_str()).or_default() += 1;
        }
        self.fields
            .iter()
            .map(|f| match (&f.qualifier, counts[f.name.as_str()]) {
                (Some(q), n) if n > 1 => format!("{q}.{}", f.name),
                _ => f.name.clone(),
            })
            .collect()
    }

    /// Relation schema for results produced under this plan schema.
    pub fn to_schema(&self) -> Schema {
        let cols = self
            .output_names()
            .into_iter()
            .zip(&self.fields)
            .map(|(n, f)| Column::new(n, f.ty))
            .collect();
        // output names can still collide for computed columns; fall back to
        // positional suffixes so the relation schema stays valid
        Schema::new(cols).unwrap_or_else(|_| {
            let mut seen = std::collections::HashSet::new();
            let cols = self
                .output_names()
                .into_iter()
                .zip(&self.fields)
                .enumerate()
                .map(|(i, (n, f))| {
                    let n = if seen.insert(n.clone()) {
                        n
                    } else {
                        format!("{n}_{i}")
                    };
                    Column::new(n, f.ty)
                })
                .collect();
            Schema::new(cols).expect("suffixed names are unique")
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCall {
    pub func: AggFunc,
    /// `None` for `COUNT(*)`.
    pub arg: Option<Expr>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortKey {
    pub column: ColumnRef,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogicalPlan {
    Scan {
        table: String,
        alias: String,
        schema: PlanSchema,
    },
    Filter {
        input: Box<LogicalPlan>,
        predicate: Expr,
    },
    Project {
        input: Box<LogicalPlan>,
        exprs: Vec<Expr>,
        /// Output identity of each expression.
        aliases: Vec<ColumnRef>,
    },
    Join {
        left: Box<LogicalPlan>,
        right: Box<LogicalPlan>,
        /// `(left column, right column)` equality pairs.
        on: Vec<(ColumnRef, ColumnRef)>,
    },
    /// Emits group columns, then aggregates, then `grouping_id`.
    Aggregate {
        input: Box<LogicalPlan>,
        group_by: Vec<ColumnRef>,
        mode: GroupingMode,
        aggregates: Vec<AggregateCall>,
    },
    Sort {
        input: Box<LogicalPlan>,
        keys: Vec<SortKey>,
    },
    Limit {
        input: Box<LogicalPlan>,
        n: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemaCheckError {
    Resolve(ResolveError),
    Type(ExprTypeError),
}

impl From<ExprTypeError> for SchemaCheckError {
    fn from(e: ExprTypeError) -> Self {
        SchemaCheckError::Type(e)
    }
}

impl fmt::Display for SchemaCheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaCheckError::Resolve(ResolveError::Unknown(c)) => {
                write!(f, "unknown column `{c}`")
            }
            SchemaCheckError::Resolve(ResolveError::Ambiguous(c)) => {
                write!(f, "ambiguous column `{c}`")
            }
            SchemaCheckError::Type(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SchemaCheckError {}

pub(crate) fn exact_type(
    schema: &PlanSchema,
) -> impl FnMut(&ColumnRef) -> Result<ColumnType, SchemaCheckError> + '_ {
    move |c| {
        schema
            .field(c)
            .map(|f| f.ty)
            .ok_or_else(|| SchemaCheckError::Resolve(ResolveError::Unknown(c.to_string())))
    }
}

impl LogicalPlan {
    pub fn scan(table: &str, alias: &str, schema: &Schema) -> LogicalPlan {
        LogicalPlan::Scan {
            table: table.to_string(),
            alias: alias.to_string(),
            schema: PlanSchema::new(
                schema
                    .columns()
                    .iter()
                    .map(|c| Field {
                        qualifier: Some(alias.to_string()),
                        name: c.name.clone(),
                        ty: c.ty,
                    })
                    .collect(),
            ),
        }
    }

    /// Output schema, checking that every reference resolves exactly.
    pub fn try_schema(&self) -> Result<PlanSchema, SchemaCheckError> {
        Ok(match self {
            LogicalPlan::Scan { schema, .. } => schema.clone(),
            LogicalPlan::Filter { input, predicate } => {
                let s = input.try_schema()?;
                predicate.infer_type(&mut exact_type(&s))?;
                s
            }
            LogicalPlan::Project {
                input,
                exprs,
                aliases,
            } => {
                let s = input.try_schema()?;
                let mut fields = Vec::with_capacity(exprs.len());
                for (e, a) in exprs.iter().zip(aliases) {
                    let ty = e
                        .infer_type(&mut exact_type(&s))?
                        .unwrap_or(ColumnType::Int64);
                    fields.push(Field {
                        qualifier: a.qualifier.clone(),
                        name: a.name.clone(),
                        ty,
                    });
                }
                PlanSchema::new(fields)
            }
            LogicalPlan::Join { left, right, on } => {
                let l = left.try_schema()?;
                let r = right.try_schema()?;
                for (a, b) in on {
                    exact_type(&l)(a)?;
                    exact_type(&r)(b)?;
                }
                l.concat(&r)
            }
            LogicalPlan::Aggregate {
                input,
                group_by,
                aggregates,
                ..
            } => {
                let s = input.try_schema()?;
                let mut fields = Vec::new();
                for g in group_by {
                    let f = s.field(g).ok_or_else(|| {
                        SchemaCheckError::Resolve(ResolveError::Unknown(g.to_string()))
                    })?;
                    fields.push(f.clone());
                }
                for a in aggregates {
                    let arg_ty = match &a.arg {
                        Some(e) => e.infer_type(&mut exact_type(&s))?,
                        None => None,
                    };
                    fields.push(Field {
                        qualifier: None,
                        name: a.output.clone(),
                        ty: a.func.result_type(arg_ty)?,
                    });
                }
                fields.push(Field {
                    qualifier: None,
                    name: GROUPING_ID.to_string(),
                    ty: ColumnType::Int64,
                });
                PlanSchema::new(fields)
            }
            LogicalPlan::Sort { input, keys } => {
                let s = input.try_schema()?;
                for k in keys {
                    exact_type(&s)(&k.column)?;
                }
                s
            }
            LogicalPlan::Limit { input, .. } => input.try_schema()?,
        })
    }

    /// Output schema of a valid plan.
    pub fn schema(&self) -> PlanSchema {
        self.try_schema().expect("plan references resolve")
    }

    pub fn children(&self) -> Vec<&LogicalPlan> {
        match self {
            LogicalPlan::Scan { .. } => vec![],
            LogicalPlan::Join { left, right, .. } => vec![left, right],
            LogicalPlan::Filter { input, .. }
            | LogicalPlan::Project { input, .. }
            | LogicalPlan::Aggregate { input, .. }
            | LogicalPlan::Sort { input, .. }
            | LogicalPlan::Limit { input, .. } => vec![input],
        }
    }

    /// `(table, alias)` of every scan, left to right.
    pub fn scans(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        fn walk<'a>(p: &'a LogicalPlan, out: &mut Vec<(&'a str, &'a str)>) {
            if let LogicalPlan::Scan { table, alias, .. } = p {
                out.push((table, alias));
            }
            for c in p.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn node_name(&self) -> &'static str {
        match self {
            LogicalPlan::Scan { .. } => "Scan",
            LogicalPlan::Filter { .. } => "Filter",
            LogicalPlan::Project { .. } => "Project",
            LogicalPlan::Join { .. } => "Join",
            LogicalPlan::Aggregate { .. } => "Aggregate",
            LogicalPlan::Sort { .. } => "Sort",
            LogicalPlan::Limit { .. } => "Limit",
        }
    }

    fn fmt_indent(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match self {
            LogicalPlan::Scan { table, alias, .. } if table == alias => {
                writeln!(f, "{pad}Scan: {table}")?
            }
            LogicalPlan::Scan { table, alias, .. } => writeln!(f, "{pad}Scan: {table} AS {alias}")?,
            LogicalPlan::Filter { predicate, .. } => writeln!(f, "{pad}Filter: {predicate}")?,
            LogicalPlan::Project { exprs, aliases, .. } => {
                let items: Vec<String> = exprs
                    .iter()
                    .zip(aliases)
                    .map(|(e, a)| match e {
                        Expr::Column(c) if c == a => e.to_string(),
                        _ => format!("{e} AS {a}"),
                    })
                    .collect();
                writeln!(f, "{pad}Project: {}", items.join(", "))?
            }
            LogicalPlan::Join { on, .. } => {
                let items: Vec<String> = on.iter().map(|(l, r)| format!("{l} = {r}")).collect();
                writeln!(f, "{pad}Join: {}", items.join(" AND "))?
            }
            LogicalPlan::Aggregate {
                group_by,
                mode,
                aggregates,
                ..
            } => {
                let g: Vec<String> = group_by.iter().map(ToString::to_string).collect();
                let a: Vec<String> = aggregates
                    .iter()
                    .map(|a| match &a.arg {
                        Some(e) => format!("{}({e}) AS {}", a.func.name(), a.output),
                        None => format!("{}(*) AS {}", a.func.name(), a.output),
                    })
                    .collect();
                writeln!(
                    f,
                    "{pad}Aggregate[{mode:?}]: group=[{}] aggs=[{}]",
                    g.join(", "),
                    a.join(", ")
                )?
            }
            LogicalPlan::Sort { keys, .. } => {
                let k: Vec<String> = keys
                    .iter()
                    .map(|k| format!("{}{}", k.column, if k.descending { " DESC" } else { "" }))
                    .collect();
                writeln!(f, "{pad}Sort: {}", k.join(", "))?
            }
            LogicalPlan::Limit { n, .. } => writeln!(f, "{pad}Limit: {n}")?,
        }
        for c in self.children() {
            c.fmt_indent(f, depth + 1)?;
        }
        Ok(())
    }
}

impl fmt::Display for LogicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indent(f, 0)
    }
}
