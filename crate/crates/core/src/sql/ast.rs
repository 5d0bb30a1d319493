//! Syntax tree of a query and its canonical printer.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{write_ident, ColumnRef, Expr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupingMode {
    Plain,
    Rollup,
    Cube,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRef {
    pub name: String,
    pub alias: Option<String>,
}

impl TableRef {
    /// The name columns of this table are qualified with.
    pub fn binding(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinClause {
    pub table: TableRef,
    /// Equality pairs joined by `AND` in the `ON` clause.
    pub on: Vec<(ColumnRef, ColumnRef)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupBy {
    pub columns: Vec<ColumnRef>,
    pub mode: GroupingMode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderItem {
    pub column: ColumnRef,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub projection: Vec<SelectItem>,
    pub from: TableRef,
    pub joins: Vec<JoinClause>,
    pub selection: Option<Expr>,
    pub group_by: Option<GroupBy>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
}

fn write_table(f: &mut fmt::Formatter<'_>, t: &TableRef) -> fmt::Result {
    write_ident(f, &t.name)?;
    if let Some(a) = &t.alias {
        f.write_str(" AS ")?;
        write_ident(f, a)?;
    }
    Ok(())
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        for (i, item) in self.projection.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match item {
                SelectItem::Wildcard => f.write_str("*")?,
                SelectItem::Expr { expr, alias } => {
                    write!(f, "{expr}")?;
                    if let Some(a) = alias {
                        f.write_str(" AS ")?;
                        write_ident(f, a)?;
                    }
                }
            }
        }
        f.write_str(" FROM ")?;
        write_table(f, &self.from)?;
        for j in &self.joins {
            f.write_str(" JOIN ")?;
            write_table(f, &j.table)?;
            f.write_str(" ON ")?;
            for (i, (l, r)) in j.on.iter().enumerate() {
                if i > 0 {
                    f.write_str(" AND ")?;
                }
                write!(f, "{l} = {r}")?;
            }
        }
        if let Some(w) = &self.selection {
            write!(f, " WHERE {w}")?;
        }
        if let Some(g) = &self.group_by {
            f.write_str(" GROUP BY ")?;
            for (i, c) in g.columns.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{c}")?;
            }
            match g.mode {
                GroupingMode::Plain => {}
                GroupingMode::Rollup => f.write_str(" WITH ROLLUP")?,
                GroupingMode::Cube => f.write_str(" WITH CUBE")?,
            }
        }
        if !self.order_by.is_empty() {
            f.write_str(" ORDER BY ")?;
            for (i, o) in self.order_by.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", o.column)?;
                if o.descending {
                    f.write_str(" DESC")?;
                }
            }
        }
        if let Some(n) = self.limit {
            write!(f, " LIMIT {n}")?;
        }
        Ok(())
    }
}
