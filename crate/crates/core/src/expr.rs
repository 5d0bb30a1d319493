//! Scalar and aggregate expressions, type inference and evaluation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ColumnType, IncomparableTypes, Schema, Value};

/// A possibly qualified column reference (`name` or `table.name`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub name: String,
}

impl ColumnRef {
    pub fn new(name: impl Into<String>) -> Self {
        ColumnRef {
            qualifier: None,
            name: name.into(),
        }
    }

    pub fn qualified(qualifier: impl Into<String>, name: impl Into<String>) -> Self {
        ColumnRef {
            qualifier: Some(qualifier.into()),
            name: name.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(q) = &self.qualifier {
            write_ident(f, q)?;
            f.write_str(".")?;
        }
        write_ident(f, &self.name)
    }
}

/// Writes an identifier, double-quoting it when it is not a plain word.
pub(crate) fn write_ident(f: &mut impl fmt::Write, ident: &str) -> fmt::Result {
    let plain = ident
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && ident.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !crate::sql::lexer::is_keyword(ident);
    if plain {
        f.write_str(ident)
    } else {
        write!(f, "\"{}\"", ident.replace('"', "\"\""))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Plus,
    Minus,
    Multiply,
    Divide,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Plus => "+",
            BinaryOp::Minus => "-",
            BinaryOp::Multiply => "*",
            BinaryOp::Divide => "/",
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            BinaryOp::Plus | BinaryOp::Minus | BinaryOp::Multiply | BinaryOp::Divide
        )
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq
                | BinaryOp::NotEq
                | BinaryOp::Lt
                | BinaryOp::LtEq
                | BinaryOp::Gt
                | BinaryOp::GtEq
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinaryOp::And | BinaryOp::Or)
    }

    /// The operator with its operands swapped (`a < b` ⇔ `b > a`).
    pub fn flip(self) -> BinaryOp {
        match self {
            BinaryOp::Lt => BinaryOp::Gt,
            BinaryOp::LtEq => BinaryOp::GtEq,
            BinaryOp::Gt => BinaryOp::Lt,
            BinaryOp::GtEq => BinaryOp::LtEq,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }

    pub fn from_name(name: &str) -> Option<AggFunc> {
        match name.to_ascii_uppercase().as_str() {
            "COUNT" => Some(AggFunc::Count),
            "SUM" => Some(AggFunc::Sum),
            "AVG" => Some(AggFunc::Avg),
            "MIN" => Some(AggFunc::Min),
            "MAX" => Some(AggFunc::Max),
            _ => None,
        }
    }

    /// Result type for an argument of type `arg` (`None` for `COUNT(*)` or
    /// an untyped `NULL` argument).
    pub fn result_type(self, arg: Option<ColumnType>) -> Result<ColumnType, ExprTypeError> {
        match (self, arg) {
            (AggFunc::Count, _) => Ok(ColumnType::Int64),
            (AggFunc::Avg, None) => Ok(ColumnType::Float64),
            (AggFunc::Avg, Some(t)) if t.is_numeric() => Ok(ColumnType::Float64),
            (AggFunc::Sum, None) => Ok(ColumnType::Int64),
            (AggFunc::Sum, Some(t)) if t.is_numeric() => Ok(t),
            (AggFunc::Min | AggFunc::Max, Some(t)) => Ok(t),
            (AggFunc::Min | AggFunc::Max, None) => Ok(ColumnType::Int64),
            (f, Some(t)) => Err(ExprTypeError::Aggregate {
                func: f.name(),
                arg: t,
            }),
        }
    }
}

/// Expression tree shared by the SQL front end, planner and executor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Column(ColumnRef),
    Literal(Value),
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        expr: Box<Expr>,
    },
    /// `arg == None` is `COUNT(*)`.
    Aggregate {
        func: AggFunc,
        arg: Option<Box<Expr>>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprTypeError {
    #[error("operator {op} cannot be applied to {left} and {right}")]
    Binary {
        op: &'static str,
        left: String,
        right: String,
    },
    #[error("operator {op} cannot be applied to {operand}")]
    Unary { op: &'static str, operand: String },
    #[error("{func} cannot be applied to {arg}")]
    Aggregate { func: &'static str, arg: ColumnType },
    #[error("aggregate functions cannot be nested")]
    NestedAggregate,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unresolved column `{0}`")]
    UnresolvedColumn(String),
    #[error("type mismatch: {op} applied to {left} and {right}")]
    TypeMismatch {
        op: &'static str,
        left: String,
        right: String,
    },
    #[error("integer division by zero")]
    DivisionByZero,
    #[error("integer overflow in {0}")]
    Overflow(&'static str),
    #[error("aggregate function in scalar context")]
    AggregateInScalarContext,
}

fn type_label(t: Option<ColumnType>) -> String {
    t.map_or_else(|| "NULL".to_string(), |t| t.to_string())
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        match name.split_once('.') {
            Some((q, n)) => Expr::Column(ColumnRef::qualified(q, n)),
            None => Expr::Column(ColumnRef::new(name)),
        }
    }

    pub fn lit(v: impl Into<Value>) -> Expr {
        Expr::Literal(v.into())
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn and(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::And, self, other)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Expr {
        Expr::Unary {
            op: UnaryOp::Not,
            expr: Box::new(self),
        }
    }

    /// Visits every node, parents before children.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Binary { left, right, .. } => {
                left.visit(f);
                right.visit(f);
            }
            Expr::Unary { expr, .. } => expr.visit(f),
            Expr::Aggregate { arg: Some(a), .. } => a.visit(f),
            _ => {}
        }
    }

    pub fn column_refs(&self) -> Vec<&ColumnRef> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Column(c) = e {
                out.push(c);
            }
        });
        out
    }

    pub fn contains_aggregate(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Aggregate { .. }));
        found
    }

    /// Rewrites bottom-up: `f` sees each node after its children were rewritten.
    pub fn transform<E>(self, f: &mut impl FnMut(Expr) -> Result<Expr, E>) -> Result<Expr, E> {
        let rebuilt = match self {
            Expr::Binary { op, left, right } => Expr::Binary {
                op,
                left: Box::new(left.transform(f)?),
                right: Box::new(right.transform(f)?),
            },
            Expr::Unary { op, expr } => Expr::Unary {
                op,
                expr: Box::new(expr.transform(f)?),
            },
            Expr::Aggregate { func, arg } => Expr::Aggregate {
                func,
                arg: match arg {
                    Some(a) => Some(Box::new(a.transform(f)?)),
                    None => None,
                },
            },
            leaf => leaf,
        };
        f(rebuilt)
    }

    /// Rewrites every column reference through `f`.
    pub fn map_columns<E>(
        &self,
        f: &mut impl FnMut(&ColumnRef) -> Result<ColumnRef, E>,
    ) -> Result<Expr, E> {
        self.clone().transform(&mut |e| match e {
            Expr::Column(c) => Ok(Expr::Column(f(&c)?)),
            other => Ok(other),
        })
    }

    /// Splits nested `AND`s into their conjuncts.
    pub fn split_conjunction(self) -> Vec<Expr> {
        match self {
            Expr::Binary {
                op: BinaryOp::And,
                left,
                right,
            } => {
                let mut v = left.split_conjunction();
                v.extend(right.split_conjunction());
                v
            }
            e => vec![e],
        }
    }

    pub fn conjunction(exprs: impl IntoIterator<Item = Expr>) -> Option<Expr> {
        exprs.into_iter().reduce(Expr::and)
    }

    /// Static type, `None` for an untyped `NULL`. Column types come from
    /// `resolve`.
    pub fn infer_type<E: From<ExprTypeError>>(
        &self,
        resolve: &mut impl FnMut(&ColumnRef) -> Result<ColumnType, E>,
    ) -> Result<Option<ColumnType>, E> {
        self.infer_type_inner(resolve, false)
    }

    fn infer_type_inner<E: From<ExprTypeError>>(
        &self,
        resolve: &mut impl FnMut(&ColumnRef) -> Result<ColumnType, E>,
        in_aggregate: bool,
    ) -> Result<Option<ColumnType>, E> {
        match self {
            Expr::Column(c) => Ok(Some(resolve(c)?)),
            Expr::Literal(v) => Ok(v.data_type()),
            Expr::Unary { op, expr } => {
                let t = expr.infer_type_inner(resolve, in_aggregate)?;
                match (op, t) {
                    (UnaryOp::Not, None | Some(ColumnType::Bool)) => Ok(Some(ColumnType::Bool)),
                    (UnaryOp::Neg, None) => Ok(None),
                    (UnaryOp::Neg, Some(t)) if t.is_numeric() => Ok(Some(t)),
                    (op, t) => Err(ExprTypeError::Unary {
                        op: if *op == UnaryOp::Not { "NOT" } else { "-" },
                        operand: type_label(t),
                    }
                    .into()),
                }
            }
            Expr::Binary { op, left, right } => {
                let l = left.infer_type_inner(resolve, in_aggregate)?;
                let r = right.infer_type_inner(resolve, in_aggregate)?;
                let mismatch = || ExprTypeError::Binary {
                    op: op.symbol(),
                    left: type_label(l),
                    right: type_label(r),
                };
                if op.is_arithmetic() {
                    match (l, r) {
                        (None, None) => Ok(None),
                        (Some(t), None) | (None, Some(t)) if t.is_numeric() => Ok(Some(t)),
                        (Some(ColumnType::Int64), Some(ColumnType::Int64)) => {
                            Ok(Some(ColumnType::Int64))
                        }
                        (Some(a), Some(b)) if a.is_numeric() && b.is_numeric() => {
                            Ok(Some(ColumnType::Float64))
                        }
                        _ => Err(mismatch().into()),
                    }
                } else if op.is_comparison() {
                    match (l, r) {
                        (None, _) | (_, None) => Ok(Some(ColumnType::Bool)),
                        (Some(a), Some(b)) if a == b || (a.is_numeric() && b.is_numeric()) => {
                            Ok(Some(ColumnType::Bool))
                        }
                        _ => Err(mismatch().into()),
                    }
                } else {
                    match (l, r) {
                        (None | Some(ColumnType::Bool), None | Some(ColumnType::Bool)) => {
                            Ok(Some(ColumnType::Bool))
                        }
                        _ => Err(mismatch().into()),
                    }
                }
            }
            Expr::Aggregate { func, arg } => {
                if in_aggregate {
                    return Err(ExprTypeError::NestedAggregate.into());
                }
                let t = match arg {
                    Some(a) => a.infer_type_inner(resolve, true)?,
                    None => None,
                };
                Ok(Some(func.result_type(t)?))
            }
        }
    }

    /// Replaces column references with positions, producing an evaluable
    /// expression. Aggregates are rejected.
    pub fn bind<E: From<EvalError>>(
        &self,
        resolve: &mut impl FnMut(&ColumnRef) -> Result<usize, E>,
    ) -> Result<BoundExpr, E> {
        Ok(match self {
            Expr::Column(c) => BoundExpr::Column(resolve(c)?),
            Expr::Literal(v) => BoundExpr::Literal(v.clone()),
            Expr::Binary { op, left, right } => BoundExpr::Binary {
                op: *op,
                left: Box::new(left.bind(resolve)?),
                right: Box::new(right.bind(resolve)?),
            },
            Expr::Unary { op, expr } => BoundExpr::Unary {
                op: *op,
                expr: Box::new(expr.bind(resolve)?),
            },
            Expr::Aggregate { .. } => return Err(EvalError::AggregateInScalarContext.into()),
        })
    }

    /// Name a select item gets when it carries no alias.
    pub fn output_name(&self) -> String {
        match self {
            Expr::Column(c) => c.name.clone(),
            other => other.to_string(),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int64(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float64(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Utf8(v.to_string())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => write!(f, "{c}"),
            Expr::Literal(v) => f.write_str(&v.to_sql_literal()),
            Expr::Binary { op, left, right } => write!(f, "({left} {} {right})", op.symbol()),
            Expr::Unary {
                op: UnaryOp::Not,
                expr,
            } => write!(f, "(NOT {expr})"),
            Expr::Unary {
                op: UnaryOp::Neg,
                expr,
            } => write!(f, "(-({expr}))"),
            Expr::Aggregate { func, arg: None } => write!(f, "{}(*)", func.name()),
            Expr::Aggregate { func, arg: Some(a) } => write!(f, "{}({a})", func.name()),
        }
    }
}

/// An expression whose column references are row positions.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundExpr {
    Column(usize),
    Literal(Value),
    Binary {
        op: BinaryOp,
        left: Box<BoundExpr>,
        right: Box<BoundExpr>,
    },
    Unary {
        op: UnaryOp,
        expr: Box<BoundExpr>,
    },
}

fn mismatch(op: BinaryOp, l: &Value, r: &Value) -> EvalError {
    EvalError::TypeMismatch {
        op: op.symbol(),
        left: type_label(l.data_type()),
        right: type_label(r.data_type()),
    }
}

fn arith(op: BinaryOp, l: Value, r: Value) -> Result<Value, EvalError> {
    if l.is_null() || r.is_null() {
        return Ok(Value::Null);
    }
    match (&l, &r) {
        (Value::Int64(a), Value::Int64(b)) => {
            let (a, b) = (*a, *b);
            let out = match op {
                BinaryOp::Plus => a.checked_add(b).ok_or(EvalError::Overflow("+"))?,
                BinaryOp::Minus => a.checked_sub(b).ok_or(EvalError::Overflow("-"))?,
                BinaryOp::Multiply => a.checked_mul(b).ok_or(EvalError::Overflow("*"))?,
                BinaryOp::Divide => {
                    if b == 0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    a.checked_div(b).ok_or(EvalError::Overflow("/"))?
                }
                _ => unreachable!("not arithmetic"),
            };
            Ok(Value::Int64(out))
        }
        _ => match (l.as_f64(), r.as_f64()) {
            (Some(a), Some(b)) => Ok(Value::Float64(match op {
                BinaryOp::Plus => a + b,
                BinaryOp::Minus => a - b,
                BinaryOp::Multiply => a * b,
                BinaryOp::Divide => a / b,
                _ => unreachable!("not arithmetic"),
            })),
            _ => Err(mismatch(op, &l, &r)),
        },
    }
}

fn compare(op: BinaryOp, l: &Value, r: &Value) -> Result<Value, EvalError> {
    use std::cmp::Ordering::*;
    let ord = l
        .sql_cmp(r)
        .map_err(|IncomparableTypes { .. }| mismatch(op, l, r))?;
    Ok(match ord {
        None => Value::Null,
        Some(o) => Value::Bool(match op {
            BinaryOp::Eq => o == Equal,
            BinaryOp::NotEq => o != Equal,
            BinaryOp::Lt => o == Less,
            BinaryOp::LtEq => o != Greater,
            BinaryOp::Gt => o == Greater,
            BinaryOp::GtEq => o != Less,
            _ => unreachable!("not a comparison"),
        }),
    })
}

fn as_truth(op: BinaryOp, v: &Value, other: &Value) -> Result<Option<bool>, EvalError> {
    match v {
        Value::Bool(b) => Ok(Some(*b)),
        Value::Null => Ok(None),
        _ => Err(mismatch(op, v, other)),
    }
}

impl BoundExpr {
    pub fn eval(&self, row: &[Value]) -> Result<Value, EvalError> {
        match self {
            BoundExpr::Column(i) => row
                .get(*i)
                .cloned()
                .ok_or_else(|| EvalError::UnresolvedColumn(format!("#{i}"))),
            BoundExpr::Literal(v) => Ok(v.clone()),
            BoundExpr::Unary { op, expr } => {
                let v = expr.eval(row)?;
                match (op, v) {
                    (_, Value::Null) => Ok(Value::Null),
                    (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                    (UnaryOp::Neg, Value::Int64(i)) => i
                        .checked_neg()
                        .map(Value::Int64)
                        .ok_or(EvalError::Overflow("-")),
                    (UnaryOp::Neg, Value::Float64(x)) => Ok(Value::Float64(-x)),
                    (op, v) => Err(EvalError::TypeMismatch {
                        op: if *op == UnaryOp::Not { "NOT" } else { "-" },
                        left: type_label(v.data_type()),
                        right: String::new(),
                    }),
                }
            }
            BoundExpr::Binary { op, left, right } => {
                let l = left.eval(row)?;
                let r = right.eval(row)?;
                if op.is_arithmetic() {
                    arith(*op, l, r)
                } else if op.is_comparison() {
                    compare(*op, &l, &r)
                } else {
                    let a = as_truth(*op, &l, &r)?;
                    let b = as_truth(*op, &r, &l)?;
                    let out = match op {
                        BinaryOp::And => match (a, b) {
                            (Some(false), _) | (_, Some(false)) => Some(false),
                            (Some(true), Some(true)) => Some(true),
                            _ => None,
                        },
                        _ => match (a, b) {
                            (Some(true), _) | (_, Some(true)) => Some(true),
                            (Some(false), Some(false)) => Some(false),
                            _ => None,
                        },
                    };
                    Ok(out.map_or(Value::Null, Value::Bool))
                }
            }
        }
    }

    /// Predicate evaluation: only an exact `true` keeps the row.
    pub fn is_true(&self, row: &[Value]) -> Result<bool, EvalError> {
        Ok(matches!(self.eval(row)?, Value::Bool(true)))
    }
}

/// Evaluates an aggregate-free expression against one row. Columns resolve
/// by name (a qualified reference also matches a `table.name` column).
pub fn eval_expression(expr: &Expr, row: &[Value], schema: &Schema) -> Result<Value, EvalError> {
    let bound = expr.bind(&mut |c: &ColumnRef| {
        let direct = schema.index_of(&c.name);
        let qualified = c
            .qualifier
            .as_ref()
            .and_then(|q| schema.index_of(&format!("{q}.{}", c.name)));
        qualified
            .or(direct)
            .ok_or_else(|| EvalError::UnresolvedColumn(c.to_string()))
    })?;
    bound.eval(row)
}
