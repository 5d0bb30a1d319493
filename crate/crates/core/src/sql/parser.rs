//! Recursive-descent parser producing a [`Query`].

use super::ast::{GroupBy, GroupingMode, JoinClause, OrderItem, Query, SelectItem, TableRef};
use super::lexer::{tokenize, Token, TokenKind};
use super::SyntaxError;
use crate::expr::{AggFunc, BinaryOp, ColumnRef, Expr, UnaryOp};
use crate::types::Value;

const MAX_DEPTH: usize = 64;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

type PResult<T> = Result<T, SyntaxError>;

/// Parses one query. Every input yields either a query or a positioned error.
pub fn parse_sql(text: &str) -> Result<Query, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    let q = p.query()?;
    if p.peek() == &TokenKind::Semicolon {
        p.advance();
    }
    if p.peek() != &TokenKind::Eof {
        return Err(p.error("expected end of query"));
    }
    Ok(q)
}

impl Parser {
    fn peek(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn peek_at(&self, offset: usize) -> &TokenKind {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn advance(&mut self) -> TokenKind {
        let t = self.tokens[self.pos].kind.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: &str) -> SyntaxError {
        let t = &self.tokens[self.pos];
        SyntaxError {
            line: t.line,
            column: t.column,
            token: t.kind.to_string(),
            message: message.to_string(),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), TokenKind::Keyword(k) if *k == kw)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {kw}")))
        }
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<()> {
        if self.peek() == &kind {
            self.advance();
            Ok(())
        } else {
            Err(self.error(&format!("expected `{kind}`")))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            TokenKind::Ident(s) | TokenKind::QuotedIdent(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn at_ident(&self) -> bool {
        matches!(self.peek(), TokenKind::Ident(_) | TokenKind::QuotedIdent(_))
    }

    fn column_ref(&mut self) -> PResult<ColumnRef> {
        let first = self.ident()?;
        if self.peek() == &TokenKind::Dot {
            self.advance();
            let name = self.ident()?;
            Ok(ColumnRef::qualified(first, name))
        } else {
            Ok(ColumnRef::new(first))
        }
    }

    fn query(&mut self) -> PResult<Query> {
        self.expect_keyword("SELECT")?;
        let mut projection = vec![self.select_item()?];
        while self.peek() == &TokenKind::Comma {
            self.advance();
            projection.push(self.select_item()?);
        }
        self.expect_keyword("FROM")?;
        let from = self.table_ref()?;

        let mut joins = Vec::new();
        loop {
            if self.eat_keyword("INNER") {
                self.expect_keyword("JOIN")?;
            } else if !self.eat_keyword("JOIN") {
                break;
            }
            let table = self.table_ref()?;
            self.expect_keyword("ON")?;
            let mut on = vec![self.equi_pair()?];
            while self.eat_keyword("AND") {
                on.push(self.equi_pair()?);
            }
            joins.push(JoinClause { table, on });
        }

        let selection = if self.eat_keyword("WHERE") {
            Some(self.expr()?)
        } else {
            None
        };

        let group_by = if self.eat_keyword("GROUP") {
            self.expect_keyword("BY")?;
            let mut columns = vec![self.column_ref()?];
            while self.peek() == &TokenKind::Comma {
                self.advance();
                columns.push(self.column_ref()?);
            }
            let mode = if self.eat_keyword("WITH") {
                if self.eat_keyword("ROLLUP") {
                    GroupingMode::Rollup
                } else if self.eat_keyword("CUBE") {
                    GroupingMode::Cube
                } else {
                    return Err(self.error("expected ROLLUP or CUBE"));
                }
            } else {
                GroupingMode::Plain
            };
            Some(GroupBy { columns, mode })
        } else {
            None
        };

        let mut order_by = Vec::new();
        if self.eat_keyword("ORDER") {
            self.expect_keyword("BY")?;
            loop {
                let column = self.column_ref()?;
                let descending = if self.eat_keyword("DESC") {
                    true
                } else {
                    self.eat_keyword("ASC");
                    false
                };
                order_by.push(OrderItem { column, descending });
                if self.peek() != &TokenKind::Comma {
                    break;
                }
                self.advance();
            }
        }

        let limit = if self.eat_keyword("LIMIT") {
            match self.peek().clone() {
                TokenKind::Number(n) => match n.parse::<u64>() {
                    Ok(v) => {
                        self.advance();
                        Some(v)
                    }
                    Err(_) => return Err(self.error("LIMIT expects a non-negative integer")),
                },
                _ => return Err(self.error("LIMIT expects a non-negative integer")),
            }
        } else {
            None
        };

        Ok(Query {
            projection,
            from,
            joins,
            selection,
            group_by,
            order_by,
            limit,
        })
    }

    fn select_item(&mut self) -> PResult<SelectItem> {
        if self.peek() == &TokenKind::Star {
            self.advance();
            return Ok(SelectItem::Wildcard);
        }
        let expr = self.expr()?;
        let alias = if self.eat_keyword("AS") {
            Some(self.ident()?)
        } else {
            None
        };
        Ok(SelectItem::Expr { expr, alias })
    }

    fn table_ref(&mut self) -> PResult<TableRef> {
        let name = self.ident()?;
        let alias = if self.eat_keyword("AS") || self.at_ident() {
            Some(self.ident()?)
        } else {
            None
        };
        Ok(TableRef { name, alias })
    }

    fn equi_pair(&mut self) -> PResult<(ColumnRef, ColumnRef)> {
        let l = self.column_ref()?;
        if self.peek() != &TokenKind::Eq {
            return Err(self.error("join conditions must be column = column"));
        }
        self.advance();
        let r = self.column_ref()?;
        Ok((l, r))
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(self.error("expression nested too deeply"))
        } else {
            Ok(())
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let e = self.or_expr();
        self.depth -= 1;
        e
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut left = self.and_expr()?;
        while self.eat_keyword("OR") {
            let right = self.and_expr()?;
            left = Expr::binary(BinaryOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut left = self.not_expr()?;
        while self.eat_keyword("AND") {
            let right = self.not_expr()?;
            left = Expr::binary(BinaryOp::And, left, right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat_keyword("NOT") {
            self.enter()?;
            let inner = self.not_expr();
            self.depth -= 1;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                expr: Box::new(inner?),
            });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let left = self.additive()?;
        let op = match self.peek() {
            TokenKind::Eq => BinaryOp::Eq,
            TokenKind::NotEq => BinaryOp::NotEq,
            TokenKind::Lt => BinaryOp::Lt,
            TokenKind::LtEq => BinaryOp::LtEq,
            TokenKind::Gt => BinaryOp::Gt,
            TokenKind::GtEq => BinaryOp::GtEq,
            _ => return Ok(left),
        };
        self.advance();
        let right = self.additive()?;
        if matches!(
            self.peek(),
            TokenKind::Eq
                | TokenKind::NotEq
                | TokenKind::Lt
                | TokenKind::LtEq
                | TokenKind::Gt
                | TokenKind::GtEq
        ) {
            return Err(self.error("comparison operators do not chain; add parentheses"));
        }
        Ok(Expr::binary(op, left, right))
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                TokenKind::Plus => BinaryOp::Plus,
                TokenKind::Minus => BinaryOp::Minus,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.multiplicative()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                TokenKind::Star => BinaryOp::Multiply,
                TokenKind::Slash => BinaryOp::Divide,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.unary()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.peek() != &TokenKind::Minus {
            return self.primary();
        }
        if let TokenKind::Number(text) = self.peek_at(1).clone() {
            self.advance();
            let lit = self.number(&format!("-{text}"))?;
            self.advance();
            return Ok(Expr::Literal(lit));
        }
        self.advance();
        self.enter()?;
        let inner = self.unary();
        self.depth -= 1;
        Ok(Expr::Unary {
            op: UnaryOp::Neg,
            expr: Box::new(inner?),
        })
    }

    fn number(&self, text: &str) -> PResult<Value> {
        if text.contains(['.', 'e', 'E']) {
            text.parse::<f64>()
                .map(Value::Float64)
                .map_err(|_| self.error("malformed number"))
        } else {
            text.parse::<i64>()
                .map(Value::Int64)
                .map_err(|_| self.error("integer literal out of range"))
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            TokenKind::Number(text) => {
                let v = self.number(&text)?;
                self.advance();
                Ok(Expr::Literal(v))
            }
            TokenKind::String(s) => {
                self.advance();
                Ok(Expr::Literal(Value::Utf8(s)))
            }
            TokenKind::Keyword("TRUE") => {
                self.advance();
                Ok(Expr::Literal(Value::Bool(true)))
            }
            TokenKind::Keyword("FALSE") => {
                self.advance();
                Ok(Expr::Literal(Value::Bool(false)))
            }
            TokenKind::Keyword("NULL") => {
                self.advance();
                Ok(Expr::Literal(Value::Null))
            }
            TokenKind::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            TokenKind::Ident(name) if self.peek_at(1) == &TokenKind::LParen => {
                let Some(func) = AggFunc::from_name(&name) else {
                    return Err(self.error("unknown function"));
                };
                self.advance();
                self.advance();
                let arg = if self.peek() == &TokenKind::Star {
                    if func != AggFunc::Count {
                        return Err(self.error("only COUNT accepts `*`"));
                    }
                    self.advance();
                    None
                } else {
                    Some(Box::new(self.expr()?))
                };
                self.expect(TokenKind::RParen)?;
                Ok(Expr::Aggregate { func, arg })
            }
            TokenKind::Ident(_) | TokenKind::QuotedIdent(_) => Ok(Expr::Column(self.column_ref()?)),
            _ => Err(self.error("expected expression")),
        }
    }
}
