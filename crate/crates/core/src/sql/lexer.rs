//! Tokenizer for the query language.

use std::fmt;

use super::SyntaxError;

const KEYWORDS: &[&str] = &[
    "SELECT", "FROM", "JOIN", "INNER", "ON", "WHERE", "GROUP", "BY", "WITH", "ROLLUP", "CUBE",
    "ORDER", "ASC", "DESC", "LIMIT", "AND", "OR", "NOT", "AS", "TRUE", "FALSE", "NULL",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Upper-cased reserved word.
    Keyword(&'static str),
    Ident(String),
    /// Double-quoted identifier; never treated as a keyword.
    QuotedIdent(String),
    /// Numeric literal text, parsed by the parser.
    Number(String),
    String(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Semicolon,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Keyword(k) => return f.write_str(k),
            TokenKind::Ident(s) => return f.write_str(s),
            TokenKind::QuotedIdent(s) => return write!(f, "\"{s}\""),
            TokenKind::Number(s) => return f.write_str(s),
            TokenKind::String(s) => return write!(f, "'{s}'"),
            TokenKind::Comma => ",",
            TokenKind::Dot => ".",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
            TokenKind::Star => "*",
            TokenKind::Plus => "+",
            TokenKind::Minus => "-",
            TokenKind::Slash => "/",
            TokenKind::Eq => "=",
            TokenKind::NotEq => "<>",
            TokenKind::Lt => "<",
            TokenKind::LtEq => "<=",
            TokenKind::Gt => ">",
            TokenKind::GtEq => ">=",
            TokenKind::Semicolon => ";",
            TokenKind::Eof => "end of input",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// 1-based.
    pub line: usize,
    /// 1-based, counted in characters.
    pub column: usize,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut cur = Cursor {
        chars: text.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        while cur.peek().is_some_and(char::is_whitespace) {
            cur.bump();
        }
        let (line, column) = (cur.line, cur.column);
        let Some(c) = cur.bump() else {
            out.push(Token {
                kind: TokenKind::Eof,
                line,
                column,
            });
            return Ok(out);
        };
        let err = |token: String, message: &str| SyntaxError {
            line,
            column,
            token,
            message: message.to_string(),
        };
        let kind = match c {
            ',' => TokenKind::Comma,
            '.' => TokenKind::Dot,
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            '*' => TokenKind::Star,
            '+' => TokenKind::Plus,
            '/' => TokenKind::Slash,
            ';' => TokenKind::Semicolon,
            '=' => TokenKind::Eq,
            '-' if cur.peek() == Some('-') => {
                while cur.peek().is_some_and(|c| c != '\n') {
                    cur.bump();
                }
                continue;
            }
            '-' => TokenKind::Minus,
            '!' if cur.peek() == Some('=') => {
                cur.bump();
                TokenKind::NotEq
            }
            '<' => match cur.peek() {
                Some('=') => {
                    cur.bump();
                    TokenKind::LtEq
                }
                Some('>') => {
                    cur.bump();
                    TokenKind::NotEq
                }
                _ => TokenKind::Lt,
            },
            '>' => {
                if cur.peek() == Some('=') {
                    cur.bump();
                    TokenKind::GtEq
                } else {
                    TokenKind::Gt
                }
            }
            '\'' => {
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None => return Err(err(format!("'{s}"), "unterminated string literal")),
                        Some('\'') if cur.peek() == Some('\'') => {
                            cur.bump();
                            s.push('\'');
                        }
                        Some('\'') => break,
                        Some(ch) => s.push(ch),
                    }
                }
                TokenKind::String(s)
            }
            '"' => {
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None => {
                            return Err(err(format!("\"{s}"), "unterminated quoted identifier"))
                        }
                        Some('"') if cur.peek() == Some('"') => {
                            cur.bump();
                            s.push('"');
                        }
                        Some('"') => break,
                        Some(ch) => s.push(ch),
                    }
                }
                if s.is_empty() {
                    return Err(err("\"\"".into(), "empty quoted identifier"));
                }
                TokenKind::QuotedIdent(s)
            }
            c if c.is_ascii_digit() => {
                let mut s = String::from(c);
                while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                    s.push(cur.bump().unwrap());
                }
                if cur.peek() == Some('.') {
                    s.push(cur.bump().unwrap());
                    while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                        s.push(cur.bump().unwrap());
                    }
                }
                if matches!(cur.peek(), Some('e' | 'E')) {
                    s.push(cur.bump().unwrap());
                    if matches!(cur.peek(), Some('+' | '-')) {
                        s.push(cur.bump().unwrap());
                    }
                    if !cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                        return Err(err(s, "malformed number"));
                    }
                    while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                        s.push(cur.bump().unwrap());
                    }
                }
                if cur.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
                    let mut bad = s;
                    while cur.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
                        bad.push(cur.bump().unwrap());
                    }
                    return Err(err(bad, "malformed number"));
                }
                TokenKind::Number(s)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::from(c);
                while cur
                    .peek()
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    s.push(cur.bump().unwrap());
                }
                match KEYWORDS.iter().find(|k| k.eq_ignore_ascii_case(&s)) {
                    Some(k) => TokenKind::Keyword(k),
                    None => TokenKind::Ident(s),
                }
            }
            other => return Err(err(other.to_string(), "unexpected character")),
        };
        out.push(Token { kind, line, column });
    }
}
