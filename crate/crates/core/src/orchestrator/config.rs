//! XML pipeline and database configuration documents.
//!
//! Pipeline document layout:
//!
//! ```text
//! <configuration>
//!   <input>
//!     <database>
//!       <url>local:./data</url> <user/> <password/>   (optional, inherited)
//!       <sql>SELECT ...</sql>                          (training query)
//!     </database>
//!   </input>
//!   <parameter><value>2</value>...</parameter>
//!   <algorithm>KMeans</algorithm>
//!   <primary_sql>...</primary_sql>   <mode>Fallback|Fuse</mode>
//!   <features><col>...</col></features>   <label>...</label>
//!   <join><key>...</key></join>
//! </configuration>
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ml::{MlError, Registry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("malformed XML at {line}:{column}: {message}")]
    Xml {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("expected root element <{expected}>, found <{found}> at {line}:{column}")]
    WrongRoot {
        expected: &'static str,
        found: String,
        line: u32,
        column: u32,
    },
    #[error("missing element <{element}> in <{parent}> at {line}:{column}")]
    MissingElement {
        element: &'static str,
        parent: String,
        line: u32,
        column: u32,
    },
    #[error("unknown element <{element}> in <{parent}> at {line}:{column}")]
    UnknownElement {
        element: String,
        parent: String,
        line: u32,
        column: u32,
    },
    #[error("duplicate element <{element}> at {line}:{column}")]
    DuplicateElement {
        element: String,
        line: u32,
        column: u32,
    },
    #[error("element <{element}> must not be empty at {line}:{column}")]
    EmptyElement {
        element: String,
        line: u32,
        column: u32,
    },
    #[error("unknown mode `{value}` at {line}:{column}; expected Fallback or Fuse")]
    InvalidMode {
        value: String,
        line: u32,
        column: u32,
    },
    #[error("{source} (at {line}:{column})")]
    Algorithm {
        source: MlError,
        line: u32,
        column: u32,
    },
    #[error("no database url given in either configuration")]
    MissingUrl,
    #[error("unsupported database url `{0}`: only the `local:<dir>` connector is built in; other databases need an implementation of the Connector interface")]
    UnsupportedScheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    Fallback,
    Fuse,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Fallback => "Fallback",
            Mode::Fuse => "Fuse",
        }
    }
}

/// Connection settings. In a pipeline document every field is optional
/// and missing ones come from the separately supplied database document.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DbSettings {
    pub url: Option<String>,
    pub user: Option<String>,
    pub password: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbConfig {
    pub url: String,
    pub user: String,
    pub password: String,
}

impl DbConfig {
    /// Directory of a `local:<dir>` url, relative paths resolved against
    /// `base`.
    pub fn local_dir(&self, base: &Path) -> Result<PathBuf, ConfigError> {
        let dir = self
            .url
            .strip_prefix("local:")
            .ok_or_else(|| ConfigError::UnsupportedScheme(self.url.clone()))?;
        let dir = Path::new(dir);
        Ok(if dir.is_absolute() {
            dir.to_path_buf()
        } else {
            base.join(dir)
        })
    }

    /// `settings` fields take precedence over `self`.
    pub fn overridden_by(&self, settings: &DbSettings) -> DbConfig {
        DbConfig {
            url: settings.url.clone().unwrap_or_else(|| self.url.clone()),
            user: settings.user.clone().unwrap_or_else(|| self.user.clone()),
            password: settings
                .password
                .clone()
                .unwrap_or_else(|| self.password.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Query producing the training relation.
    pub input_sql: String,
    pub db: DbSettings,
    pub algorithm: String,
    /// Positional parameters, completed with the algorithm's defaults.
    pub parameters: Vec<String>,
    pub mode: Mode,
    /// The main relational query; the training query when absent.
    pub primary_sql: Option<String>,
    /// Numeric columns other than the label when empty.
    pub feature_cols: Vec<String>,
    pub label_col: Option<String>,
    /// Shared column names when empty.
    pub join_keys: Vec<String>,
}

impl PipelineConfig {
    pub fn primary_sql(&self) -> &str {
        self.primary_sql.as_deref().unwrap_or(&self.input_sql)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject unknown elements; otherwise they are logged and skipped.
    pub strict: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { strict: true }
    }
}

struct Ctx<'a, 'input> {
    doc: &'a Document<'input>,
    opts: ParseOptions,
}

impl<'a, 'input> Ctx<'a, 'input> {
    fn pos(&self, n: Node) -> (u32, u32) {
        let p = self.doc.text_pos_at(n.range().start);
        (p.row, p.col)
    }

    /// Element children, each required to be one of `allowed`.
    fn children(
        &self,
        parent: Node<'a, 'input>,
        allowed: &[&str],
    ) -> Result<Vec<Node<'a, 'input>>, ConfigError> {
        let mut out = Vec::new();
        for c in parent.children().filter(Node::is_element) {
            let name = c.tag_name().name();
            if allowed.contains(&name) {
                out.push(c);
            } else if self.opts.strict {
                let (line, column) = self.pos(c);
                return Err(ConfigError::UnknownElement {
                    element: name.to_string(),
                    parent: parent.tag_name().name().to_string(),
                    line,
                    column,
                });
            } else {
                log::warn!(
                    "ignoring unknown element <{}> in <{}>",
                    name,
                    parent.tag_name().name()
                );
            }
        }
        Ok(out)
    }

    fn single(
        &self,
        nodes: &[Node<'a, 'input>],
        name: &str,
    ) -> Result<Option<Node<'a, 'input>>, ConfigError> {
        let mut found = nodes.iter().filter(|n| n.tag_name().name() == name);
        let first = found.next().copied();
        if let Some(dup) = found.next() {
            let (line, column) = self.pos(*dup);
            return Err(ConfigError::DuplicateElement {
                element: name.to_string(),
                line,
                column,
            });
        }
        Ok(first)
    }

    fn required(
        &self,
        parent: Node<'a, 'input>,
        nodes: &[Node<'a, 'input>],
        name: &'static str,
    ) -> Result<Node<'a, 'input>, ConfigError> {
        self.single(nodes, name)?.ok_or_else(|| {
            let (line, column) = self.pos(parent);
            ConfigError::MissingElement {
                element: name,
                parent: parent.tag_name().name().to_string(),
                line,
                column,
            }
        })
    }

    /// Trimmed text content; child elements are not allowed.
    fn text(&self, n: Node) -> Result<String, ConfigError> {
        self.children(n, &[])?;
        let s: String = n
            .children()
            .filter(|c| c.is_text())
            .filter_map(|c| c.text())
            .collect();
        Ok(s.trim().to_string())
    }

    fn non_empty_text(&self, n: Node) -> Result<String, ConfigError> {
        let s = self.text(n)?;
        if s.is_empty() {
            let (line, column) = self.pos(n);
            return Err(ConfigError::EmptyElement {
                element: n.tag_name().name().to_string(),
                line,
                column,
            });
        }
        Ok(s)
    }

    fn list(&self, n: Node<'a, 'input>, item: &str) -> Result<Vec<String>, ConfigError> {
        self.children(n, &[item])?
            .into_iter()
            .map(|c| self.non_empty_text(c))
            .collect()
    }

    fn root(&self, expected: &'static str) -> Result<Node<'a, 'input>, ConfigError> {
        let root = self.doc.root_element();
        if root.tag_name().name() != expected {
            let (line, column) = self.pos(root);
            return Err(ConfigError::WrongRoot {
                expected,
                found: root.tag_name().name().to_string(),
                line,
                column,
            });
        }
        Ok(root)
    }

    fn settings(&self, nodes: &[Node<'a, 'input>]) -> Result<DbSettings, ConfigError> {
        let field = |name: &str| -> Result<Option<String>, ConfigError> {
            self.single(nodes, name)?.map(|n| self.text(n)).transpose()
        };
        Ok(DbSettings {
            url: field("url")?,
            user: field("user")?,
            password: field("password")?,
        })
    }
}

fn parse_doc(xml: &str) -> Result<Document<'_>, ConfigError> {
    Document::parse(xml).map_err(|e| {
        let p = e.pos();
        ConfigError::Xml {
            line: p.row,
            column: p.col,
            message: e.to_string(),
        }
    })
}

/// Parses a pipeline document; the algorithm must be known to `registry`
/// and its parameters are checked and completed with defaults.
pub fn parse_ml_config(
    xml: &str,
    registry: &Registry,
    opts: ParseOptions,
) -> Result<PipelineConfig, ConfigError> {
    let doc = parse_doc(xml)?;
    let cx = Ctx { doc: &doc, opts };
    let root = cx.root("configuration")?;
    let top = cx.children(
        root,
        &[
            "input",
            "parameter",
            "algorithm",
            "primary_sql",
            "mode",
            "features",
            "label",
            "join",
        ],
    )?;

    let input = cx.required(root, &top, "input")?;
    let input_children = cx.children(input, &["database"])?;
    let database = cx.required(input, &input_children, "database")?;
    let db_children = cx.children(database, &["url", "user", "password", "sql"])?;
    let input_sql = cx.non_empty_text(cx.required(database, &db_children, "sql")?)?;
    let db = cx.settings(&db_children)?;

    let algorithm_node = cx.required(root, &top, "algorithm")?;
    let algorithm = cx.non_empty_text(algorithm_node)?;
    let given = match cx.single(&top, "parameter")? {
        Some(p) => cx.list(p, "value")?,
        None => Vec::new(),
    };
    let at_algorithm = |source: MlError| {
        let (line, column) = cx.pos(algorithm_node);
        ConfigError::Algorithm {
            source,
            line,
            column,
        }
    };
    let parameters = registry
        .resolve_params(&algorithm, &given)
        .map_err(at_algorithm)?;
    let algorithm = registry
        .get(&algorithm)
        .map_err(at_algorithm)?
        .name()
        .to_string();

    let mode = match cx.single(&top, "mode")? {
        None => Mode::Fallback,
        Some(n) => {
            let v = cx.text(n)?;
            if v.eq_ignore_ascii_case("fallback") {
                Mode::Fallback
            } else if v.eq_ignore_ascii_case("fuse") {
                Mode::Fuse
            } else {
                let (line, column) = cx.pos(n);
                return Err(ConfigError::InvalidMode {
                    value: v,
                    line,
                    column,
                });
            }
        }
    };
    let primary_sql = cx
        .single(&top, "primary_sql")?
        .map(|n| cx.non_empty_text(n))
        .transpose()?;
    let feature_cols = match cx.single(&top, "features")? {
        Some(n) => cx.list(n, "col")?,
        None => Vec::new(),
    };
    let label_col = cx
        .single(&top, "label")?
        .map(|n| cx.non_empty_text(n))
        .transpose()?;
    let join_keys = match cx.single(&top, "join")? {
        Some(n) => cx.list(n, "key")?,
        None => Vec::new(),
    };
    Ok(PipelineConfig {
        input_sql,
        db,
        algorithm,
        parameters,
        mode,
        primary_sql,
        feature_cols,
        label_col,
        join_keys,
    })
}

/// Parses a `<database>` document. The url must use a supported scheme.
pub fn parse_db_config(xml: &str, opts: ParseOptions) -> Result<DbConfig, ConfigError> {
    let doc = parse_doc(xml)?;
    let cx = Ctx { doc: &doc, opts };
    let root = cx.root("database")?;
    let children = cx.children(root, &["url", "user", "password"])?;
    let url = cx.non_empty_text(cx.required(root, &children, "url")?)?;
    let s = cx.settings(&children)?;
    let db = DbConfig {
        url,
        user: s.user.unwrap_or_default(),
        password: s.password.unwrap_or_default(),
    };
    check_scheme(&db.url)?;
    Ok(db)
}

pub(crate) fn check_scheme(url: &str) -> Result<(), ConfigError> {
    if url.starts_with("local:") {
        Ok(())
    } else {
        Err(ConfigError::UnsupportedScheme(url.to_string()))
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn element(out: &mut String, indent: usize, name: &str, text: &str) {
    let _ = writeln!(out, "{:indent$}<{name}>{}</{name}>", "", escape(text));
}

fn list(out: &mut String, name: &str, item: &str, values: &[String]) {
    if values.is_empty() {
        return;
    }
    let _ = writeln!(out, "  <{name}>");
    for v in values {
        element(out, 4, item, v);
    }
    let _ = writeln!(out, "  </{name}>");
}

pub fn serialize_ml_config(cfg: &PipelineConfig) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<configuration>\n");
    out.push_str("  <input>\n    <database>\n");
    for (name, v) in [
        ("url", &cfg.db.url),
        ("user", &cfg.db.user),
        ("password", &cfg.db.password),
    ] {
        if let Some(v) = v {
            element(&mut out, 6, name, v);
        }
    }
    element(&mut out, 6, "sql", &cfg.input_sql);
    out.push_str("    </database>\n  </input>\n");
    list(&mut out, "parameter", "value", &cfg.parameters);
    element(&mut out, 2, "algorithm", &cfg.algorithm);
    if let Some(p) = &cfg.primary_sql {
        element(&mut out, 2, "primary_sql", p);
    }
    element(&mut out, 2, "mode", cfg.mode.as_str());
    list(&mut out, "features", "col", &cfg.feature_cols);
    if let Some(l) = &cfg.label_col {
        element(&mut out, 2, "label", l);
    }
    list(&mut out, "join", "key", &cfg.join_keys);
    out.push_str("</configuration>\n");
    out
}

pub fn serialize_db_config(db: &DbConfig) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<database>\n");
    element(&mut out, 2, "url", &db.url);
    element(&mut out, 2, "user", &db.user);
    element(&mut out, 2, "password", &db.password);
    out.push_str("</database>\n");
    out
}
