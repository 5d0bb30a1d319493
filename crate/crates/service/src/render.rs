//! Relation rendering for the terminal and for JSON responses.

use hmdap_core::{Relation, Value};
use serde_json::{json, Map, Number};

/// JSON form of a value. Non-finite floats become the strings `"NaN"`,
/// `"inf"` and `"-inf"`.
pub fn value_to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Null => serde_json::Value::Null,
        Value::Bool(b) => serde_json::Value::Bool(*b),
        Value::Int64(i) => serde_json::Value::from(*i),
        Value::Float64(f) => match Number::from_f64(*f) {
            Some(n) => serde_json::Value::Number(n),
            None => serde_json::Value::String(f.to_string()),
        },
        Value::Utf8(s) => serde_json::Value::String(s.clone()),
    }
}

pub fn columns_json(r: &Relation) -> serde_json::Value {
    serde_json::Value::Array(
        r.schema()
            .columns()
            .iter()
            .map(|c| json!({ "name": c.name, "type": c.ty.name() }))
            .collect(),
    )
}

/// `{columns, rows, row_count}` with rows as arrays in column order.
pub fn relation_json(r: &Relation) -> serde_json::Value {
    relation_page_json(r, 0, usize::MAX)
}

/// Like [`relation_json`] but with only rows `offset..offset + limit`;
/// `row_count` still reports the full total.
pub fn relation_page_json(r: &Relation, offset: usize, limit: usize) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = r
        .rows()
        .skip(offset)
        .take(limit)
        .map(|row| serde_json::Value::Array(row.iter().map(value_to_json).collect()))
        .collect();
    let mut m = Map::new();
    m.insert("columns".into(), columns_json(r));
    m.insert("rows".into(), serde_json::Value::Array(rows));
    m.insert("row_count".into(), r.num_rows().into());
    serde_json::Value::Object(m)
}

/// Aligned plain-text table with a row-count footer.
pub fn text_table(r: &Relation) -> String {
    let header: Vec<String> = r
        .schema()
        .columns()
        .iter()
        .map(|c| c.name.clone())
        .collect();
    let body: Vec<Vec<String>> = r
        .rows()
        .map(|row| row.iter().map(|v| v.to_string()).collect())
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}", w = *w))
            .collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = String::new();
    out.push_str(&line(&header));
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for row in &body {
        out.push_str(&line(row));
        out.push('\n');
    }
    let n = r.num_rows();
    out.push_str(&format!("({n} row{})\n", if n == 1 { "" } else { "s" }));
    out
}
