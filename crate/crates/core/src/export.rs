//! CSV rendering of relations.

use std::io;

use crate::relation::Relation;
use crate::types::Value;

/// Text of one cell: NULL is empty, floats always carry a decimal point or
/// exponent so they read back as floats.
pub fn csv_field(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Float64(_) => v.to_sql_literal(),
        v => v.to_string(),
    }
}

/// RFC 4180: header plus one record per row in the relation's order,
/// quoted only where needed, CRLF line endings.
pub fn write_csv<W: io::Write>(r: &Relation, out: W) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(out);
    w.write_record(r.schema().columns().iter().map(|c| c.name.as_str()))?;
    for row in r.rows() {
        w.write_record(row.iter().map(csv_field))?;
    }
    w.flush()
}

pub fn to_csv_string(r: &Relation) -> String {
    let mut buf = Vec::new();
    write_csv(r, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("fields are UTF-8")
}
