//! Random tables and well-typed random queries for differential tests.
//!
//! Every generated table has the columns `id`, `k` (Int64), `v` (Float64),
//! `s` (Utf8) and `b` (Bool), with NULLs sprinkled in. Values stay small and
//! queries avoid division, so no generated query can fail at runtime.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::catalog::MemoryTables;
use crate::relation::Relation;
use crate::types::{ColumnType, Schema, Value};

pub const TABLES: [&str; 4] = ["t0", "t1", "t2", "t3"];

const COLUMNS: [(&str, ColumnType); 5] = [
    ("id", ColumnType::Int64),
    ("k", ColumnType::Int64),
    ("v", ColumnType::Float64),
    ("s", ColumnType::Utf8),
    ("b", ColumnType::Bool),
];

const WORDS: [&str; 4] = ["a", "b", "c", "d"];

pub fn table_schema() -> Schema {
    Schema::from_pairs(COLUMNS)
}

/// A table of `rows` random rows.
pub fn random_table<R: Rng>(rng: &mut R, rows: usize) -> Relation {
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let null = |rng: &mut R| rng.gen_bool(0.08);
        let id = if null(rng) {
            Value::Null
        } else {
            Value::Int64(rng.gen_range(0..20))
        };
        let k = if null(rng) {
            Value::Null
        } else {
            Value::Int64(rng.gen_range(-3..6))
        };
        let v = if null(rng) {
            Value::Null
        } else {
            Value::Float64(f64::from(rng.gen_range(-20i32..40)) * 0.25)
        };
        let s = if null(rng) {
            Value::Null
        } else {
            Value::from(*WORDS.choose(rng).expect("non-empty"))
        };
        let b = if null(rng) {
            Value::Null
        } else {
            Value::Bool(rng.gen())
        };
        out.push(vec![id, k, v, s, b]);
    }
    Relation::new(table_schema(), out).expect("rows match schema")
}

/// The four tables `t0..t3`, each with at most `max_rows` rows.
pub fn random_tables<R: Rng>(rng: &mut R, max_rows: usize) -> MemoryTables {
    let mut t = MemoryTables::new();
    for name in TABLES {
        let n = rng.gen_range(0..=max_rows);
        t.insert(name, random_table(rng, n));
    }
    t
}

fn column<R: Rng>(rng: &mut R, aliases: &[String], ty: Option<ColumnType>) -> (String, ColumnType) {
    let candidates: Vec<(&str, ColumnType)> = COLUMNS
        .iter()
        .copied()
        .filter(|(_, t)| ty.is_none_or(|x| x == *t))
        .collect();
    let (name, t) = *candidates.choose(rng).expect("column of every type");
    let alias = aliases.choose(rng).expect("at least one table");
    (format!("{alias}.{name}"), t)
}

fn literal<R: Rng>(rng: &mut R, ty: ColumnType) -> String {
    match ty {
        ColumnType::Int64 => rng.gen_range(-3..20).to_string(),
        ColumnType::Float64 => format!("{:.2}", f64::from(rng.gen_range(-20i32..40)) * 0.25),
        ColumnType::Utf8 => format!("'{}'", WORDS.choose(rng).expect("non-empty")),
        ColumnType::Bool => if rng.gen() { "TRUE" } else { "FALSE" }.to_string(),
    }
}

/// A numeric operand: a column, or a column combined with a small constant.
fn numeric_operand<R: Rng>(rng: &mut R, aliases: &[String], ty: ColumnType) -> String {
    let (c, _) = column(rng, aliases, Some(ty));
    match rng.gen_range(0..4) {
        0 => format!("{c} + {}", literal(rng, ty)),
        1 => format!("{c} * 2"),
        2 => format!("-{c}"),
        _ => c,
    }
}

fn predicate<R: Rng>(rng: &mut R, aliases: &[String], depth: u32) -> String {
    if depth > 0 && rng.gen_bool(0.4) {
        let a = predicate(rng, aliases, depth - 1);
        let b = predicate(rng, aliases, depth - 1);
        return match rng.gen_range(0..3) {
            0 => format!("({a} AND {b})"),
            1 => format!("({a} OR {b})"),
            _ => format!("NOT ({a})"),
        };
    }
    let ops = ["=", "<>", "<", "<=", ">", ">="];
    let op = ops.choose(rng).expect("non-empty");
    match rng.gen_range(0..5) {
        0 | 1 => {
            let ty = *[ColumnType::Int64, ColumnType::Float64]
                .choose(rng)
                .expect("non-empty");
            let lhs = numeric_operand(rng, aliases, ty);
            format!("{lhs} {op} {}", literal(rng, ty))
        }
        2 => {
            let (c, _) = column(rng, aliases, Some(ColumnType::Utf8));
            format!("{c} {op} {}", literal(rng, ColumnType::Utf8))
        }
        3 => {
            let ty = *[ColumnType::Int64, ColumnType::Utf8]
                .choose(rng)
                .expect("non-empty");
            let (a, _) = column(rng, aliases, Some(ty));
            let (b, _) = column(rng, aliases, Some(ty));
            format!("{a} {op} {b}")
        }
        _ => {
            let (c, _) = column(rng, aliases, Some(ColumnType::Bool));
            if rng.gen() {
                c
            } else {
                format!("{c} = {}", literal(rng, ColumnType::Bool))
            }
        }
    }
}

fn aggregate<R: Rng>(rng: &mut R, aliases: &[String]) -> String {
    match rng.gen_range(0..7) {
        0 => "COUNT(*)".to_string(),
        1 => format!("COUNT({})", column(rng, aliases, None).0),
        2 => format!("SUM({})", column(rng, aliases, Some(ColumnType::Int64)).0),
        3 => format!("SUM({})", column(rng, aliases, Some(ColumnType::Float64)).0),
        4 => {
            let ty = *[ColumnType::Int64, ColumnType::Float64]
                .choose(rng)
                .expect("non-empty");
            format!("AVG({})", column(rng, aliases, Some(ty)).0)
        }
        5 => format!("MIN({})", column(rng, aliases, None).0),
        _ => format!("MAX({})", column(rng, aliases, None).0),
    }
}

/// A random query over `t0..t3` with up to `max_joins` joins.
pub fn random_query<R: Rng>(rng: &mut R, max_joins: usize) -> String {
    let n = rng.gen_range(1..=max_joins + 1);
    let aliases: Vec<String> = (0..n).map(|i| format!("a{i}")).collect();
    let mut sql_from = format!("{} AS a0", TABLES.choose(rng).expect("non-empty"));
    for j in 1..n {
        let i = rng.gen_range(0..j);
        let pairs = rng.gen_range(1..=2);
        let mut on = Vec::new();
        for _ in 0..pairs {
            let (l, r) = *[
                ("id", "id"),
                ("k", "k"),
                ("id", "k"),
                ("s", "s"),
                ("k", "id"),
            ]
            .choose(rng)
            .expect("non-empty");
            on.push(format!("a{i}.{l} = a{j}.{r}"));
        }
        sql_from.push_str(&format!(
            " JOIN {} AS a{j} ON {}",
            TABLES.choose(rng).expect("non-empty"),
            on.join(" AND ")
        ));
    }

    let mut outputs = Vec::new();
    let mut select = Vec::new();
    let mut group = String::new();
    match rng.gen_range(0..4) {
        0 => select.push("*".to_string()),
        1 => {
            for i in 0..rng.gen_range(1..=3) {
                let e = match rng.gen_range(0..3) {
                    0 => numeric_operand(rng, &aliases, ColumnType::Int64),
                    1 => numeric_operand(rng, &aliases, ColumnType::Float64),
                    _ => column(rng, &aliases, None).0,
                };
                select.push(format!("{e} AS c{i}"));
                outputs.push(format!("c{i}"));
            }
        }
        _ => {
            let d = rng.gen_range(0..=3);
            let mut cols: Vec<String> = Vec::new();
            while cols.len() < d {
                let (c, _) = column(rng, &aliases, None);
                if !cols.contains(&c) {
                    cols.push(c);
                }
            }
            for (i, c) in cols.iter().enumerate() {
                select.push(format!("{c} AS g{i}"));
                outputs.push(format!("g{i}"));
            }
            for i in 0..rng.gen_range(1..=3) {
                select.push(format!("{} AS m{i}", aggregate(rng, &aliases)));
                outputs.push(format!("m{i}"));
            }
            if d > 0 {
                group = format!(" GROUP BY {}", cols.join(", "));
                match rng.gen_range(0..3) {
                    0 => group.push_str(" WITH ROLLUP"),
                    1 => group.push_str(" WITH CUBE"),
                    _ => {}
                }
            }
        }
    }

    let mut sql = format!("SELECT {} FROM {sql_from}", select.join(", "));
    if rng.gen_bool(0.6) {
        sql.push_str(&format!(" WHERE {}", predicate(rng, &aliases, 2)));
    }
    sql.push_str(&group);
    if !outputs.is_empty() && rng.gen_bool(0.4) {
        let count = rng.gen_range(1..=outputs.len().min(2));
        let chosen: Vec<String> = outputs.choose_multiple(rng, count).cloned().collect();
        let keys: Vec<String> = chosen
            .into_iter()
            .map(|o| if rng.gen() { format!("{o} DESC") } else { o })
            .collect();
        sql.push_str(&format!(" ORDER BY {}", keys.join(", ")));
    }
    if rng.gen_bool(0.3) {
        sql.push_str(&format!(" LIMIT {}", rng.gen_range(0..15)));
    }
    sql
}
