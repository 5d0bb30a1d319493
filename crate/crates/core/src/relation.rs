//! Partitioned relations, the exchange format between every paradigm.

use std::cmp::Ordering;

use thiserror::Error;

use crate::types::{Schema, Value};

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelationError {
    #[error("row {row} has {got} values, schema has {expected} columns")]
    Arity {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("row {row}, column `{column}`: expected {expected}, got {got:?}")]
    Type {
        row: usize,
        column: String,
        expected: crate::types::ColumnType,
        got: Value,
    },
    #[error("partition count must be at least 1")]
    ZeroPartitions,
}

/// A schema plus a multiset of rows split into one or more partitions.
///
/// Partition boundaries carry no meaning; the relation's *canonical order* is
/// the concatenation of its partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    schema: Schema,
    partitions: Vec<Vec<Row>>,
}

impl Relation {
    /// Single-partition relation; every row is checked against the schema.
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self, RelationError> {
        Self::from_partitions(schema, vec![rows])
    }

    pub fn from_partitions(
        schema: Schema,
        mut partitions: Vec<Vec<Row>>,
    ) -> Result<Self, RelationError> {
        if partitions.is_empty() {
            partitions.push(Vec::new());
        }
        let mut idx = 0;
        for part in &partitions {
            for row in part {
                check_row(&schema, row, idx)?;
                idx += 1;
            }
        }
        Ok(Relation { schema, partitions })
    }

    /// Skips row validation; callers guarantee conformance.
    pub(crate) fn from_partitions_unchecked(schema: Schema, mut partitions: Vec<Vec<Row>>) -> Self {
        if partitions.is_empty() {
            partitions.push(Vec::new());
        }
        debug_assert!(partitions
            .iter()
            .flatten()
            .enumerate()
            .all(|(i, r)| check_row(&schema, r, i).is_ok()));
        Relation { schema, partitions }
    }

    pub fn empty(schema: Schema) -> Self {
        Relation {
            schema,
            partitions: vec![Vec::new()],
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn partitions(&self) -> &[Vec<Row>] {
        &self.partitions
    }

    pub fn into_partitions(self) -> (Schema, Vec<Vec<Row>>) {
        (self.schema, self.partitions)
    }

    pub fn num_rows(&self) -> usize {
        self.partitions.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_rows() == 0
    }

    /// Rows in canonical order.
    pub fn rows(&self) -> impl Iterator<Item = &Row> {
        self.partitions.iter().flatten()
    }

    pub fn to_rows(&self) -> Vec<Row> {
        self.rows().cloned().collect()
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.partitions.into_iter().flatten().collect()
    }

    /// Same rows gathered into a single partition.
    pub fn coalesce(self) -> Relation {
        let schema = self.schema.clone();
        Relation {
            schema,
            partitions: vec![self.into_rows()],
        }
    }

    /// Round-robin redistribution into exactly `n` partitions.
    pub fn repartition(&self, n: usize) -> Result<Relation, RelationError> {
        if n == 0 {
            return Err(RelationError::ZeroPartitions);
        }
        let mut parts = vec![Vec::new(); n];
        for (i, row) in self.rows().enumerate() {
            parts[i % n].push(row.clone());
        }
        Ok(Relation {
            schema: self.schema.clone(),
            partitions: parts,
        })
    }

    /// Contiguous split into at most `n` partitions of near-equal size,
    /// preserving canonical order.
    pub fn chunked(self, n: usize) -> Relation {
        let n = n.max(1);
        let schema = self.schema.clone();
        let rows = self.into_rows();
        Relation {
            schema,
            partitions: split_contiguous(rows, n),
        }
    }
}

pub(crate) fn split_contiguous(rows: Vec<Row>, n: usize) -> Vec<Vec<Row>> {
    let total = rows.len();
    let n = n.max(1);
    let base = total / n;
    let extra = total % n;
    let mut out = Vec::with_capacity(n);
    let mut it = rows.into_iter();
    for i in 0..n {
        let take = base + usize::from(i < extra);
        out.push(it.by_ref().take(take).collect());
    }
    out
}

fn check_row(schema: &Schema, row: &Row, idx: usize) -> Result<(), RelationError> {
    if row.len() != schema.len() {
        return Err(RelationError::Arity {
            row: idx,
            got: row.len(),
            expected: schema.len(),
        });
    }
    for (v, c) in row.iter().zip(schema.columns()) {
        if let Some(t) = v.data_type() {
            if t != c.ty {
                return Err(RelationError::Type {
                    row: idx,
                    column: c.name.clone(),
                    expected: c.ty,
                    got: v.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Lexicographic total order over rows (see [`Value::total_cmp`]).
pub fn cmp_rows(a: &[Value], b: &[Value]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// True iff both relations have identical column names and types and equal
/// row multisets, ignoring partitioning and row order.
pub fn multiset_equal(a: &Relation, b: &Relation) -> bool {
    if a.schema != b.schema || a.num_rows() != b.num_rows() {
        return false;
    }
    let mut ra: Vec<&Row> = a.rows().collect();
    let mut rb: Vec<&Row> = b.rows().collect();
    ra.sort_by(|x, y| cmp_rows(x, y));
    rb.sort_by(|x, y| cmp_rows(x, y));
    ra.iter()
        .zip(&rb)
        .all(|(x, y)| cmp_rows(x, y) == Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ColumnType;
    use proptest::prelude::*;

    fn ints(name: &str, vals: &[i64]) -> Relation {
        Relation::new(
            Schema::from_pairs([(name, ColumnType::Int64)]),
            vals.iter().map(|&v| vec![Value::Int64(v)]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn repartition_round_robin_sizes() {
        let r = ints("x", &(0..10).collect::<Vec<_>>());
        let p = r.repartition(3).unwrap();
        let sizes: Vec<usize> = p.partitions().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert!(multiset_equal(&r, &p));
    }

    #[test]
    fn repartition_edge_cases() {
        let r = ints("x", &[1, 2, 3]);
        let one = r.repartition(1).unwrap();
        assert_eq!(one.partitions().len(), 1);
        assert_eq!(one.to_rows(), r.to_rows());

        let e = ints("x", &[]).repartition(2).unwrap();
        assert_eq!(e.partitions().len(), 2);
        assert!(e.partitions().iter().all(Vec::is_empty));

        assert_eq!(r.repartition(0).unwrap_err(), RelationError::ZeroPartitions);
    }

    #[test]
    fn multiset_equality_rules() {
        let r = ints("x", &[3, 1, 2, 5]);
        assert!(multiset_equal(&r, &r.repartition(4).unwrap()));
        assert!(!multiset_equal(&ints("x", &[1, 1, 2]), &ints("x", &[1, 2])));
        assert!(!multiset_equal(&ints("x", &[1, 1]), &ints("x", &[1, 2])));
        assert!(!multiset_equal(&ints("x", &[1]), &ints("y", &[1])));
    }

    #[test]
    fn rejects_nonconforming_rows() {
        let schema = Schema::from_pairs([("x", ColumnType::Int64)]);
        assert!(matches!(
            Relation::new(schema.clone(), vec![vec![Value::Utf8("a".into())]]),
            Err(RelationError::Type { .. })
        ));
        assert!(matches!(
            Relation::new(schema.clone(), vec![vec![]]),
            Err(RelationError::Arity { .. })
        ));
        assert!(Relation::new(schema, vec![vec![Value::Null]]).is_ok());
    }

    #[test]
    fn chunked_preserves_order() {
        let r = ints("x", &(0..7).collect::<Vec<_>>());
        let c = r.clone().chunked(3);
        let sizes: Vec<usize> = c.partitions().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 2, 2]);
        assert_eq!(c.to_rows(), r.to_rows());
    }

    proptest! {
        #[test]
        fn repartition_is_partition_invariant(vals in prop::collection::vec(-5i64..5, 0..50),
                                              n in 1usize..9, m in 1usize..9) {
            let r = ints("x", &vals);
            let a = r.repartition(n).unwrap();
            let b = r.repartition(m).unwrap();
            prop_assert!(multiset_equal(&a, &b));
            prop_assert_eq!(a.partitions().len(), n);
            let sizes: Vec<usize> = a.partitions().iter().map(Vec::len).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}
