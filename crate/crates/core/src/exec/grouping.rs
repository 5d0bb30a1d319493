use thiserror::Error;

use crate::sql::GroupingMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate grouping column `{0}`")]
pub struct DuplicateGroupColumn(pub String);

/// Expands a GROUP BY list into grouping sets, each given as ascending
/// positions into `group_cols`. Sets come in decreasing size, ties in
/// lexicographic order of positions.
pub fn grouping_sets<T: PartialEq + ToString>(
    group_cols: &[T],
    mode: GroupingMode,
) -> Result<Vec<Vec<usize>>, DuplicateGroupColumn> {
    for (i, c) in group_cols.iter().enumerate() {
        if group_cols[..i].contains(c) {
            return Err(DuplicateGroupColumn(c.to_string()));
        }
    }
    let d = group_cols.len();
    let mut sets: Vec<Vec<usize>> = match mode {
        GroupingMode::Plain => vec![(0..d).collect()],
        GroupingMode::Rollup => (0..=d).rev().map(|k| (0..k).collect()).collect(),
        GroupingMode::Cube => (0u64..1 << d)
            .map(|mask| (0..d).filter(|i| mask >> i & 1 == 1).collect())
            .collect(),
    };
    sets.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    Ok(sets)
}

/// `grouping_id` of a set: bit `i` is set when `group_cols[i]` is rolled up.
pub fn grouping_id(set: &[usize], d: usize) -> i64 {
    (0..d)
        .filter(|i| !set.contains(i))
        .fold(0i64, |acc, i| acc | 1 << i)
}
