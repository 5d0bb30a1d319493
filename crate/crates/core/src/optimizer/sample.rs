use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::relation::{Relation, Row};

/// Uniform reservoir sample (Algorithm R) of `min(target_size, |r|)` rows.
///
/// The result is a single partition, deterministic for a fixed seed.
/// `target_size` must be at least 1.
pub fn sample_relation(r: &Relation, target_size: usize, seed: u64) -> Relation {
    assert!(target_size >= 1, "sample size must be positive");
    let rows = reservoir(r.rows(), target_size, seed);
    Relation::from_partitions_unchecked(r.schema().clone(), vec![rows])
}

pub(crate) fn reservoir<'a>(rows: impl Iterator<Item = &'a Row>, k: usize, seed: u64) -> Vec<Row> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Row> = Vec::with_capacity(k);
    for (i, row) in rows.enumerate() {
        if i < k {
            out.push(row.clone());
        } else {
            let j = rng.gen_range(0..=i);
            if j < k {
                out[j] = row.clone();
            }
        }
    }
    out
}
