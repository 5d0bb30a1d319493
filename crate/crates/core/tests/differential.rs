//! Optimized parallel execution against the naive interpreter on random
//! queries, and result stability across worker counts.

use hmdap_core::cancel::CancelToken;
use hmdap_core::exec::{reference_interpret, Executor};
use hmdap_core::optimizer::StatsMap;
use hmdap_core::query::run_query;
use hmdap_core::relation::multiset_equal;
use hmdap_core::sql::plan_sql;
use hmdap_core::testkit::{random_query, random_tables};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn optimized_matches_reference() {
    let executor = Executor::new(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1FF);
    let mut non_empty = 0;
    for round in 0..6 {
        let tables = random_tables(&mut rng, 40);
        for _ in 0..50 {
            let sql = random_query(&mut rng, 3);
            let plan = plan_sql(&sql, &tables).unwrap();
            let expected = reference_interpret(&plan, &tables).unwrap();
            let got = run_query(
                &sql,
                &tables,
                &StatsMap::new(),
                &executor,
                &CancelToken::new(),
            )
            .unwrap_or_else(|e| panic!("round {round}: {sql}: {e}"));
            assert_eq!(got.schema(), expected.schema(), "{sql}");
            assert!(multiset_equal(&got, &expected), "round {round}: {sql}");
            non_empty += usize::from(!got.is_empty());
        }
    }
    assert!(
        non_empty >= 150,
        "only {non_empty} of 300 queries returned rows"
    );
}

#[test]
fn worker_count_does_not_change_results() {
    let executors: Vec<Executor> = [1, 2, 4, 8].map(|w| Executor::new(w).unwrap()).into();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9A27);
    let tables = random_tables(&mut rng, 60);
    for _ in 0..40 {
        let sql = random_query(&mut rng, 2);
        let results: Vec<_> = executors
            .iter()
            .map(|e| run_query(&sql, &tables, &StatsMap::new(), e, &CancelToken::new()).unwrap())
            .collect();
        for r in &results[1..] {
            // same rows in the same order, not just the same multiset
            assert_eq!(r.to_rows(), results[0].to_rows(), "{sql}");
        }
    }
}

#[test]
fn cancelled_token_stops_execution() {
    let executor = Executor::new(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tables = random_tables(&mut rng, 10);
    let cancel = CancelToken::new();
    cancel.cancel();
    let err = run_query(
        "SELECT * FROM t0",
        &tables,
        &StatsMap::new(),
        &executor,
        &cancel,
    )
    .unwrap_err();
    assert!(err.to_string().contains("cancel"), "{err}");
}
