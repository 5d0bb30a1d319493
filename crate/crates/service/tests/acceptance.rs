//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! runtime; the process exits non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use hmdap_core::catalog::{MemoryTables, TableProvider};
use hmdap_core::exec::{compile_physical, reference_interpret, Executor};
use hmdap_core::expr::{AggFunc, ColumnRef};
use hmdap_core::graph::{connected_components, relation_to_graph, shortest_paths};
use hmdap_core::ml::{
    kmeans_predict, kmeans_train, kmeans_train_from, logreg_loss_grad, relation_to_matrix,
    FeatureMatrix, KMeansParams, Registry,
};
use hmdap_core::optimizer::{
    choose_join_order, collect_stats_seeded, optimize, plan_cost, sample_relation, ColumnStats,
    JoinEdge, StatsMap, TableStats,
};
use hmdap_core::orchestrator::{
    execute_pipeline, parse_ml_config, serialize_ml_config, Branch, Connection, DbSettings, Mode,
    ParseOptions, PipelineConfig, PipelineContext,
};
use hmdap_core::query::run_query;
use hmdap_core::relation::multiset_equal;
use hmdap_core::sql::{plan_sql, AggregateCall, GroupingMode, LogicalPlan, GROUPING_ID};
use hmdap_core::testkit::{random_query, random_tables};
use hmdap_core::{CancelToken, ColumnType, Relation, Schema, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------- SQL

fn sql_oracle() -> Outcome {
    let executor = Executor::new(4).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let mut tables = random_tables(&mut rng, 100);
    let (mut non_empty, mut features) = (0, HashMap::<&str, usize>::new());
    for i in 0..200 {
        if i % 20 == 0 {
            tables = random_tables(&mut rng, 100);
        }
        let sql = random_query(&mut rng, 3);
        for f in [
            "JOIN", "WHERE", "GROUP BY", "ROLLUP", "CUBE", "ORDER BY", "LIMIT",
        ] {
            if sql.contains(f) {
                *features.entry(f).or_default() += 1;
            }
        }
        let plan = plan_sql(&sql, &tables).map_err(|e| format!("{sql}: {e}"))?;
        let expected = reference_interpret(&plan, &tables).map_err(|e| format!("{sql}: {e}"))?;
        let got = run_query(
            &sql,
            &tables,
            &StatsMap::new(),
            &executor,
            &CancelToken::new(),
        )
        .map_err(|e| format!("{sql}: {e}"))?;
        ensure!(got.schema() == expected.schema(), "schema differs: {sql}");
        ensure!(multiset_equal(&got, &expected), "rows differ: {sql}");
        non_empty += usize::from(!got.is_empty());
    }
    for f in [
        "JOIN", "WHERE", "GROUP BY", "ROLLUP", "CUBE", "ORDER BY", "LIMIT",
    ] {
        ensure!(
            features.get(f).copied().unwrap_or(0) >= 5,
            "corpus has too few {f} queries: {features:?}"
        );
    }
    Ok(format!("200/200 equal, {non_empty} non-empty"))
}

fn partition_invariance() -> Outcome {
    let executors: Vec<Executor> = [1, 2, 4, 8]
        .iter()
        .map(|&w| Executor::new(w).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);
    let mut tables = random_tables(&mut rng, 100);
    for i in 0..50 {
        if i % 10 == 0 {
            tables = random_tables(&mut rng, 100);
        }
        let sql = random_query(&mut rng, 3);
        let results: Vec<Relation> = executors
            .iter()
            .map(|e| run_query(&sql, &tables, &StatsMap::new(), e, &CancelToken::new()))
            .collect::<Result<_, _>>()
            .map_err(|e| format!("{sql}: {e}"))?;
        for (r, w) in results[1..].iter().zip([2, 4, 8]) {
            ensure!(
                multiset_equal(r, &results[0]),
                "workers=1 vs workers={w} differ: {sql}"
            );
        }
    }
    Ok("50 queries x {1,2,4,8} workers".into())
}

fn grouping_table() -> MemoryTables {
    let schema = Schema::from_pairs([
        ("a", ColumnType::Int64),
        ("b", ColumnType::Utf8),
        ("c", ColumnType::Bool),
        ("v", ColumnType::Float64),
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC3);
    let rows = (0..60)
        .map(|_| {
            vec![
                Value::Int64(rng.gen_range(0..3)),
                Value::from(["x", "y"][rng.gen_range(0..2)]),
                Value::Bool(rng.gen()),
                Value::Float64(rng.gen_range(0..100) as f64),
            ]
        })
        .collect();
    MemoryTables::new().with("g", Relation::new(schema, rows).expect("valid rows"))
}

/// Expected grouping ids: bit `i` is set when column `i` is rolled up.
fn expected_ids(d: usize, mode: GroupingMode) -> BTreeSet<i64> {
    let full = (1i64 << d) - 1;
    match mode {
        GroupingMode::Cube => (0..=full).collect(),
        GroupingMode::Rollup => (0..=d).map(|k| full & !((1i64 << k) - 1)).collect(),
        GroupingMode::Plain => [0].into(),
    }
}

fn ids_of(r: &Relation) -> BTreeSet<i64> {
    let i = r
        .schema()
        .index_of(GROUPING_ID)
        .expect("grouping_id column");
    r.rows()
        .map(|row| match row[i] {
            Value::Int64(x) => x,
            ref v => panic!("grouping_id {v:?}"),
        })
        .collect()
}

fn grouping_sets() -> Outcome {
    let tables = grouping_table();
    let executor = Executor::new(4).map_err(|e| e.to_string())?;
    let cols = ["a", "b", "c"];
    let schema = tables
        .scan("g")
        .map_err(|e| e.to_string())?
        .schema()
        .clone();
    let mut checked = 0;
    for d in 0..=3 {
        for mode in [GroupingMode::Cube, GroupingMode::Rollup] {
            let want = expected_ids(d, mode);
            let want_len = if mode == GroupingMode::Cube {
                1 << d
            } else {
                d + 1
            };
            ensure!(want.len() == want_len, "oracle size for d={d} {mode:?}");

            let plan = LogicalPlan::Aggregate {
                input: Box::new(LogicalPlan::scan("g", "g", &schema)),
                group_by: cols[..d]
                    .iter()
                    .map(|c| ColumnRef::qualified("g", *c))
                    .collect(),
                mode,
                aggregates: vec![AggregateCall {
                    func: AggFunc::Count,
                    arg: None,
                    output: "n".into(),
                }],
            };
            let stats = StatsMap::new();
            let optimized = optimize(&plan, &stats);
            let physical = compile_physical(&optimized, &stats).map_err(|e| e.to_string())?;
            let got = executor
                .execute(&physical, &tables)
                .map_err(|e| e.to_string())?;
            ensure!(
                ids_of(&got) == want,
                "plan d={d} {mode:?}: {:?} vs {want:?}",
                ids_of(&got)
            );
            let reference = reference_interpret(&plan, &tables).map_err(|e| e.to_string())?;
            ensure!(ids_of(&reference) == want, "reference d={d} {mode:?}");
            checked += 1;

            if d > 0 {
                let kw = if mode == GroupingMode::Cube {
                    "CUBE"
                } else {
                    "ROLLUP"
                };
                let sql = format!(
                    "SELECT {0}, SUM(v) AS s FROM g GROUP BY {0} WITH {kw}",
                    cols[..d].join(", ")
                );
                let r = run_query(
                    &sql,
                    &tables,
                    &StatsMap::new(),
                    &executor,
                    &CancelToken::new(),
                )
                .map_err(|e| format!("{sql}: {e}"))?;
                ensure!(ids_of(&r) == want, "{sql}: {:?}", ids_of(&r));
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} CUBE/ROLLUP cases, d in 0..=3"))
}

// ---------------------------------------------------------- join order

const JOIN_COLS: [&str; 4] = ["c0", "c1", "c2", "c3"];

fn join_leaf(name: &str) -> LogicalPlan {
    let schema = Schema::from_pairs(JOIN_COLS.map(|c| (c, ColumnType::Int64)));
    LogicalPlan::scan(name, name, &schema)
}

fn random_stats(rng: &mut ChaCha8Rng) -> TableStats {
    let rows: u64 = if rng.gen_bool(0.2) {
        rng.gen_range(1..10)
    } else {
        rng.gen_range(10..100_000)
    };
    let columns = JOIN_COLS
        .iter()
        .map(|c| {
            let ndv = (rng.gen_range(1..=rows.max(1)) as f64).max(1.0);
            let cs = ColumnStats {
                ndv_estimate: ndv,
                min: Value::Int64(0),
                max: Value::Int64(1000),
                null_count: 0,
            };
            (c.to_string(), cs)
        })
        .collect();
    TableStats {
        row_count: rows,
        columns,
    }
}

/// Edge `(i, j)` joins `ri.c{j} = rj.c{i}`.
fn join_edge(i: usize, j: usize, names: &[String]) -> JoinEdge {
    JoinEdge {
        left: i,
        right: j,
        left_col: ColumnRef::qualified(&names[i], JOIN_COLS[j]),
        right_col: ColumnRef::qualified(&names[j], JOIN_COLS[i]),
    }
}

fn mask_connected(mask: u32, pairs: &[(usize, usize)]) -> bool {
    let start = mask.trailing_zeros() as usize;
    let mut seen = 1u32 << start;
    let mut frontier = vec![start];
    while let Some(u) = frontier.pop() {
        for &(a, b) in pairs {
            for (x, y) in [(a, b), (b, a)] {
                if x == u && mask >> y & 1 == 1 && seen >> y & 1 == 0 {
                    seen |= 1 << y;
                    frontier.push(y);
                }
            }
        }
    }
    seen == mask
}

/// Every bushy join tree over `mask` without cross products, in both
/// child orders.
fn all_trees(
    mask: u32,
    pairs: &[(usize, usize)],
    names: &[String],
    leaves: &[LogicalPlan],
) -> Vec<LogicalPlan> {
    if mask.count_ones() == 1 {
        return vec![leaves[mask.trailing_zeros() as usize].clone()];
    }
    let mut out = Vec::new();
    let mut sub = (mask - 1) & mask;
    while sub > 0 {
        let rest = mask & !sub;
        if mask_connected(sub, pairs) && mask_connected(rest, pairs) {
            let on: Vec<(ColumnRef, ColumnRef)> = pairs
                .iter()
                .filter_map(|&(i, j)| {
                    let e = join_edge(i, j, names);
                    if sub >> i & 1 == 1 && rest >> j & 1 == 1 {
                        Some((e.left_col, e.right_col))
                    } else if sub >> j & 1 == 1 && rest >> i & 1 == 1 {
                        Some((e.right_col, e.left_col))
                    } else {
                        None
                    }
                })
                .collect();
            if !on.is_empty() {
                for l in all_trees(sub, pairs, names, leaves) {
                    for r in all_trees(rest, pairs, names, leaves) {
                        out.push(LogicalPlan::Join {
                            left: Box::new(l.clone()),
                            right: Box::new(r),
                            on: on.clone(),
                        });
                    }
                }
            }
        }
        sub = (sub - 1) & mask;
    }
    out
}

fn join_order() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    let (mut graphs, mut cases, mut trees) = (0, 0, 0);
    for n in 2..=4usize {
        let names: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
        let leaves: Vec<LogicalPlan> = names.iter().map(|s| join_leaf(s)).collect();
        let all_pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        for bits in 1u32..(1 << all_pairs.len()) {
            let pairs: Vec<(usize, usize)> = all_pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| bits >> k & 1 == 1)
                .map(|(_, p)| *p)
                .collect();
            let full = (1u32 << n) - 1;
            if !mask_connected(full, &pairs) {
                continue;
            }
            graphs += 1;
            let candidates = all_trees(full, &pairs, &names, &leaves);
            for _ in 0..8 {
                let stats: StatsMap = names
                    .iter()
                    .map(|s| (s.clone(), random_stats(&mut rng)))
                    .collect();
                let edges: Vec<JoinEdge> = pairs
                    .iter()
                    .map(|&(i, j)| join_edge(i, j, &names))
                    .collect();
                let dp =
                    choose_join_order(leaves.clone(), &edges, &stats).map_err(|e| e.to_string())?;
                let dp_cost = plan_cost(&dp, &stats).map_err(|e| e.to_string())?;
                let best = candidates
                    .iter()
                    .map(|t| plan_cost(t, &stats).expect("costable"))
                    .fold(f64::INFINITY, f64::min);
                ensure!(
                    dp_cost == best,
                    "n={n} edges={pairs:?}: dp {dp_cost} vs exhaustive {best}"
                );
                cases += 1;
                trees += candidates.len();
            }
        }
    }
    Ok(format!(
        "{graphs} connected join graphs, {cases} stat draws, {trees} trees costed"
    ))
}

// ----------------------------------------------------------------- NDV

fn chao84_oracle(sample: &Relation) -> f64 {
    let mut freq: HashMap<Value, u64> = HashMap::new();
    for row in sample.rows() {
        *freq.entry(row[0].clone()).or_default() += 1;
    }
    let d = freq.len() as f64;
    let f1 = freq.values().filter(|&&c| c == 1).count() as f64;
    let f2 = freq.values().filter(|&&c| c == 2).count() as f64;
    if f2 > 0.0 {
        d + f1 * f1 / (2.0 * f2)
    } else {
        d + f1 * (f1 - 1.0) / 2.0
    }
}

fn ndv() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC5);
    let rows: Vec<Vec<Value>> = (0..10_000)
        .map(|_| vec![Value::Int64(rng.gen_range(0..50))])
        .collect();
    let truth = rows
        .iter()
        .map(|r| match r[0] {
            Value::Int64(i) => i,
            _ => -1,
        })
        .collect::<BTreeSet<_>>()
        .len() as f64;
    ensure!(truth == 50.0, "generator produced {truth} distinct values");
    let r = Relation::new(Schema::from_pairs([("x", ColumnType::Int64)]), rows)
        .map_err(|e| e.to_string())?;
    let (mut lib_ok, mut oracle_ok) = (0, 0);
    for seed in 0..100 {
        let est = collect_stats_seeded(&r, 500, seed).columns["x"].ndv_estimate;
        let oracle = chao84_oracle(&sample_relation(&r, 500, seed)).clamp(1.0, 10_000.0);
        ensure!(
            (est - oracle).abs() <= 1e-9 * oracle,
            "seed {seed}: library {est} vs oracle {oracle}"
        );
        lib_ok += usize::from((est - truth).abs() <= 0.5 * truth);
        oracle_ok += usize::from((oracle - truth).abs() <= 0.5 * truth);
    }
    ensure!(
        lib_ok >= 90 && oracle_ok >= 90,
        "{lib_ok}/100 library, {oracle_ok}/100 oracle seeds within 50%"
    );
    Ok(format!("{lib_ok}/100 seeds within 50% of {truth}"))
}

// ----------------------------------------------------------------- ML

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_of(rows: &[&Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Minimum two-cluster inertia over every split of `pts`.
fn brute_force_k2(pts: &[Vec<f64>]) -> f64 {
    let n = pts.len();
    let mut best = f64::INFINITY;
    // point 0 always sits in cluster 0, so each split is counted once
    for mask in 0u32..(1 << (n - 1)) {
        let (mut a, mut b) = (vec![&pts[0]], Vec::new());
        for (i, p) in pts.iter().enumerate().skip(1) {
            if mask >> (i - 1) & 1 == 1 {
                b.push(p)
            } else {
                a.push(p)
            }
        }
        if b.is_empty() {
            continue;
        }
        let (ma, mb) = (mean_of(&a), mean_of(&b));
        let cost: f64 = a.iter().map(|p| sq_dist(p, &ma)).sum::<f64>()
            + b.iter().map(|p| sq_dist(p, &mb)).sum::<f64>();
        best = best.min(cost);
    }
    best
}

fn kmeans() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC6);
    for inst in 0..20 {
        let n = rng.gen_range(10..200);
        let d = rng.gen_range(1..5);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-100.0..100.0)).collect())
            .collect();
        let m = FeatureMatrix::from_rows(&pts).map_err(|e| e.to_string())?;
        let k = rng.gen_range(1..8);
        let model = kmeans_train(
            &m,
            &KMeansParams {
                k,
                max_iter: 100,
                tol: 0.0,
                seed: inst,
            },
        )
        .map_err(|e| e.to_string())?;
        for w in model.inertia_history.windows(2) {
            ensure!(
                w[1] <= w[0],
                "instance {inst}: inertia rose {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    let pts: Vec<Vec<f64>> = (0..12)
        .map(|_| vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)])
        .collect();
    let m = FeatureMatrix::from_rows(&pts).map_err(|e| e.to_string())?;
    let model = kmeans_train(
        &m,
        &KMeansParams {
            k: 2,
            max_iter: 100,
            tol: 0.0,
            seed: 1,
        },
    )
    .map_err(|e| e.to_string())?;
    let optimum = brute_force_k2(&pts);
    let own: f64 = pts
        .iter()
        .map(|p| {
            model
                .centroids
                .iter()
                .map(|c| sq_dist(p, c))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    ensure!(
        (own - model.inertia).abs() <= 1e-9 * own.max(1.0),
        "reported inertia {} vs recomputed {own}",
        model.inertia
    );
    ensure!(
        model.inertia <= 1.05 * optimum,
        "inertia {} vs optimum {optimum}",
        model.inertia
    );

    // converged: each centroid is the mean of its points and one more
    // update moves nothing
    ensure!(model.iterations_run < 100, "did not converge");
    let predicted = kmeans_predict(&model, &m).map_err(|e| e.to_string())?;
    let labels: Vec<usize> = predicted
        .rows()
        .map(|r| match r.last() {
            Some(Value::Int64(c)) => *c as usize,
            v => panic!("cluster {v:?}"),
        })
        .collect();
    for (j, c) in model.centroids.iter().enumerate() {
        let members: Vec<&Vec<f64>> = pts
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == j)
            .map(|(p, _)| p)
            .collect();
        ensure!(!members.is_empty(), "empty cluster {j}");
        let mean = mean_of(&members);
        ensure!(
            c.iter()
                .zip(&mean)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs())),
            "centroid {j} {c:?} vs mean {mean:?}"
        );
    }
    let again =
        kmeans_train_from(&m, model.centroids.clone(), 1, 0.0).map_err(|e| e.to_string())?;
    ensure!(
        again.centroids == model.centroids,
        "extra update moved centroids"
    );
    Ok(format!(
        "20 monotone runs; 12-point inertia {:.4} vs optimum {optimum:.4}",
        model.inertia
    ))
}

fn mean_log_loss(w: &[f64], b: f64, xs: &[Vec<f64>], y: &[f64]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(y)
        .map(|(x, &t)| {
            let z = b + x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            // log(1 + e^z) - t z, written to avoid overflow
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - t * z
        })
        .sum();
    total / xs.len() as f64
}

fn logreg() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC7);
    let mut worst: f64 = 0.0;
    for inst in 0..20 {
        let n = rng.gen_range(2..=50);
        let d = rng.gen_range(1..=5);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|_| f64::from(u8::from(rng.gen_bool(0.5))))
            .collect();
        let m = FeatureMatrix::from_rows(&xs).map_err(|e| e.to_string())?;

        let (l0, _) = logreg_loss_grad(&vec![0.0; d], 0.0, &m, &y).map_err(|e| e.to_string())?;
        ensure!(
            (l0 - std::f64::consts::LN_2).abs() <= 1e-12,
            "instance {inst}: loss at zero {l0}"
        );

        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let (loss, grad) = logreg_loss_grad(&w, b, &m, &y).map_err(|e| e.to_string())?;
        let own = mean_log_loss(&w, b, &xs, &y);
        ensure!(
            (loss - own).abs() <= 1e-12 * own.max(1.0),
            "instance {inst}: loss {loss} vs {own}"
        );

        let h = 1e-5;
        let mut numeric = Vec::with_capacity(d + 1);
        for j in 0..d {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[j] += h;
            down[j] -= h;
            numeric.push(
                (mean_log_loss(&up, b, &xs, &y) - mean_log_loss(&down, b, &xs, &y)) / (2.0 * h),
            );
        }
        numeric.push(
            (mean_log_loss(&w, b + h, &xs, &y) - mean_log_loss(&w, b - h, &xs, &y)) / (2.0 * h),
        );
        let diff = grad
            .iter()
            .zip(&numeric)
            .map(|(a, c)| (a - c).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(diff / scale);
        ensure!(
            diff / scale <= 1e-5,
            "instance {inst}: relative gradient error {}",
            diff / scale
        );
    }
    Ok(format!(
        "20 instances, worst relative gradient error {worst:.2e}"
    ))
}

// --------------------------------------------------------------- graph

fn bellman_ford(n: usize, edges: &[(usize, usize, f64)], src: usize) -> Vec<Option<f64>> {
    let mut dist = vec![None; n];
    dist[src] = Some(0.0);
    for _ in 0..n {
        let mut changed = false;
        for &(u, v, w) in edges {
            if let Some(du) = dist[u] {
                if dist[v].is_none_or(|dv: f64| du + w < dv) {
                    dist[v] = Some(du + w);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

fn union_find_labels(n: usize, edges: &[(usize, usize, f64)]) -> Vec<usize> {
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for &(u, v, _) in edges {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Whether two labelings induce the same partition.
fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.iter()
        .zip(b)
        .all(|(x, y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

fn graph() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC8);
    let schema = Schema::from_pairs([
        ("s", ColumnType::Int64),
        ("d", ColumnType::Int64),
        ("w", ColumnType::Float64),
    ]);
    let mut audited = 0;
    for g_i in 0..50 {
        let n = rng.gen_range(1..=50);
        let m = rng.gen_range(0..=3 * n);
        let mut edges: Vec<(usize, usize, f64)> = (0..m)
            .map(|_| {
                let w = if rng.gen_bool(0.1) {
                    0.0
                } else {
                    rng.gen_range(0.0..20.0)
                };
                (rng.gen_range(0..n), rng.gen_range(0..n), w)
            })
            .collect();
        // a zero-weight self loop per node keeps isolated nodes in the graph
        edges.extend((0..n).map(|i| (i, i, 0.0)));
        edges.shuffle(&mut rng);
        let rows = edges
            .iter()
            .map(|&(s, d, w)| {
                vec![
                    Value::Int64(s as i64),
                    Value::Int64(d as i64),
                    Value::Float64(w),
                ]
            })
            .collect();
        let rel = Relation::new(schema.clone(), rows).map_err(|e| e.to_string())?;
        let g = relation_to_graph(&rel, "s", "d", Some("w")).map_err(|e| e.to_string())?;
        ensure!(
            g.nodes().len() == n,
            "graph {g_i}: {} nodes, expected {n}",
            g.nodes().len()
        );

        for src in [0, rng.gen_range(0..n)] {
            let out = shortest_paths(&g, &Value::Int64(src as i64)).map_err(|e| e.to_string())?;
            let dist: Vec<Option<f64>> = out.rows().map(|r| r[1].as_f64()).collect();
            let want = bellman_ford(n, &edges, src);
            for (v, (got, exp)) in dist.iter().zip(&want).enumerate() {
                let ok = match (got, exp) {
                    (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * (1.0 + b),
                    (None, None) => true,
                    _ => false,
                };
                ensure!(ok, "graph {g_i} source {src} node {v}: {got:?} vs {exp:?}");
            }
            for &(u, v, w) in &edges {
                if let Some(du) = dist[u] {
                    let dv = dist[v].ok_or_else(|| {
                        format!("graph {g_i}: {v} unreachable behind edge from {u}")
                    })?;
                    ensure!(
                        dv <= du + w + 1e-9,
                        "graph {g_i}: triangle violated on {u}->{v}"
                    );
                    audited += 1;
                }
            }
        }

        let comps: Vec<usize> = connected_components(&g)
            .rows()
            .map(|r| match r[1] {
                Value::Int64(c) => c as usize,
                _ => usize::MAX,
            })
            .collect();
        ensure!(
            same_partition(&comps, &union_find_labels(n, &edges)),
            "graph {g_i}: components differ"
        );
    }
    Ok(format!("50 digraphs, {audited} edges audited"))
}

// -------------------------------------------------------- orchestration

fn points(rng: &mut ChaCha8Rng, n: usize) -> Relation {
    let schema = Schema::from_pairs([
        ("id", ColumnType::Int64),
        ("x", ColumnType::Float64),
        ("y", ColumnType::Float64),
        ("tag", ColumnType::Utf8),
    ]);
    let rows = (0..n)
        .map(|i| {
            let c = if rng.gen() { 0.0 } else { 6.0 };
            vec![
                Value::Int64(i as i64),
                Value::Float64(c + rng.gen_range(-1.0..1.0)),
                Value::Float64(c + rng.gen_range(-1.0..1.0)),
                Value::from(["p", "q"][rng.gen_range(0..2)]),
            ]
        })
        .collect();
    Relation::new(schema, rows).expect("valid rows")
}

fn pipeline_config(primary: String, mode: Mode, seed: u64) -> PipelineConfig {
    PipelineConfig {
        input_sql: "SELECT id, x, y FROM pts".into(),
        db: DbSettings::default(),
        algorithm: "KMeans".into(),
        parameters: vec!["2".into(), "100".into(), "0.0001".into(), seed.to_string()],
        mode,
        primary_sql: Some(primary),
        feature_cols: vec!["x".into(), "y".into()],
        label_col: None,
        join_keys: vec!["id".into()],
    }
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"abcXYZ019_ <>&'\"=.*,()";
    loop {
        let s: String = (0..rng.gen_range(1..25))
            .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
            .collect();
        let t = s.trim().to_string();
        if !t.is_empty() {
            return t;
        }
    }
}

fn random_config(rng: &mut ChaCha8Rng) -> PipelineConfig {
    let opt = |rng: &mut ChaCha8Rng| {
        if rng.gen() {
            Some(random_text(rng))
        } else {
            None
        }
    };
    let (algorithm, parameters) = if rng.gen() {
        let tol: f64 = rng.gen_range(0.0..1.0);
        (
            "KMeans",
            vec![
                rng.gen_range(1..10).to_string(),
                rng.gen_range(1..500).to_string(),
                tol.to_string(),
                rng.gen::<u64>().to_string(),
            ],
        )
    } else {
        let lr: f64 = rng.gen_range(1e-6..10.0);
        (
            "LogisticRegression",
            vec![
                lr.to_string(),
                rng.gen_range(1..1000).to_string(),
                rng.gen::<u64>().to_string(),
            ],
        )
    };
    PipelineConfig {
        input_sql: random_text(rng),
        db: DbSettings {
            url: opt(rng).map(|u| format!("local:{u}")),
            user: opt(rng),
            password: if rng.gen() {
                Some(random_text(rng))
            } else {
                None
            },
        },
        algorithm: algorithm.into(),
        parameters,
        mode: if rng.gen() {
            Mode::Fallback
        } else {
            Mode::Fuse
        },
        primary_sql: opt(rng),
        feature_cols: (0..rng.gen_range(0..4)).map(|_| random_text(rng)).collect(),
        label_col: opt(rng),
        join_keys: (0..rng.gen_range(0..3)).map(|_| random_text(rng)).collect(),
    }
}

fn nested_loop_join(a: &Relation, b: &Relation, key: &str) -> Vec<Vec<Value>> {
    let ka = a.schema().index_of(key).expect("key on left");
    let kb = b.schema().index_of(key).expect("key on right");
    let mut out = Vec::new();
    for ra in a.rows() {
        for rb in b.rows() {
            if !ra[ka].is_null() && ra[ka] == rb[kb] {
                let mut row = ra.clone();
                row.extend(
                    rb.iter()
                        .enumerate()
                        .filter(|(i, _)| *i != kb)
                        .map(|(_, v)| v.clone()),
                );
                out.push(row);
            }
        }
    }
    out
}

fn orchestration() -> Outcome {
    let executor = Executor::new(2).map_err(|e| e.to_string())?;
    let registry = Registry::default();
    let cancel = CancelToken::new();
    let cx = PipelineContext {
        executor: &executor,
        registry: &registry,
        cancel: &cancel,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC9);
    let (mut gated, mut skipped) = (0, 0);
    for run in 0..60 {
        let n = rng.gen_range(2..40);
        let tables = MemoryTables::new().with("pts", points(&mut rng, n));
        let conn = Connection {
            tables: Arc::new(tables.clone()),
            stats: StatsMap::new(),
        };
        let t: f64 = rng.gen_range(-2.0..9.0);
        let primary = format!("SELECT id, tag FROM pts WHERE x > {t:.3} AND y > {t:.3}");
        let rel = reference_interpret(
            &plan_sql(&primary, &tables).map_err(|e| e.to_string())?,
            &tables,
        )
        .map_err(|e| e.to_string())?;
        let seed = rng.gen_range(0..1000);
        let mode = if run % 3 == 2 {
            Mode::Fuse
        } else {
            Mode::Fallback
        };
        let out = execute_pipeline(&pipeline_config(primary.clone(), mode, seed), &conn, &cx)
            .map_err(|e| format!("{primary}: {e}"))?;

        let training = reference_interpret(
            &plan_sql("SELECT id, x, y FROM pts", &tables).map_err(|e| e.to_string())?,
            &tables,
        )
        .map_err(|e| e.to_string())?;
        let (m, _) = relation_to_matrix(&training, &["x".into(), "y".into()], None)
            .map_err(|e| e.to_string())?;
        let model = kmeans_train(
            &m,
            &KMeansParams {
                k: 2,
                max_iter: 100,
                tol: 1e-4,
                seed,
            },
        )
        .map_err(|e| e.to_string())?;
        let ml = kmeans_predict(&model, &m).map_err(|e| e.to_string())?;

        match mode {
            Mode::Fallback => {
                let ran_ml = out.branches_run.contains(&Branch::Ml);
                ensure!(
                    ran_ml == rel.is_empty(),
                    "{primary}: ML ran={ran_ml}, relational rows={}",
                    rel.num_rows()
                );
                if ran_ml {
                    ensure!(
                        out.result.to_rows() == ml.to_rows(),
                        "{primary}: ML output differs from oracle"
                    );
                    gated += 1;
                } else {
                    ensure!(
                        multiset_equal(&out.result, &rel),
                        "{primary}: relational result altered"
                    );
                    skipped += 1;
                }
            }
            Mode::Fuse => {
                ensure!(
                    out.branches_run == vec![Branch::Relational, Branch::Ml],
                    "fuse branches {:?}",
                    out.branches_run
                );
                let expected = Relation::new(
                    out.result.schema().clone(),
                    nested_loop_join(&rel, &ml, "id"),
                )
                .map_err(|e| e.to_string())?;
                ensure!(
                    multiset_equal(&out.result, &expected),
                    "{primary}: fuse differs from nested-loop join"
                );
            }
        }
    }
    ensure!(
        gated >= 5 && skipped >= 5,
        "gate corpus unbalanced: {gated} ML / {skipped} relational"
    );

    for i in 0..100 {
        let cfg = random_config(&mut rng);
        let xml = serialize_ml_config(&cfg);
        let back = parse_ml_config(&xml, &registry, ParseOptions::default())
            .map_err(|e| format!("config {i}: {e}\n{xml}"))?;
        ensure!(back == cfg, "config {i} changed in round trip:\n{xml}");
        ensure!(
            serialize_ml_config(&back) == xml,
            "config {i} re-serialized differently"
        );
    }
    Ok(format!("{gated} ML-gated, {skipped} relational-only, fuse joins checked, 100 configs round-tripped"))
}

// ---------------------------------------------------------- end to end

const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/demo");

fn demo_run(out: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_hmdap"))
        .arg("--data-dir")
        .arg(DEMO)
        .args(["--workers", "4", "run", "--format", "csv"])
        .arg("--ml-config")
        .arg(Path::new(DEMO).join("kmeans.xml"))
        .arg("--db-config")
        .arg(Path::new(DEMO).join("db.xml"))
        .arg("--output")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        o.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    Ok(())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    demo_run(&a)?;
    demo_run(&b)?;
    let (x, y) = (
        std::fs::read(&a).map_err(|e| e.to_string())?,
        std::fs::read(&b).map_err(|e| e.to_string())?,
    );
    ensure!(x == y, "exports differ between runs");
    let text = String::from_utf8(x).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    ensure!(
        lines.next() == Some("trip_id,distance_km,duration_min,fare,cluster"),
        "unexpected header"
    );
    let rows = lines.count();
    ensure!(rows == 400, "expected 400 predicted trips, got {rows}");

    // the primary query really is empty, so the rows come from the ML branch
    let engine = hmdap_core::Engine::open(DEMO, 2).map_err(|e| e.to_string())?;
    let primary = engine
        .query(
            "SELECT trip_id, fare FROM trips WHERE fare > 1000",
            &CancelToken::new(),
        )
        .map_err(|e| e.to_string())?;
    ensure!(primary.is_empty(), "demo primary query returned rows");
    Ok(format!(
        "{} bytes, {rows} rows, identical across runs",
        text.len()
    ))
}

// -------------------------------------------------------------- harness

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            name: "sql oracle equivalence",
            limit: Duration::from_secs(30),
            run: sql_oracle,
        },
        Criterion {
            name: "partition invariance",
            limit: Duration::from_secs(30),
            run: partition_invariance,
        },
        Criterion {
            name: "grouping sets",
            limit: Duration::MAX,
            run: grouping_sets,
        },
        Criterion {
            name: "join-order optimality",
            limit: Duration::MAX,
            run: join_order,
        },
        Criterion {
            name: "ndv estimation",
            limit: Duration::from_secs(10),
            run: ndv,
        },
        Criterion {
            name: "k-means",
            limit: Duration::from_secs(10),
            run: kmeans,
        },
        Criterion {
            name: "logistic regression",
            limit: Duration::from_secs(5),
            run: logreg,
        },
        Criterion {
            name: "graph",
            limit: Duration::from_secs(10),
            run: graph,
        },
        Criterion {
            name: "orchestration gate",
            limit: Duration::from_secs(10),
            run: orchestration,
        },
        Criterion {
            name: "end-to-end demo",
            limit: Duration::from_secs(10),
            run: end_to_end,
        },
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.limit => {
                Err(format!("{detail}; took {elapsed:.2?}, limit {:?}", c.limit))
            }
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {:<24} {:>9.2?}  {detail}", c.name, elapsed),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<24} {:>9.2?}  {why}", c.name, elapsed);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
