//! Cost-based join ordering: exhaustive dynamic programming over connected
//! subsets for small joins, greedy attachment above that.

use std::cmp::Ordering;
use std::collections::HashMap;

use thiserror::Error;

use super::cardinality::{cost_terms, estimate_cardinality, CardinalityError};
use super::stats::StatsMap;
use crate::expr::ColumnRef;
use crate::numeric::ExactSum;
use crate::sql::LogicalPlan;

/// Largest join handled by the exhaustive search.
pub const DP_LIMIT: usize = 6;

/// An equality `left_col = right_col` between relations `left` and `right`
/// (indices into the relation list).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinEdge {
    pub left: usize,
    pub right: usize,
    pub left_col: ColumnRef,
    pub right_col: ColumnRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JoinOrderError {
    #[error("no relations to join")]
    Empty,
    #[error("join graph is disconnected; every table must be joined on an equality")]
    Disconnected,
    #[error("join edge refers to relation {0}, which does not exist or joins itself")]
    BadEdge(usize),
    #[error(transparent)]
    Cardinality(#[from] CardinalityError),
}

/// Name used for deterministic tie-breaking: the relation's scan aliases.
fn leaf_name(plan: &LogicalPlan) -> String {
    plan.scans()
        .iter()
        .map(|(_, alias)| *alias)
        .collect::<Vec<_>>()
        .join(",")
}

/// Shape of a join tree over leaf names, e.g. `((a b) c)`.
fn tree_key(plan: &LogicalPlan) -> String {
    match plan {
        LogicalPlan::Join { left, right, .. } => {
            format!("({} {})", tree_key(left), tree_key(right))
        }
        other => leaf_name(other),
    }
}

fn join_on(edges: &[JoinEdge], a: u32, b: u32) -> Vec<(ColumnRef, ColumnRef)> {
    edges
        .iter()
        .filter_map(|e| {
            let (l, r) = (1u32 << e.left, 1u32 << e.right);
            if a & l != 0 && b & r != 0 {
                Some((e.left_col.clone(), e.right_col.clone()))
            } else if a & r != 0 && b & l != 0 {
                Some((e.right_col.clone(), e.left_col.clone()))
            } else {
                None
            }
        })
        .collect()
}

fn connected(mask: u32, edges: &[JoinEdge]) -> bool {
    let start = mask & mask.wrapping_neg();
    let mut seen = start;
    loop {
        let mut grown = seen;
        for e in edges {
            let (l, r) = (1u32 << e.left, 1u32 << e.right);
            if mask & l != 0 && mask & r != 0 && (seen & l != 0 || seen & r != 0) {
                grown |= l | r;
            }
        }
        if grown == seen {
            return seen == mask;
        }
        seen = grown;
    }
}

fn join(left: &LogicalPlan, right: &LogicalPlan, on: Vec<(ColumnRef, ColumnRef)>) -> LogicalPlan {
    LogicalPlan::Join {
        left: Box::new(left.clone()),
        right: Box::new(right.clone()),
        on,
    }
}

/// Lower cost wins; exact ties go to the smaller key.
fn better(cost: f64, key: &str, best_cost: f64, best_key: &str) -> bool {
    cost < best_cost || (cost == best_cost && key < best_key)
}

/// Builds a join tree over `relations` connected by `edges`, minimising
/// [`plan_cost`](super::plan_cost). Cross products are never introduced.
pub fn choose_join_order(
    relations: Vec<LogicalPlan>,
    edges: &[JoinEdge],
    stats: &StatsMap,
) -> Result<LogicalPlan, JoinOrderError> {
    let n = relations.len();
    if n == 0 {
        return Err(JoinOrderError::Empty);
    }
    for e in edges {
        for i in [e.left, e.right] {
            if i >= n || e.left == e.right {
                return Err(JoinOrderError::BadEdge(i));
            }
        }
    }
    if n == 1 {
        return Ok(relations.into_iter().next().expect("one relation"));
    }
    if n > 31 || !connected((1u32 << n) - 1, edges) {
        return Err(JoinOrderError::Disconnected);
    }
    if n <= DP_LIMIT {
        dynamic_program(relations, edges, stats)
    } else {
        greedy(relations, edges, stats)
    }
}

struct Entry {
    plan: LogicalPlan,
    cost: ExactSum,
    key: String,
}

fn dynamic_program(
    relations: Vec<LogicalPlan>,
    edges: &[JoinEdge],
    stats: &StatsMap,
) -> Result<LogicalPlan, JoinOrderError> {
    let n = relations.len();
    let full = (1u32 << n) - 1;
    let mut best: HashMap<u32, Entry> = HashMap::new();
    for (i, r) in relations.into_iter().enumerate() {
        let (_, cost) = cost_terms(&r, stats)?;
        let key = leaf_name(&r);
        best.insert(1 << i, Entry { plan: r, cost, key });
    }
    for mask in 1..=full {
        if mask.count_ones() < 2 || !connected(mask, edges) {
            continue;
        }
        let mut winner: Option<Entry> = None;
        let mut sub = (mask - 1) & mask;
        while sub > 0 {
            let other = mask ^ sub;
            if let (Some(a), Some(b)) = (best.get(&sub), best.get(&other)) {
                let on = join_on(edges, sub, other);
                if !on.is_empty() {
                    let plan = join(&a.plan, &b.plan, on);
                    let mut cost = a.cost.clone();
                    cost.merge(&b.cost);
                    cost.add(estimate_cardinality(&plan, stats)?);
                    let key = tree_key(&plan);
                    if winner
                        .as_ref()
                        .is_none_or(|w| better(cost.value(), &key, w.cost.value(), &w.key))
                    {
                        winner = Some(Entry { plan, cost, key });
                    }
                }
            }
            sub = (sub - 1) & mask;
        }
        if let Some(w) = winner {
            best.insert(mask, w);
        }
    }
    best.remove(&full)
        .map(|e| e.plan)
        .ok_or(JoinOrderError::Disconnected)
}

fn greedy(
    relations: Vec<LogicalPlan>,
    edges: &[JoinEdge],
    stats: &StatsMap,
) -> Result<LogicalPlan, JoinOrderError> {
    let n = relations.len();
    let names: Vec<String> = relations.iter().map(leaf_name).collect();
    let by_name = |a: usize, b: usize| names[a].cmp(&names[b]);

    let mut start: Option<(f64, (usize, usize), LogicalPlan)> = None;
    for i in 0..n {
        for j in 0..n {
            if i == j || by_name(i, j) != Ordering::Less {
                continue;
            }
            let on = join_on(edges, 1 << i, 1 << j);
            if on.is_empty() {
                continue;
            }
            let plan = join(&relations[i], &relations[j], on);
            let card = estimate_cardinality(&plan, stats)?;
            let wins = match &start {
                None => true,
                Some((c, (bi, bj), _)) => better(
                    card,
                    &format!("{}\u{0}{}", names[i], names[j]),
                    *c,
                    &format!("{}\u{0}{}", names[*bi], names[*bj]),
                ),
            };
            if wins {
                start = Some((card, (i, j), plan));
            }
        }
    }
    let (_, (i, j), mut current) = start.ok_or(JoinOrderError::Disconnected)?;
    let mut mask = (1u32 << i) | (1u32 << j);
    while mask.count_ones() < n as u32 {
        let mut next: Option<(f64, usize, LogicalPlan)> = None;
        for k in 0..n {
            if mask & (1 << k) != 0 {
                continue;
            }
            let on = join_on(edges, mask, 1 << k);
            if on.is_empty() {
                continue;
            }
            let plan = join(&current, &relations[k], on);
            let card = estimate_cardinality(&plan, stats)?;
            let wins = match &next {
                None => true,
                Some((c, bk, _)) => better(card, &names[k], *c, &names[*bk]),
            };
            if wins {
                next = Some((card, k, plan));
            }
        }
        let (_, k, plan) = next.ok_or(JoinOrderError::Disconnected)?;
        mask |= 1 << k;
        current = plan;
    }
    Ok(current)
}
