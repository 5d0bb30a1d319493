//! Statistics, cost model and plan rewrites.

mod cardinality;
mod join_order;
mod rewrite;
mod sample;
mod stats;

pub use cardinality::{
    column_lineage, estimate_cardinality, estimate_with_cost, plan_cost, selectivity,
    CardinalityError, DEFAULT_EQ_SELECTIVITY, DEFAULT_RANGE_SELECTIVITY,
};
pub use join_order::{choose_join_order, JoinEdge, JoinOrderError, DP_LIMIT};
pub use rewrite::{optimize, try_optimize, OptimizeError};
pub use sample::sample_relation;
pub use stats::{
    chao84, collect_stats, collect_stats_seeded, load_stats, save_stats, ColumnStats,
    PartialColumn, PartialStats, StatsIoError, StatsMap, TableStats, DEFAULT_SAMPLE_THRESHOLD,
    STATS_FILE,
};
