//! Weighted directed graphs built from edge relations, with single-source
//! shortest paths and weakly connected components.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::relation::{Relation, Row};
use crate::types::{Column, ColumnType, Schema, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("node column `{column}` has type {ty}; nodes must be Int64 or Utf8")]
    BadNodeType { column: String, ty: ColumnType },
    #[error("source and destination columns have different types ({src} vs {dst})")]
    MixedNodeTypes { src: ColumnType, dst: ColumnType },
    #[error("weight column `{column}` has type {ty}; weights must be numeric")]
    BadWeightType { column: String, ty: ColumnType },
    #[error("row {row} has a NULL in column `{column}`")]
    NullValue { row: usize, column: String },
    #[error("row {row} has negative or non-finite weight {weight}")]
    InvalidWeight { row: usize, weight: f64 },
    #[error("source node {0} is not in the graph")]
    UnknownSource(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Nodes are kept in ascending value order; edges refer to node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_type: ColumnType,
    nodes: Vec<Value>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from `(src, dst, weight)` triples. All endpoints must
    /// share one type, Int64 or Utf8.
    pub fn from_edges(
        node_type: ColumnType,
        edges: impl IntoIterator<Item = (Value, Value, f64)>,
    ) -> Result<Self, GraphError> {
        let edges: Vec<(Value, Value, f64)> = edges.into_iter().collect();
        for (row, (s, d, w)) in edges.iter().enumerate() {
            for (v, column) in [(s, "src"), (d, "dst")] {
                match v.data_type() {
                    None => {
                        return Err(GraphError::NullValue {
                            row,
                            column: column.to_string(),
                        })
                    }
                    Some(ty) if ty != node_type => {
                        return Err(GraphError::BadNodeType {
                            column: column.to_string(),
                            ty,
                        })
                    }
                    Some(_) => {}
                }
            }
            if !(w.is_finite() && *w >= 0.0) {
                return Err(GraphError::InvalidWeight { row, weight: *w });
            }
        }
        Ok(Self::assemble(node_type, edges))
    }

    fn assemble(node_type: ColumnType, triples: Vec<(Value, Value, f64)>) -> Self {
        let mut nodes: Vec<Value> = triples
            .iter()
            .flat_map(|(s, d, _)| [s.clone(), d.clone()])
            .collect();
        nodes.sort_by(|a, b| a.total_cmp(b));
        nodes.dedup();
        let index: HashMap<&Value, usize> = nodes.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let edges: Vec<Edge> = triples
            .iter()
            .map(|(s, d, w)| Edge {
                src: index[s],
                dst: index[d],
                weight: *w,
            })
            .collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.src].push(i);
        }
        Graph {
            node_type,
            nodes,
            edges,
            adjacency,
        }
    }

    pub fn node_type(&self) -> ColumnType {
        self.node_type
    }

    pub fn nodes(&self) -> &[Value] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_index(&self, v: &Value) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.total_cmp(v)).ok()
    }

    /// Interprets text as a node of this graph's type.
    pub fn parse_node(&self, text: &str) -> Option<Value> {
        match self.node_type {
            ColumnType::Int64 => text.trim().parse().ok().map(Value::Int64),
            _ => Some(Value::Utf8(text.to_string())),
        }
    }
}

fn node_column(r: &Relation, name: &str) -> Result<(usize, ColumnType), GraphError> {
    let i = r
        .schema()
        .index_of(name)
        .ok_or_else(|| GraphError::UnknownColumn(name.to_string()))?;
    let ty = r.schema().columns()[i].ty;
    if !matches!(ty, ColumnType::Int64 | ColumnType::Utf8) {
        return Err(GraphError::BadNodeType {
            column: name.to_string(),
            ty,
        });
    }
    Ok((i, ty))
}

/// One directed edge per row. Without a weight column every weight is 1.0.
pub fn relation_to_graph(
    r: &Relation,
    src_col: &str,
    dst_col: &str,
    weight_col: Option<&str>,
) -> Result<Graph, GraphError> {
    let (si, sty) = node_column(r, src_col)?;
    let (di, dty) = node_column(r, dst_col)?;
    if sty != dty {
        return Err(GraphError::MixedNodeTypes { src: sty, dst: dty });
    }
    let wi = weight_col
        .map(|w| {
            let i = r
                .schema()
                .index_of(w)
                .ok_or_else(|| GraphError::UnknownColumn(w.to_string()))?;
            let ty = r.schema().columns()[i].ty;
            if !ty.is_numeric() {
                return Err(GraphError::BadWeightType {
                    column: w.to_string(),
                    ty,
                });
            }
            Ok(i)
        })
        .transpose()?;

    let mut offsets = Vec::with_capacity(r.partitions().len());
    let mut total = 0;
    for p in r.partitions() {
        offsets.push(total);
        total += p.len();
    }
    let convert = |row_no: usize, row: &Row| -> Result<(Value, Value, f64), GraphError> {
        let null = |column: &str| GraphError::NullValue {
            row: row_no,
            column: column.to_string(),
        };
        if row[si].is_null() {
            return Err(null(src_col));
        }
        if row[di].is_null() {
            return Err(null(dst_col));
        }
        let weight = match wi {
            Some(i) => row[i]
                .as_f64()
                .ok_or_else(|| null(weight_col.expect("index implies name")))?,
            None => 1.0,
        };
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(GraphError::InvalidWeight {
                row: row_no,
                weight,
            });
        }
        Ok((row[si].clone(), row[di].clone(), weight))
    };
    let chunks: Vec<Vec<(Value, Value, f64)>> = r
        .partitions()
        .par_iter()
        .zip(offsets)
        .map(|(part, off)| {
            part.iter()
                .enumerate()
                .map(|(i, row)| convert(off + i, row))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(Graph::assemble(sty, chunks.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Distances and predecessor indices from `source`; `None` distance means
/// unreachable.
pub fn dijkstra(g: &Graph, source: usize) -> (Vec<Option<f64>>, Vec<Option<usize>>) {
    let n = g.nodes.len();
    let mut dist: Vec<Option<f64>> = vec![None; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = Some(0.0);
    heap.push(Reverse((Dist(0.0), source)));
    while let Some(Reverse((Dist(d), u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &ei in &g.adjacency[u] {
            let e = g.edges[ei];
            let nd = d + e.weight;
            if !done[e.dst] && dist[e.dst].is_none_or(|cur| nd < cur) {
                dist[e.dst] = Some(nd);
                pred[e.dst] = Some(u);
                heap.push(Reverse((Dist(nd), e.dst)));
            }
        }
    }
    (dist, pred)
}

/// `(node, distance, predecessor)` for every node in ascending node order.
/// Unreachable nodes have NULL distance and predecessor.
pub fn shortest_paths(g: &Graph, source: &Value) -> Result<Relation, GraphError> {
    let s = g
        .node_index(source)
        .filter(|_| source.data_type() == Some(g.node_type))
        .ok_or_else(|| GraphError::UnknownSource(source.to_sql_literal()))?;
    let (dist, pred) = dijkstra(g, s);
    let schema = Schema::new(vec![
        Column::new("node", g.node_type),
        Column::new("distance", ColumnType::Float64),
        Column::new("predecessor", g.node_type),
    ])
    .expect("distinct names");
    let rows = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, v)| {
            vec![
                v.clone(),
                dist[i].map_or(Value::Null, Value::Float64),
                pred[i].map_or(Value::Null, |p| g.nodes[p].clone()),
            ]
        })
        .collect();
    Ok(Relation::from_partitions_unchecked(schema, vec![rows]))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Component index per node of the undirected view, numbered densely in
/// order of each component's smallest node.
pub fn component_ids(g: &Graph) -> Vec<usize> {
    let n = g.nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for e in &g.edges {
        let (a, b) = (find(&mut parent, e.src), find(&mut parent, e.dst));
        if a != b {
            // keep the smaller index as root so roots are minimal members
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let root = find(&mut parent, i);
        if ids[root] == usize::MAX {
            ids[root] = next;
            next += 1;
        }
        out.push(ids[root]);
    }
    out
}

/// `(node, component_id)` in ascending node order.
pub fn connected_components(g: &Graph) -> Relation {
    let schema = Schema::new(vec![
        Column::new("node", g.node_type),
        Column::new("component_id", ColumnType::Int64),
    ])
    .expect("distinct names");
    let rows = g
        .nodes
        .iter()
        .zip(component_ids(g))
        .map(|(v, c)| vec![v.clone(), Value::Int64(c as i64)])
        .collect();
    Relation::from_partitions_unchecked(schema, vec![rows])
}
