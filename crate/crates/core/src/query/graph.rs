//! Logical feature graph of a query: table, column, predicate, operation and
//! embedding nodes, with edges pointing from child to parent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{estimate_selectivity, ColumnRef, DatasetCatalog, HistogramKind, Literal, LogicalQuery, QueryError};

/// Feature value for a slot that cannot be filled.
pub const MISSING: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperationKind {
    Scan,
    Join,
    /// Aggregation and/or grouping, one node per query.
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Table,
    Column,
    Predicate,
    Operation(OperationKind),
    Embedding,
}

impl NodeKind {
    /// Width of the feature vector for this node type.
    pub fn feature_width(self) -> usize {
        match self {
            // log10 rows, log10 bytes
            NodeKind::Table => 2,
            // log10 distinct, is_numeric
            NodeKind::Column => 2,
            // operator code, numeric literal, is_join, selectivity
            NodeKind::Predicate => 4,
            // operation code, selectivity, log10 estimated output rows
            NodeKind::Operation(_) => 3,
            NodeKind::Embedding => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: NodeKind,
    pub label: String,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGraph {
    pub nodes: Vec<GraphNode>,
    /// `(child, parent)` pairs.
    pub edges: Vec<(usize, usize)>,
}

impl FeatureGraph {
    pub fn count(&self, pred: impl Fn(NodeKind) -> bool) -> usize {
        self.nodes.iter().filter(|n| pred(n.kind)).count()
    }

    pub fn embedding(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == NodeKind::Embedding)
    }

    pub fn parents(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |(c, _)| *c == node).map(|(_, p)| *p)
    }

    /// Kahn's algorithm; `None` when a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for &(_, p) in &self.edges {
            indeg[p] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|i| indeg[*i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for p in self.parents(v).collect::<Vec<_>>() {
                indeg[p] -= 1;
                if indeg[p] == 0 {
                    ready.push(p);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// True when every node has a directed path to the embedding node.
    pub fn all_reach_embedding(&self) -> bool {
        let Some(root) = self.embedding() else { return false };
        let n = self.nodes.len();
        let mut reach = vec![false; n];
        reach[root] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for &(c, p) in &self.edges {
                if reach[p] && !reach[c] {
                    reach[c] = true;
                    changed = true;
                }
            }
        }
        reach.into_iter().all(|r| r)
    }
}

fn log10_or_missing(v: f64) -> f64 {
    if v > 0.0 {
        v.log10()
    } else {
        MISSING
    }
}

pub fn build_feature_graph(q: &LogicalQuery, cat: &DatasetCatalog) -> Result<FeatureGraph, QueryError> {
    let est = estimate_selectivity(q, cat)?;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let push = |nodes: &mut Vec<GraphNode>, kind: NodeKind, label: String, features: Vec<f64>| {
        debug_assert_eq!(features.len(), kind.feature_width());
        nodes.push(GraphNode { kind, label, features });
        nodes.len() - 1
    };

    let mut table_node = BTreeMap::new();
    for t in &q.tables {
        let stats = cat.table(t)?;
        let id = push(
            &mut nodes,
            NodeKind::Table,
            t.clone(),
            vec![log10_or_missing(stats.row_count as f64), log10_or_missing(stats.size_bytes as f64)],
        );
        table_node.insert(t.as_str(), id);
    }

    let mut column_node: BTreeMap<ColumnRef, usize> = BTreeMap::new();
    for (table, cols) in &q.columns {
        for c in cols {
            let features = match cat.histogram(table, c) {
                Some(h) => vec![
                    log10_or_missing(h.distinct as f64),
                    if h.kind == HistogramKind::Numeric { 1.0 } else { 0.0 },
                ],
                None => vec![MISSING, MISSING],
            };
            let id = push(&mut nodes, NodeKind::Column, format!("{table}.{c}"), features);
            edges.push((id, table_node[table.as_str()]));
            column_node.insert(ColumnRef { table: table.clone(), column: c.clone() }, id);
        }
    }

    let mut scan_node = BTreeMap::new();
    for t in &q.tables {
        let sel = est.scans[t];
        let rows = cat.table(t)?.row_count as f64 * sel;
        let id = push(
            &mut nodes,
            NodeKind::Operation(OperationKind::Scan),
            format!("scan {t}"),
            vec![0.0, sel, log10_or_missing(rows)],
        );
        edges.push((table_node[t.as_str()], id));
        scan_node.insert(t.as_str(), id);
    }

    // Filter selectivities are recomputed per predicate for the node feature.
    for p in &q.filter_predicates {
        let sel = cat
            .histogram(&p.column.table, &p.column.column)
            .and_then(|h| h.selectivity(p.op, &p.literal))
            .unwrap_or(MISSING);
        let literal = match p.literal {
            Literal::Number(v) => v,
            Literal::Str(_) => MISSING,
        };
        let id = push(
            &mut nodes,
            NodeKind::Predicate,
            format!("{}.{} {} {}", p.column.table, p.column.column, p.op.symbol(), p.literal),
            vec![p.op.code(), literal, 0.0, sel],
        );
        edges.push((column_node[&p.column], id));
        edges.push((id, scan_node[p.column.table.as_str()]));
    }

    let mut op_nodes: Vec<usize> = scan_node.values().copied().collect();
    for (j, sel) in q.join_predicates.iter().zip(&est.joins) {
        let pred = push(
            &mut nodes,
            NodeKind::Predicate,
            format!("{}.{} = {}.{}", j.left.table, j.left.column, j.right.table, j.right.column),
            vec![super::CmpOp::Eq.code(), MISSING, 1.0, *sel],
        );
        edges.push((column_node[&j.left], pred));
        edges.push((column_node[&j.right], pred));
        let l_rows = cat.table(&j.left.table)?.row_count as f64 * est.scans[&j.left.table];
        let r_rows = cat.table(&j.right.table)?.row_count as f64 * est.scans[&j.right.table];
        let join = push(
            &mut nodes,
            NodeKind::Operation(OperationKind::Join),
            format!("join {} {}", j.left.table, j.right.table),
            vec![1.0, *sel, log10_or_missing(l_rows * r_rows * sel)],
        );
        edges.push((pred, join));
        edges.push((scan_node[j.left.table.as_str()], join));
        edges.push((scan_node[j.right.table.as_str()], join));
        op_nodes.push(join);
    }

    if q.has_aggregation() {
        let agg = push(
            &mut nodes,
            NodeKind::Operation(OperationKind::Aggregate),
            "aggregate".into(),
            vec![2.0, est.aggregate.unwrap_or(1.0), MISSING],
        );
        let mut children: Vec<usize> = q
            .aggregates
            .iter()
            .filter_map(|a| a.column.as_ref())
            .chain(&q.group_by)
            .map(|c| column_node[c])
            .collect();
        children.sort_unstable();
        children.dedup();
        edges.extend(children.into_iter().map(|c| (c, agg)));
        op_nodes.push(agg);
    }

    let emb = push(&mut nodes, NodeKind::Embedding, "embedding".into(), Vec::new());
    op_nodes.sort_unstable();
    edges.extend(op_nodes.into_iter().map(|o| (o, emb)));

    Ok(FeatureGraph { nodes, edges })
}
