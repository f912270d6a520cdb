//! Logical query IR, dataset statistics, selectivity estimation, and the
//! feature graph used by run-time predictors.

mod catalog;
mod graph;
mod parser;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{
    aggregate_features, estimate_selectivity, DatasetCatalog, Histogram, HistogramKind,
    SelectivityEstimates, TableStats, DEFAULT_SELECTIVITY, HISTOGRAM_BUCKETS,
};
pub use graph::{build_feature_graph, FeatureGraph, GraphNode, NodeKind, OperationKind};
pub use parser::{
    detect_capabilities, normalize_sql, parse_query, query_id, render_query,
    DEFAULT_CAPABILITY_TOKENS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("parse error at byte {pos}: {message}")]
    Parse { pos: usize, message: String },
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
}

/// Content hash of a normalized query text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryId(pub String);

impl QueryId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for QueryId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    /// `<=>`, vector distance.
    VectorDistance,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::VectorDistance => "<=>",
        }
    }

    /// Operator with operands swapped (`5 < a` is `a > 5`).
    pub fn flipped(self) -> Self {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }

    pub(crate) fn code(self) -> f64 {
        match self {
            CmpOp::Eq => 0.0,
            CmpOp::Ne => 1.0,
            CmpOp::Lt => 2.0,
            CmpOp::Le => 3.0,
            CmpOp::Gt => 4.0,
            CmpOp::Ge => 5.0,
            CmpOp::VectorDistance => 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Number(f64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(v) => write!(f, "{v}"),
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPredicate {
    pub column: ColumnRef,
    pub op: CmpOp,
    pub literal: Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinPredicate {
    pub left: ColumnRef,
    pub right: ColumnRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub func: AggFunc,
    /// `None` for `COUNT(*)`.
    pub column: Option<ColumnRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectItem {
    Star,
    Column(ColumnRef),
    Aggregate(Aggregate),
}

/// Parsed query: what it touches and how, independent of any engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalQuery {
    pub id: QueryId,
    /// Normalized SQL text the id was derived from.
    pub sql: String,
    pub tables: Vec<String>,
    /// Referenced columns per table, sorted and deduplicated.
    pub columns: BTreeMap<String, Vec<String>>,
    pub projection: Vec<SelectItem>,
    pub filter_predicates: Vec<FilterPredicate>,
    pub join_predicates: Vec<JoinPredicate>,
    pub aggregates: Vec<Aggregate>,
    pub group_by: Vec<ColumnRef>,
    pub capability_tokens: Vec<String>,
    /// Executions per hour.
    pub arrival_rate: f64,
}

impl LogicalQuery {
    pub fn with_arrival_rate(mut self, per_hour: f64) -> Self {
        self.arrival_rate = per_hour.max(0.0);
        self
    }

    pub fn references_table(&self, table: &str) -> bool {
        self.tables.iter().any(|t| t == table)
    }

    pub fn has_aggregation(&self) -> bool {
        !self.aggregates.is_empty() || !self.group_by.is_empty()
    }

    /// Every column the query mentions, grouped by table.
    pub(crate) fn collect_columns(&self) -> BTreeMap<String, Vec<String>> {
        let mut cols: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut add = |c: &ColumnRef| cols.entry(c.table.clone()).or_default().push(c.column.clone());
        for item in &self.projection {
            match item {
                SelectItem::Column(c) => add(c),
                SelectItem::Aggregate(Aggregate { column: Some(c), .. }) => add(c),
                _ => {}
            }
        }
        for p in &self.filter_predicates {
            add(&p.column);
        }
        for j in &self.join_predicates {
            add(&j.left);
            add(&j.right);
        }
        for g in &self.group_by {
            add(g);
        }
        for v in cols.values_mut() {
            v.sort();
            v.dedup();
        }
        cols
    }

    /// The IR with text, id and rate stripped, for structural comparisons.
    pub fn structure(&self) -> LogicalQuery {
        LogicalQuery {
            id: QueryId(String::new()),
            sql: String::new(),
            arrival_rate: 0.0,
            ..self.clone()
        }
    }
}
