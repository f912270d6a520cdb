//! Representative workload windows and their on-disk JSON Lines form.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blueprint::EngineId;
use crate::predictor::{PredictError, PredictorKind};
use crate::query::{parse_query, DatasetCatalog, LogicalQuery, QueryError, QueryId};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("line {line}: {source}")]
    Query { line: usize, source: QueryError },
}

/// One line of a workload file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    pub sql: String,
    pub arrival_rate_per_hour: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

/// The queries a planner optimizes for, with their observed frequencies.
#[derive(Debug, Clone)]
pub struct WorkloadWindow {
    /// Unique queries; `arrival_rate` is per hour.
    pub queries: Vec<LogicalQuery>,
    /// SLO class tag per query, when declared.
    pub tags: BTreeMap<QueryId, String>,
    /// Transactions per second against the RowStore.
    pub txn_rate_per_s: f64,
    pub duration_s: f64,
    pub catalog: Arc<DatasetCatalog>,
}

impl WorkloadWindow {
    pub fn new(queries: Vec<LogicalQuery>, catalog: Arc<DatasetCatalog>) -> Self {
        Self { queries, tags: BTreeMap::new(), txn_rate_per_s: 0.0, duration_s: 3600.0, catalog }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn index_of(&self, id: &QueryId) -> Option<usize> {
        self.queries.iter().position(|q| &q.id == id)
    }
}

/// Parses a JSON Lines workload. Records whose SQL normalizes to the same
/// query are merged and their rates summed.
pub fn parse_workload(text: &str) -> Result<(Vec<LogicalQuery>, BTreeMap<QueryId, String>), WorkloadError> {
    let mut queries: Vec<LogicalQuery> = Vec::new();
    let mut tags = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WorkloadRecord = serde_json::from_str(line)
            .map_err(|e| WorkloadError::Record { line: line_no, message: e.to_string() })?;
        if !(rec.arrival_rate_per_hour >= 0.0) || !rec.arrival_rate_per_hour.is_finite() {
            return Err(WorkloadError::Record { line: line_no, message: "arrival rate must be ≥ 0".into() });
        }
        let mut q = parse_query(&rec.sql).map_err(|source| WorkloadError::Query { line: line_no, source })?;
        if let Some(id) = rec.query_id.filter(|s| !s.is_empty()) {
            q.id = QueryId(id);
        }
        if let Some(tag) = rec.tag {
            tags.insert(q.id.clone(), tag);
        }
        match queries.iter_mut().find(|e| e.id == q.id) {
            Some(existing) => existing.arrival_rate += rec.arrival_rate_per_hour,
            None => queries.push(q.with_arrival_rate(rec.arrival_rate_per_hour)),
        }
    }
    Ok((queries, tags))
}

pub fn render_workload(queries: &[LogicalQuery], tags: &BTreeMap<QueryId, String>) -> String {
    let mut out = String::new();
    for q in queries {
        let rec = WorkloadRecord {
            query_id: Some(q.id.0.clone()),
            sql: q.sql.clone(),
            arrival_rate_per_hour: q.arrival_rate,
            tag: tags.get(&q.id).cloned(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Predicted base run times and scan sizes, indexed like the window's queries.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionTable {
    pub runtime: Vec<[f64; 3]>,
    pub bytes: Vec<f64>,
}

impl PredictionTable {
    pub fn build(queries: &[LogicalQuery], predictor: &PredictorKind) -> Result<Self, PredictError> {
        let mut runtime = Vec::with_capacity(queries.len());
        let mut bytes = Vec::with_capacity(queries.len());
        for q in queries {
            let mut r = [0.0; 3];
            for e in EngineId::ALL {
                r[e.index()] = predictor.predict_runtime(q, e)?.seconds;
            }
            runtime.push(r);
            bytes.push(predictor.predict_bytes_scanned(q)?);
        }
        Ok(Self { runtime, bytes })
    }

    pub fn get(&self, i: usize, e: EngineId) -> f64 {
        self.runtime[i][e.index()]
    }
}
