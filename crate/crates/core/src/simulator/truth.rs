//! Synthetic engine behaviour: unloaded run time of any query on each engine
//! at its base provisioning, and bytes a full scan of the query reads.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blueprint::EngineId;
use crate::query::{estimate_selectivity, DatasetCatalog, LogicalQuery, QueryError, QueryId};

/// Linear cost coefficients for one engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineSpeed {
    /// Startup/dispatch overhead in seconds.
    pub fixed_s: f64,
    /// Seconds per estimated scanned row (selective access paths).
    pub per_scanned_row_s: f64,
    /// Seconds per table row regardless of filters (full column scans).
    pub per_table_row_s: f64,
    /// Seconds per byte read.
    pub per_byte_s: f64,
    /// Multiplier added per join on the row-dependent terms.
    pub join_factor: f64,
    /// Extra fraction added when the query aggregates.
    pub aggregate_factor: f64,
}

impl EngineSpeed {
    fn runtime(&self, f: &QueryCostInputs) -> f64 {
        let rows = self.per_scanned_row_s * f.scanned_rows + self.per_table_row_s * f.table_rows;
        let body = (rows + self.per_byte_s * f.bytes) * (1.0 + self.join_factor * f.joins as f64);
        let agg = if f.aggregates { 1.0 + self.aggregate_factor } else { 1.0 };
        self.fixed_s + body * agg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthParams {
    pub speeds: BTreeMap<EngineId, EngineSpeed>,
}

impl Default for TruthParams {
    fn default() -> Self {
        let speeds = BTreeMap::from([
            (
                EngineId::RowStore,
                EngineSpeed {
                    fixed_s: 0.02,
                    per_scanned_row_s: 2.5e-6,
                    per_table_row_s: 0.0,
                    per_byte_s: 0.0,
                    join_factor: 1.0,
                    aggregate_factor: 0.1,
                },
            ),
            (
                EngineId::Warehouse,
                EngineSpeed {
                    fixed_s: 0.6,
                    per_scanned_row_s: 0.0,
                    per_table_row_s: 6e-8,
                    per_byte_s: 0.0,
                    join_factor: 0.25,
                    aggregate_factor: 0.05,
                },
            ),
            (
                EngineId::ScanService,
                EngineSpeed {
                    fixed_s: 2.5,
                    per_scanned_row_s: 0.0,
                    per_table_row_s: 0.0,
                    per_byte_s: 1.0 / (1u64 << 30) as f64,
                    join_factor: 0.2,
                    aggregate_factor: 0.05,
                },
            ),
        ]);
        Self { speeds }
    }
}

/// Cardinality summary the cost formulas consume.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryCostInputs {
    pub scanned_rows: f64,
    pub table_rows: f64,
    pub bytes: f64,
    pub joins: usize,
    pub aggregates: bool,
}

/// Deterministic ground truth shared by the simulator and the oracle
/// predictors.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    catalog: Arc<DatasetCatalog>,
    params: TruthParams,
    runtime_overrides: BTreeMap<(QueryId, EngineId), f64>,
    bytes_overrides: BTreeMap<QueryId, f64>,
}

impl GroundTruth {
    pub fn new(catalog: Arc<DatasetCatalog>, params: TruthParams) -> Self {
        Self { catalog, params, runtime_overrides: BTreeMap::new(), bytes_overrides: BTreeMap::new() }
    }

    /// Pins the base run time of one (query, engine) pair.
    pub fn with_runtime(mut self, q: &QueryId, e: EngineId, seconds: f64) -> Self {
        self.runtime_overrides.insert((q.clone(), e), seconds);
        self
    }

    pub fn with_bytes(mut self, q: &QueryId, bytes: f64) -> Self {
        self.bytes_overrides.insert(q.clone(), bytes);
        self
    }

    pub fn catalog(&self) -> &Arc<DatasetCatalog> {
        &self.catalog
    }

    pub fn params(&self) -> &TruthParams {
        &self.params
    }

    pub fn cost_inputs(&self, q: &LogicalQuery) -> Result<QueryCostInputs, QueryError> {
        let est = estimate_selectivity(q, &self.catalog)?;
        let mut scanned = 0.0;
        let mut total = 0.0;
        for t in &q.tables {
            let rows = self.catalog.table(t)?.row_count as f64;
            total += rows;
            scanned += rows * est.scans[t];
        }
        Ok(QueryCostInputs {
            scanned_rows: scanned,
            table_rows: total,
            bytes: self.scan_bytes(q)?,
            joins: q.join_predicates.len(),
            aggregates: q.has_aggregation(),
        })
    }

    fn scan_bytes(&self, q: &LogicalQuery) -> Result<f64, QueryError> {
        let mut bytes = 0.0;
        for t in &q.tables {
            let stats = self.catalog.table(t)?;
            let used = q.columns.get(t).map_or(0, Vec::len);
            let known = stats.columns.len();
            let frac = if used == 0 || known == 0 { 1.0 } else { (used as f64 / known.max(used) as f64).min(1.0) };
            bytes += stats.size_bytes as f64 * frac;
        }
        Ok(bytes)
    }

    /// Unloaded run time on the engine's base provisioning.
    pub fn runtime(&self, q: &LogicalQuery, e: EngineId) -> Result<f64, QueryError> {
        if let Some(v) = self.runtime_overrides.get(&(q.id.clone(), e)) {
            return Ok(*v);
        }
        let speed = self.params.speeds.get(&e).copied().unwrap_or_else(|| TruthParams::default().speeds[&e]);
        Ok(speed.runtime(&self.cost_inputs(q)?))
    }

    /// Bytes the query reads when executed on the scan service.
    pub fn bytes_scanned(&self, q: &LogicalQuery) -> Result<f64, QueryError> {
        if let Some(v) = self.bytes_overrides.get(&q.id) {
            return Ok(*v);
        }
        self.scan_bytes(q)
    }
}
