use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ScoringError;
use crate::blueprint::{Blueprint, ChangeKind, EngineId, TableMove, TransitionPlan};
use crate::query::{DatasetCatalog, LogicalQuery};

/// 2^40 bytes.
pub const TB: f64 = 1_099_511_627_776.0;
/// 2^20 bytes.
pub const MB: f64 = 1_048_576.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceType {
    pub name: String,
    pub vcpus: u32,
    pub price_per_hour: f64,
}

/// Storage price per row-hour: one rate for every table, or a per-table map
/// with a `default` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StorageRate {
    Flat(f64),
    PerTable(BTreeMap<String, f64>),
}

impl StorageRate {
    pub fn rate(&self, table: &str) -> Option<f64> {
        match self {
            StorageRate::Flat(r) => Some(*r),
            StorageRate::PerTable(m) => m.get(table).or_else(|| m.get("default")).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingCatalog {
    /// Instance types per engine, ordered from smallest to largest.
    pub instance_prices: BTreeMap<EngineId, Vec<InstanceType>>,
    pub scan_price_per_tb: f64,
    pub storage_per_row_hour: BTreeMap<EngineId, StorageRate>,
    pub export_rate_bps: BTreeMap<EngineId, f64>,
    pub import_rate_bps: BTreeMap<EngineId, f64>,
    pub rowstore_change_s: f64,
    pub elastic_resize_s: f64,
    pub classic_resize_bps: f64,
    /// Dollars per TB moved between engines.
    #[serde(default)]
    pub transfer_price_per_tb: f64,
}

impl PricingCatalog {
    pub fn from_json(text: &str) -> Result<Self, ScoringError> {
        let p: Self = serde_json::from_str(text).map_err(|e| ScoringError::InvalidInput(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        let bad = |what: &str| Err(ScoringError::InvalidInput(format!("{what} must be positive")));
        for (e, list) in &self.instance_prices {
            if list.iter().any(|i| !(i.price_per_hour > 0.0) || i.vcpus == 0) {
                return bad(&format!("{e} instance prices and vcpus"));
            }
        }
        if self.export_rate_bps.values().chain(self.import_rate_bps.values()).any(|r| !(*r > 0.0)) {
            return bad("transfer rates");
        }
        if !(self.classic_resize_bps > 0.0) {
            return bad("classic_resize_bps");
        }
        if self.scan_price_per_tb < 0.0 || self.rowstore_change_s < 0.0 || self.elastic_resize_s < 0.0 {
            return bad("scan price and fixed transition times");
        }
        Ok(())
    }

    pub fn instances(&self, e: EngineId) -> &[InstanceType] {
        self.instance_prices.get(&e).map_or(&[], Vec::as_slice)
    }

    pub fn instance(&self, e: EngineId, name: &str) -> Result<&InstanceType, ScoringError> {
        self.instances(e)
            .iter()
            .find(|i| i.name == name)
            .ok_or_else(|| ScoringError::UnknownPrice(format!("{e} instance {name}")))
    }

    pub fn storage_rate(&self, e: EngineId, table: &str) -> Result<f64, ScoringError> {
        self.storage_per_row_hour
            .get(&e)
            .and_then(|r| r.rate(table))
            .ok_or_else(|| ScoringError::UnknownPrice(format!("storage of {table} on {e}")))
    }

    pub fn scan_price_per_byte(&self) -> f64 {
        self.scan_price_per_tb / TB
    }

    pub fn move_duration(&self, mv: &TableMove) -> Result<f64, ScoringError> {
        let ke = self
            .export_rate_bps
            .get(&mv.source)
            .ok_or_else(|| ScoringError::UnknownPrice(format!("export rate of {}", mv.source)))?;
        let ki = self
            .import_rate_bps
            .get(&mv.dest)
            .ok_or_else(|| ScoringError::UnknownPrice(format!("import rate of {}", mv.dest)))?;
        let s = mv.bytes as f64;
        Ok(s / ke + s / ki)
    }

    pub fn change_duration(&self, kind: ChangeKind, warehouse_data_bytes: f64) -> f64 {
        match kind {
            ChangeKind::InstanceChange => self.rowstore_change_s,
            ChangeKind::ElasticResize | ChangeKind::Unpause => self.elastic_resize_s,
            ChangeKind::ClassicResize => warehouse_data_bytes / self.classic_resize_bps,
            ChangeKind::Pause | ChangeKind::ReplicaRemove => 0.0,
        }
    }
}

/// Dollars per hour: node-hours, pay-per-scan queries, and storage.
pub fn operating_cost(
    bp: &Blueprint,
    queries: &[LogicalQuery],
    pricing: &PricingCatalog,
    catalog: &DatasetCatalog,
    scan_bytes: &[f64],
) -> Result<f64, ScoringError> {
    let mut cost = 0.0;
    for (e, p) in &bp.provisionings {
        if !e.is_serverless() && p.node_count > 0 {
            cost += p.node_count as f64 * pricing.instance(*e, &p.instance_type)?.price_per_hour;
        }
    }
    for (q, bytes) in queries.iter().zip(scan_bytes) {
        if bp.routing.assignments.get(&q.id) == Some(&EngineId::ScanService) {
            cost += q.arrival_rate * bytes * pricing.scan_price_per_byte();
        }
    }
    for (t, engines) in &bp.placement.placement {
        let rows = catalog.table(t).map_err(|e| ScoringError::InvalidInput(e.to_string()))?.row_count as f64;
        for e in engines {
            cost += pricing.storage_rate(*e, t)? * rows;
        }
    }
    Ok(cost)
}

/// `(T_T, C_T)`: the slowest engine's serial transition time, and the
/// transfer charge for moved bytes.
pub fn transition_time_cost(
    plan: &TransitionPlan,
    pricing: &PricingCatalog,
    warehouse_data_bytes: f64,
) -> Result<(f64, f64), ScoringError> {
    let mut per_engine = [0.0f64; 3];
    let mut cost = 0.0;
    for mv in &plan.table_moves {
        per_engine[mv.dest.index()] += pricing.move_duration(mv)?;
        cost += mv.bytes as f64 / TB * pricing.transfer_price_per_tb;
    }
    for ch in &plan.provisioning_changes {
        per_engine[ch.engine.index()] += pricing.change_duration(ch.kind, warehouse_data_bytes);
    }
    Ok((per_engine.into_iter().fold(0.0, f64::max), cost))
}
