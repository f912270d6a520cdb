//! Run-time and scan-size prediction behind one interface, plus fitting of
//! the analytical model constants.

mod fit;

use std::collections::BTreeMap;
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blueprint::EngineId;
use crate::fingerprint::{unit_interval, Fnv64};
use crate::query::{aggregate_features, DatasetCatalog, LogicalQuery, QueryError, QueryId};
use crate::simulator::GroundTruth;

pub use fit::{
    fit_provisioning_constants, fit_txn_model, ProvisioningConstants, ProvisioningObservation,
    TxnModelConstants, M_GRID_MAX, M_GRID_STEP,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("no calibration data for query {0}")]
    NoCalibration(String),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("inputs must be positive")]
    NonPositiveInput,
    #[error("invalid noise parameters: {0}")]
    InvalidNoise(String),
    #[error("calibration file: {0}")]
    Calibration(String),
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimePrediction {
    pub seconds: f64,
}

/// Multiplicative error applied to a deterministic subset of predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub fraction: f64,
    pub error: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(fraction: f64, error: f64, seed: u64) -> Result<Self, PredictError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(PredictError::InvalidNoise(format!("fraction {fraction} outside [0, 1]")));
        }
        if !(error > -1.0) || !error.is_finite() {
            return Err(PredictError::InvalidNoise(format!("error {error} must be > -1")));
        }
        Ok(Self { fraction, error, seed })
    }

    /// Whether the (query, target) prediction is perturbed. Targets 0..3 are
    /// engines, 3 is the scan-size prediction.
    fn selects(&self, q: &QueryId, target: u64) -> bool {
        let h = Fnv64::new().write_u64(self.seed).write_str(q.as_str()).write_u64(target).finish();
        unit_interval(h) < self.fraction
    }

    fn apply(&self, q: &QueryId, target: u64, truth: f64) -> f64 {
        if self.selects(q, target) {
            truth * (1.0 + self.error)
        } else {
            truth
        }
    }
}

/// Measured base run times (and optional scan sizes) for known queries.
#[derive(Debug, Clone, Default)]
pub struct CalibrationTable {
    runtimes: BTreeMap<QueryId, BTreeMap<EngineId, f64>>,
    bytes: BTreeMap<QueryId, f64>,
    features: BTreeMap<QueryId, [f64; 4]>,
    catalog: Option<Arc<DatasetCatalog>>,
}

#[derive(Debug, Deserialize)]
struct CalibrationRow {
    query_id: String,
    engine: EngineId,
    runtime_s: f64,
    bytes_scanned: Option<f64>,
}

impl CalibrationTable {
    pub fn insert(&mut self, q: QueryId, e: EngineId, runtime_s: f64, bytes: Option<f64>) {
        if let Some(b) = bytes {
            self.bytes.insert(q.clone(), b);
        }
        self.runtimes.entry(q).or_default().insert(e, runtime_s);
    }

    /// Reads `query_id,engine,runtime_s,bytes_scanned` rows.
    pub fn from_csv(reader: impl Read) -> Result<Self, PredictError> {
        let mut table = Self::default();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for row in rdr.deserialize::<CalibrationRow>() {
            let row = row.map_err(|e| PredictError::Calibration(e.to_string()))?;
            if !(row.runtime_s > 0.0) {
                return Err(PredictError::Calibration(format!("non-positive runtime for {}", row.query_id)));
            }
            table.insert(QueryId(row.query_id), row.engine, row.runtime_s, row.bytes_scanned);
        }
        Ok(table)
    }

    /// Enables the nearest-neighbour fallback: calibrated queries are
    /// featurized so unseen queries can borrow the closest measurement.
    pub fn with_features(mut self, known: &[LogicalQuery], catalog: Arc<DatasetCatalog>) -> Result<Self, PredictError> {
        for q in known {
            if self.runtimes.contains_key(&q.id) {
                self.features.insert(q.id.clone(), aggregate_features(q, &catalog)?);
            }
        }
        self.catalog = Some(catalog);
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.runtimes.is_empty()
    }

    fn nearest<T>(&self, q: &LogicalQuery, lookup: impl Fn(&QueryId) -> Option<T>) -> Result<T, PredictError> {
        let miss = || PredictError::NoCalibration(q.id.to_string());
        let cat = self.catalog.as_ref().ok_or_else(miss)?;
        let f = aggregate_features(q, cat)?;
        let mut best: Option<(f64, T)> = None;
        for (id, g) in &self.features {
            let Some(v) = lookup(id) else { continue };
            let d: f64 = f.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, v));
            }
        }
        best.map(|(_, v)| v).ok_or_else(miss)
    }

    fn runtime(&self, q: &LogicalQuery, e: EngineId) -> Result<f64, PredictError> {
        if self.is_empty() {
            return Err(PredictError::NoCalibration(q.id.to_string()));
        }
        if let Some(v) = self.runtimes.get(&q.id).and_then(|m| m.get(&e)) {
            return Ok(*v);
        }
        self.nearest(q, |id| self.runtimes.get(id).and_then(|m| m.get(&e)).copied())
    }

    fn bytes(&self, q: &LogicalQuery) -> Result<f64, PredictError> {
        if self.is_empty() {
            return Err(PredictError::NoCalibration(q.id.to_string()));
        }
        if let Some(v) = self.bytes.get(&q.id) {
            return Ok(*v);
        }
        self.nearest(q, |id| self.bytes.get(id).copied())
    }
}

#[derive(Debug, Clone)]
pub enum PredictorKind {
    Oracle(Arc<GroundTruth>),
    NoisyOracle(Arc<GroundTruth>, NoiseSpec),
    Table(Arc<CalibrationTable>),
}

impl PredictorKind {
    pub fn predict_runtime(&self, q: &LogicalQuery, e: EngineId) -> Result<RuntimePrediction, PredictError> {
        let seconds = match self {
            PredictorKind::Oracle(t) => t.runtime(q, e)?,
            PredictorKind::NoisyOracle(t, n) => n.apply(&q.id, e.index() as u64, t.runtime(q, e)?),
            PredictorKind::Table(t) => t.runtime(q, e)?,
        };
        Ok(RuntimePrediction { seconds })
    }

    pub fn predict_bytes_scanned(&self, q: &LogicalQuery) -> Result<f64, PredictError> {
        match self {
            PredictorKind::Oracle(t) => Ok(t.bytes_scanned(q)?),
            PredictorKind::NoisyOracle(t, n) => Ok(n.apply(&q.id, 3, t.bytes_scanned(q)?)),
            PredictorKind::Table(t) => t.bytes(q),
        }
    }
}

pub fn predict_runtime(q: &LogicalQuery, e: EngineId, kind: &PredictorKind) -> Result<RuntimePrediction, PredictError> {
    kind.predict_runtime(q, e)
}

pub fn predict_bytes_scanned(q: &LogicalQuery, kind: &PredictorKind) -> Result<f64, PredictError> {
    kind.predict_bytes_scanned(q)
}

/// `max(p/a, a/p)`.
pub fn q_error(p: f64, a: f64) -> Result<f64, PredictError> {
    if !(p > 0.0 && a > 0.0) || !p.is_finite() || !a.is_finite() {
        return Err(PredictError::NonPositiveInput);
    }
    Ok((p / a).max(a / p))
}
