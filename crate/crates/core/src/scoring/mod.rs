//! Candidate scoring: provisioning-adjusted run times, queueing delay,
//! transaction latency, operating cost and transition cost.

mod eval;
mod pricing;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blueprint::{Blueprint, BlueprintError, CapabilityConfig, EngineId};
use crate::comparator::{CurrentMetrics, SloConfig};
use crate::predictor::{ProvisioningConstants, TxnModelConstants};
use crate::workload::{PredictionTable, WorkloadWindow};

pub use eval::{EvalContext, Summary};
pub use pricing::{
    operating_cost, transition_time_cost, InstanceType, PricingCatalog, StorageRate, MB, TB,
};

/// Utilization margin below the M/M/1 pole treated as overload.
pub const OVERLOAD_EPSILON: f64 = 0.02;
/// Utilization per second-per-hour of routed run time on an engine that ran
/// nothing in the last window.
pub const DEFAULT_LOAD_FALLBACK: f64 = 0.001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("utilization {0} too close to saturation")]
    UtilizationOutOfRange(f64),
    #[error("transaction utilization {rho} at or beyond the model pole {m}")]
    Saturated { rho: f64, m: f64 },
    #[error("no price for {0}")]
    UnknownPrice(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Blueprint(#[from] BlueprintError),
}

/// `P(G) = (c1·b/d + c2)·G`.
pub fn adjust_for_provisioning(g: f64, consts: &ProvisioningConstants, dest_vcpus: u32) -> f64 {
    consts.factor(dest_vcpus) * g
}

/// `q`-th percentile of M/M/1 waiting time with mean service time `k`:
/// `−K/(1−ρ)·ln((1−q)/ρ)`, zero when `ρ ≤ 1−q`.
pub fn queueing_delay(rho: f64, k: f64, q: f64) -> Result<f64, ScoringError> {
    queueing_delay_eps(rho, k, q, OVERLOAD_EPSILON)
}

pub fn queueing_delay_eps(rho: f64, k: f64, q: f64, eps: f64) -> Result<f64, ScoringError> {
    if !(0.0 < q && q < 1.0) || !(k >= 0.0) || !(rho >= 0.0) {
        return Err(ScoringError::InvalidInput(format!("rho={rho} k={k} q={q}")));
    }
    if rho >= 1.0 - eps {
        return Err(ScoringError::UtilizationOutOfRange(rho));
    }
    // (1 − q) is not exact in binary; treat the boundary as clamped.
    if rho <= 1.0 - q + 1e-12 {
        return Ok(0.0);
    }
    Ok((-k / (1.0 - rho) * ((1.0 - q) / rho).ln()).max(0.0))
}

/// Scales measured utilization by the change in routed run time.
pub fn adjust_utilization(rho: f64, candidate_sum: f64, observed_sum: f64, fallback: f64) -> f64 {
    let r = if observed_sum > 0.0 { rho * candidate_sum / observed_sum } else { fallback * candidate_sum };
    r.clamp(0.0, 1.0)
}

/// `a/(M − ρ_t) + b`.
pub fn txn_latency(rho_t: f64, consts: &TxnModelConstants) -> Result<f64, ScoringError> {
    if rho_t >= consts.m {
        return Err(ScoringError::Saturated { rho: rho_t, m: consts.m });
    }
    Ok(consts.a / (consts.m - rho_t) + consts.b)
}

pub fn adjust_txn_utilization(rho_t: f64, current_vcpus: u32, candidate_vcpus: u32, query_load_factor: f64) -> f64 {
    if candidate_vcpus == 0 {
        return 1.0;
    }
    (rho_t * current_vcpus as f64 / candidate_vcpus as f64 * query_load_factor).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorScore {
    /// Predicted latency per window query, in window order.
    pub query_latencies: Vec<f64>,
    pub txn_latency: f64,
    /// $/hour.
    pub operating_cost: f64,
    /// Seconds.
    pub transition_time: f64,
    /// Dollars.
    pub transition_cost: f64,
    /// Arrival-weighted p90 of `query_latencies`.
    pub query_p90: f64,
    #[serde(default)]
    pub class_p90: BTreeMap<String, f64>,
}

impl VectorScore {
    pub fn is_finite(&self) -> bool {
        self.query_latencies.iter().all(|v| v.is_finite())
            && self.txn_latency.is_finite()
            && self.operating_cost.is_finite()
            && self.transition_time.is_finite()
            && self.transition_cost.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EngineLoad {
    /// Busy fraction over the last window, transactions included.
    pub cpu: f64,
    /// Query execution seconds per hour over the last window.
    pub query_runtime_s_per_hour: f64,
    /// Share of `cpu` due to transactions.
    #[serde(default)]
    pub txn_cpu: f64,
    #[serde(default)]
    pub mean_runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadState {
    pub engines: BTreeMap<EngineId, EngineLoad>,
}

impl LoadState {
    pub fn get(&self, e: EngineId) -> EngineLoad {
        self.engines.get(&e).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringModels {
    pub provisioning: BTreeMap<EngineId, ProvisioningConstants>,
    pub txn: TxnModelConstants,
    #[serde(default)]
    pub load_fallback: BTreeMap<EngineId, f64>,
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    #[serde(default = "default_eps")]
    pub overload_epsilon: f64,
}

fn default_percentile() -> f64 {
    0.9
}

fn default_eps() -> f64 {
    OVERLOAD_EPSILON
}

impl ScoringModels {
    pub fn fallback(&self, e: EngineId) -> f64 {
        self.load_fallback.get(&e).copied().unwrap_or(DEFAULT_LOAD_FALLBACK)
    }

    /// Run-time multiplier of engine `e` on a provisioning with `vcpus`.
    pub fn factor(&self, e: EngineId, vcpus: u32) -> f64 {
        if e.is_serverless() {
            return 1.0;
        }
        self.provisioning.get(&e).map_or(1.0, |c| c.factor(vcpus))
    }
}

/// Everything a planning run reads.
#[derive(Debug, Clone)]
pub struct PlanningInput {
    pub current: Blueprint,
    pub window: WorkloadWindow,
    pub predictions: PredictionTable,
    pub models: ScoringModels,
    pub load: LoadState,
    pub pricing: PricingCatalog,
    pub slo: SloConfig,
    pub metrics: CurrentMetrics,
    pub caps: CapabilityConfig,
}

/// Full vector score of a complete candidate. Window queries without a
/// pre-planned assignment are routed as the router would.
pub fn score_blueprint(candidate: &Blueprint, input: &PlanningInput) -> Result<VectorScore, ScoringError> {
    let ctx = EvalContext::for_blueprint(input, candidate)?;
    let assign = ctx.route_all(candidate)?;
    Ok(ctx.score(&assign))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1e-300)
    }

    #[test]
    fn provisioning_examples() {
        let c = ProvisioningConstants::new(0.9, 0.1, 4);
        assert!(close(adjust_for_provisioning(10.0, &c, 8), 5.5));
        assert!(close(adjust_for_provisioning(10.0, &c, 4), 10.0));
        let serial = ProvisioningConstants::new(0.0, 0.7, 4);
        assert_eq!(adjust_for_provisioning(3.0, &serial, 2), adjust_for_provisioning(3.0, &serial, 64));
    }

    #[test]
    fn queueing_examples() {
        assert_eq!(queueing_delay(0.1, 1.0, 0.9).unwrap(), 0.0);
        assert!(close(queueing_delay(0.9, 1.0, 0.9).unwrap(), 10.0 * 9f64.ln()));
        assert!(close(queueing_delay(0.5, 2.0, 0.9).unwrap(), -4.0 * 0.2f64.ln()));
        assert_eq!(queueing_delay(0.05, 2.0, 0.9).unwrap(), 0.0);
        assert!(close(queueing_delay(0.3, 2.0, 0.9).unwrap(), -2.0 / 0.7 * (0.1f64 / 0.3).ln()));
        assert!(queueing_delay(0.97, 1.0, 0.9).unwrap() > 70.0);
        assert_eq!(queueing_delay(0.98, 1.0, 0.9), Err(ScoringError::UtilizationOutOfRange(0.98)));
        assert!(queueing_delay(0.99, 1.0, 0.9).is_err());
    }

    #[test]
    fn utilization_examples() {
        assert_eq!(adjust_utilization(0.4, 100.0, 100.0, 0.001), 0.4);
        assert_eq!(adjust_utilization(0.4, 200.0, 100.0, 0.001), 0.8);
        assert!(close(adjust_utilization(0.7, 300.0, 0.0, 0.001), 0.3));
        assert_eq!(adjust_utilization(0.7, 3000.0, 100.0, 0.001), 1.0);
    }

    #[test]
    fn txn_examples() {
        let c = TxnModelConstants { a: 1.0, b: 0.005, m: 1.0, residual: 0.0 };
        assert!(close(txn_latency(0.5, &c).unwrap(), 2.005));
        assert!(close(txn_latency(0.0, &c).unwrap(), 1.005));
        assert!(matches!(txn_latency(1.0, &c), Err(ScoringError::Saturated { .. })));
        assert_eq!(adjust_txn_utilization(0.3, 4, 4, 1.0), 0.3);
        assert_eq!(adjust_txn_utilization(0.3, 4, 8, 1.0), 0.15);
        assert!(close(adjust_txn_utilization(0.3, 8, 4, 1.5), 0.9));
        assert_eq!(adjust_txn_utilization(0.4, 8, 4, 1.5), 1.0);
    }
}
