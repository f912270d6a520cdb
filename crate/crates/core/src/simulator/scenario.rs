use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::reference::{
    light_analytics, reference_capabilities, reference_catalog, reference_models, reference_pricing,
    reference_txn_model,
};
use super::triggers::TriggerConfig;
use super::SimError;
use crate::blueprint::{validate_blueprint, Blueprint, CapabilityConfig, EngineId, Provisioning};
use crate::comparator::SloConfig;
use crate::predictor::TxnModelConstants;
use crate::query::DatasetCatalog;
use crate::scoring::{PricingCatalog, ScoringModels};
use crate::search::DEFAULT_BEAM_WIDTH;
use crate::workload::{parse_workload, render_workload, WorkloadRecord};

/// Transactional client model and the RowStore's true latency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TxnConfig {
    pub per_client_tps: f64,
    /// vCPU-seconds of RowStore work per transaction.
    pub cpu_s_per_txn: f64,
    /// True p90 latency `a/(M − ρ) + b` at RowStore utilization `ρ`.
    pub latency: TxnModelConstants,
    /// Latency reported once `ρ` reaches the pole.
    pub saturated_latency_s: f64,
    /// Multiplier on transaction latency right after a RowStore instance
    /// change (a stand-in for failover; not a measured magnitude).
    pub failover_spike_factor: f64,
    pub failover_spike_s: f64,
}

impl Default for TxnConfig {
    fn default() -> Self {
        Self {
            per_client_tps: 10.0,
            cpu_s_per_txn: 0.01,
            latency: reference_txn_model(),
            saturated_latency_s: 10.0,
            failover_spike_factor: 10.0,
            failover_spike_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanningConfig {
    pub beam_width: usize,
    /// Lattice steps considered per engine.
    pub radius: usize,
    /// Length of the query log the planner optimizes for, seconds.
    pub window_s: f64,
    /// Length of the utilization and latency history fed to scoring, seconds.
    pub load_window_s: f64,
    pub max_nodes: u32,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self { beam_width: DEFAULT_BEAM_WIDTH, radius: 1, window_s: 3600.0, load_window_s: 300.0, max_nodes: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorConfig {
    Oracle,
    Noisy { fraction: f64, error: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub instance_type: String,
    pub node_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialBlueprint {
    pub provisionings: BTreeMap<EngineId, InstanceSpec>,
    /// Extra table copies per engine; `"*"` means every table.
    #[serde(default)]
    pub replicas: BTreeMap<EngineId, Vec<String>>,
    /// Engine every workload query is pinned to, unless listed in `assignments`.
    #[serde(default)]
    pub route_all_to: Option<EngineId>,
    #[serde(default)]
    pub assignments: BTreeMap<String, EngineId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub start_s: f64,
    pub txn_clients: f64,
    /// Inline workload records.
    #[serde(default)]
    pub queries: Vec<WorkloadRecord>,
    /// JSON Lines workload, relative to the scenario file.
    #[serde(default)]
    pub workload_file: Option<PathBuf>,
    /// Name of a built-in query mix (`light_analytics`).
    #[serde(default)]
    pub builtin: Option<String>,
    /// Multiplier on every arrival rate of this phase.
    #[serde(default = "one")]
    pub rate_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    /// Catalog JSON path; the built-in reference catalog when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    /// Pricing JSON path; the built-in reference pricing when absent.
    #[serde(default)]
    pub pricing: Option<PathBuf>,
    #[serde(default)]
    pub capabilities: Option<CapabilityConfig>,
    pub slo: SloConfig,
    #[serde(default)]
    pub triggers: TriggerConfig,
    #[serde(default)]
    pub txn: TxnConfig,
    #[serde(default)]
    pub planning: PlanningConfig,
    /// Planner models; the calibrated reference models when absent.
    #[serde(default)]
    pub models: Option<ScoringModels>,
    #[serde(default = "oracle")]
    pub predictor: PredictorConfig,
    pub initial: InitialBlueprint,
    pub phases: Vec<Phase>,
    #[serde(default = "metrics_interval")]
    pub metrics_interval_s: u64,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn oracle() -> PredictorConfig {
    PredictorConfig::Oracle
}

fn metrics_interval() -> u64 {
    60
}

/// A workload phase with its queries resolved.
#[derive(Debug, Clone)]
pub struct ResolvedPhase {
    pub start_s: f64,
    pub txn_clients: f64,
    pub records: Vec<WorkloadRecord>,
}

/// Everything a run needs, with files loaded and defaults filled in.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub config: ScenarioConfig,
    pub catalog: Arc<DatasetCatalog>,
    pub pricing: PricingCatalog,
    pub caps: CapabilityConfig,
    pub models: ScoringModels,
    pub phases: Vec<ResolvedPhase>,
    pub initial: Blueprint,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let mut s = Self::from_json(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    fn read(&self, p: &Path) -> Result<String, SimError> {
        let full = match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        };
        std::fs::read_to_string(&full).map_err(|e| SimError::Config(format!("{}: {e}", full.display())))
    }

    pub fn resolve(&self) -> Result<ResolvedScenario, SimError> {
        self.triggers.validate()?;
        if !(self.duration_s > 0.0) || self.metrics_interval_s == 0 {
            return Err(SimError::Config("duration and metrics interval must be positive".into()));
        }
        if !(self.slo.txn_p90_s > 0.0 && self.slo.query_p90_s > 0.0 && self.slo.benefit_period_hours >= 0.0) {
            return Err(SimError::Config("SLOs must be positive".into()));
        }
        if !(self.planning.window_s > 0.0 && self.planning.load_window_s > 0.0) {
            return Err(SimError::Config("planning windows must be positive".into()));
        }
        let catalog = match &self.catalog {
            Some(p) => DatasetCatalog::from_json(&self.read(p)?).map_err(|e| SimError::Config(e.to_string()))?,
            None => reference_catalog(),
        };
        let catalog = Arc::new(catalog);
        let pricing = match &self.pricing {
            Some(p) => PricingCatalog::from_json(&self.read(p)?).map_err(|e| SimError::Config(e.to_string()))?,
            None => reference_pricing(),
        };
        let caps = self.capabilities.clone().unwrap_or_else(reference_capabilities);
        let models = self.models.clone().unwrap_or_else(reference_models);

        if self.phases.is_empty() {
            return Err(SimError::Config("at least one phase is required".into()));
        }
        let mut phases = Vec::with_capacity(self.phases.len());
        let mut last = f64::NEG_INFINITY;
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.start_s >= 0.0) || p.start_s <= last || (i == 0 && p.start_s != 0.0) {
                return Err(SimError::Config("phases must start at 0 and be strictly increasing".into()));
            }
            if !(p.txn_clients >= 0.0) || !(p.rate_scale >= 0.0) {
                return Err(SimError::Config(format!("phase {i}: negative load")));
            }
            last = p.start_s;
            let mut records = p.queries.clone();
            if let Some(f) = &p.workload_file {
                let text = self.read(f)?;
                let (qs, tags) = parse_workload(&text).map_err(|e| SimError::Config(e.to_string()))?;
                let rendered = render_workload(&qs, &tags);
                for line in rendered.lines() {
                    records.push(serde_json::from_str(line).expect("rendered workload parses"));
                }
            }
            match p.builtin.as_deref() {
                None => {}
                Some("light_analytics") => records.extend(light_analytics(30.0)),
                Some(other) => return Err(SimError::Config(format!("unknown built-in workload {other}"))),
            }
            for r in &mut records {
                r.arrival_rate_per_hour *= p.rate_scale;
            }
            phases.push(ResolvedPhase { start_s: p.start_s, txn_clients: p.txn_clients, records });
        }

        let initial = self.initial_blueprint(&pricing, &catalog, &phases)?;
        Ok(ResolvedScenario { config: self.clone(), catalog, pricing, caps, models, phases, initial })
    }

    fn initial_blueprint(
        &self,
        pricing: &PricingCatalog,
        catalog: &DatasetCatalog,
        phases: &[ResolvedPhase],
    ) -> Result<Blueprint, SimError> {
        let mut provs = BTreeMap::from([(EngineId::ScanService, Provisioning::serverless())]);
        for (e, spec) in &self.initial.provisionings {
            if e.is_serverless() {
                continue;
            }
            let it = pricing.instance(*e, &spec.instance_type).map_err(|x| SimError::Config(x.to_string()))?;
            provs.insert(*e, Provisioning::new(*e, spec.instance_type.clone(), spec.node_count, it.vcpus));
        }
        if !provs.get(&EngineId::RowStore).is_some_and(Provisioning::is_active) {
            return Err(SimError::Config("the initial blueprint needs an active RowStore".into()));
        }
        let mut bp = Blueprint::derived(provs, BTreeMap::new(), &[], catalog);
        for (e, tables) in &self.initial.replicas {
            let names: Vec<String> = if tables.iter().any(|t| t == "*") {
                catalog.table_names().map(str::to_string).collect()
            } else {
                tables.clone()
            };
            for t in names {
                if catalog.tables.get(&t).is_none() {
                    return Err(SimError::Config(format!("unknown table {t}")));
                }
                bp.placement.placement.entry(t).or_insert_with(BTreeSet::new).insert(*e);
            }
        }
        let ids: BTreeSet<String> = phases
            .iter()
            .flat_map(|p| p.records.iter())
            .map(|r| {
                r.query_id.clone().unwrap_or_else(|| {
                    crate::query::parse_query(&r.sql).map(|q| q.id.0).unwrap_or_default()
                })
            })
            .collect();
        if let Some(e) = self.initial.route_all_to {
            for id in &ids {
                bp.routing.assignments.insert(crate::query::QueryId(id.clone()), e);
            }
        }
        for (id, e) in &self.initial.assignments {
            bp.routing.assignments.insert(crate::query::QueryId(id.clone()), *e);
        }
        let report = validate_blueprint(&bp, catalog);
        if !report.is_valid() {
            let v: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
            return Err(SimError::Config(format!("initial blueprint is invalid: {}", v.join("; "))));
        }
        Ok(bp)
    }
}
