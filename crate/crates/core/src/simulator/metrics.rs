use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::blueprint::EngineId;

/// Metrics over one interval ending at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// End of the interval, seconds since scenario start.
    pub t: f64,
    pub txn_p90_s: f64,
    /// `None` when no query arrived in the interval.
    pub query_p90_s: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub class_p90_s: BTreeMap<String, f64>,
    /// Busy fraction of each active provisioned engine, transactions included.
    pub cpu: BTreeMap<EngineId, f64>,
    /// Share of the RowStore's busy fraction due to transactions.
    pub txn_cpu: f64,
    /// Query execution seconds within the interval, per engine.
    pub query_busy_s: BTreeMap<EngineId, f64>,
    pub cost_per_hour: f64,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    PhaseStarted { t: f64, phase: usize, txn_clients: f64 },
    TriggerFired { t: f64, cause: String },
    PlanComputed { t: f64, w: f64, kept_current: bool, candidates: usize, provisionings: BTreeMap<EngineId, String> },
    PlanFailed { t: f64, reason: String },
    TransitionStarted { t: f64, duration_s: f64, cost: f64, changes: Vec<String> },
    /// The active infrastructure changed.
    BlueprintChanged { t: f64, provisionings: BTreeMap<EngineId, String>, fingerprint: u64 },
    /// Only routing changed; not a blueprint change.
    RoutingUpdated { t: f64 },
}

impl Event {
    pub fn t(&self) -> f64 {
        match self {
            Event::PhaseStarted { t, .. }
            | Event::TriggerFired { t, .. }
            | Event::PlanComputed { t, .. }
            | Event::PlanFailed { t, .. }
            | Event::TransitionStarted { t, .. }
            | Event::BlueprintChanged { t, .. }
            | Event::RoutingUpdated { t } => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<MetricRecord>,
    pub events: Vec<Event>,
}

impl MetricsLog {
    pub fn blueprint_changes(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| matches!(e, Event::BlueprintChanged { .. }))
    }

    /// Long-format `timestamp,metric,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,metric,value\n");
        for r in &self.records {
            let mut row = |name: &str, v: f64| {
                let _ = writeln!(out, "{},{},{}", r.t, name, v);
            };
            row("txn_p90_s", r.txn_p90_s);
            if let Some(q) = r.query_p90_s {
                row("query_p90_s", q);
            }
            for (tag, v) in &r.class_p90_s {
                row(&format!("class_p90_s.{tag}"), *v);
            }
            for (e, v) in &r.cpu {
                row(&format!("cpu.{e}"), *v);
            }
            row("txn_cpu", r.txn_cpu);
            row("cost_per_hour", r.cost_per_hour);
            row("queries", r.queries as f64);
        }
        out
    }

    pub fn events_json(&self) -> String {
        serde_json::to_string_pretty(&self.events).expect("events serialize")
    }
}
