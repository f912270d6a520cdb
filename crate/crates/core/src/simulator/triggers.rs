use serde::{Deserialize, Serialize};

use super::metrics::MetricRecord;
use super::SimError;
use crate::blueprint::EngineId;
use crate::comparator::SloConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerConfig {
    pub cpu_high: f64,
    pub cpu_low: f64,
    /// How long a CPU condition must hold, seconds.
    pub sustain_s: f64,
    /// How long a latency SLO violation must hold, seconds.
    pub latency_sustain_s: f64,
    /// Re-plan this long after each blueprint change.
    pub recheck_after_change_s: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self { cpu_high: 0.85, cpu_low: 0.15, sustain_s: 600.0, latency_sustain_s: 300.0, recheck_after_change_s: 3600.0 }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = 0.0 <= self.cpu_low
            && self.cpu_low < self.cpu_high
            && self.cpu_high <= 1.0
            && self.sustain_s > 0.0
            && self.latency_sustain_s > 0.0
            && self.recheck_after_change_s > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!("invalid trigger thresholds {self:?}")))
        }
    }
}

/// Trigger causes in priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerCause {
    LatencySlo,
    CpuHigh(EngineId),
    CpuLow(EngineId),
    Recheck,
}

impl std::fmt::Display for TriggerCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TriggerCause::LatencySlo => f.write_str("latency_slo"),
            TriggerCause::CpuHigh(e) => write!(f, "cpu_high:{e}"),
            TriggerCause::CpuLow(e) => write!(f, "cpu_low:{e}"),
            TriggerCause::Recheck => f.write_str("recheck"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerFired {
    pub t: f64,
    pub cause: TriggerCause,
}

/// Where the controller stands when triggers are checked.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TriggerClock {
    pub now: f64,
    /// Completion time of the last blueprint change, if any.
    pub last_change_at: Option<f64>,
    /// Whether the recheck for `last_change_at` already ran.
    pub recheck_done: bool,
    /// Metrics at or before this time are ignored (last plan or change).
    pub quiet_since: f64,
}

/// Highest-priority trigger that holds at `clock.now`. Sustained conditions
/// need every record in the trailing window to agree, and the window must
/// lie after `quiet_since`.
pub fn evaluate_triggers(
    window: &[MetricRecord],
    cfg: &TriggerConfig,
    slo: &SloConfig,
    clock: &TriggerClock,
) -> Option<TriggerFired> {
    let sustained = |span: f64, pred: &dyn Fn(&MetricRecord) -> bool| {
        if clock.now - clock.quiet_since < span - 1e-9 {
            return false;
        }
        let from = clock.now - span;
        let mut recent = window.iter().filter(|r| r.t > from + 1e-9 && r.t <= clock.now + 1e-9).peekable();
        recent.peek().is_some() && recent.all(pred)
    };
    let fired = |cause| Some(TriggerFired { t: clock.now, cause });

    let violates = |r: &MetricRecord| {
        r.txn_p90_s > slo.txn_p90_s
            || r.query_p90_s.is_some_and(|q| q > slo.query_p90_s)
            || r.class_p90_s.iter().any(|(tag, v)| slo.class_slo(tag).is_some_and(|s| *v > s))
    };
    if sustained(cfg.latency_sustain_s, &violates) {
        return fired(TriggerCause::LatencySlo);
    }
    let engines: Vec<EngineId> = window.last().map(|r| r.cpu.keys().copied().collect()).unwrap_or_default();
    for e in &engines {
        if sustained(cfg.sustain_s, &|r: &MetricRecord| r.cpu.get(e).is_some_and(|c| *c > cfg.cpu_high)) {
            return fired(TriggerCause::CpuHigh(*e));
        }
    }
    for e in &engines {
        if sustained(cfg.sustain_s, &|r: &MetricRecord| r.cpu.get(e).is_some_and(|c| *c < cfg.cpu_low)) {
            return fired(TriggerCause::CpuLow(*e));
        }
    }
    match clock.last_change_at {
        Some(c) if !clock.recheck_done && clock.now - c >= cfg.recheck_after_change_s => fired(TriggerCause::Recheck),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn rec(t: f64, cpu: f64) -> MetricRecord {
        MetricRecord {
            t,
            txn_p90_s: 0.01,
            query_p90_s: Some(1.0),
            class_p90_s: BTreeMap::new(),
            cpu: BTreeMap::from([(EngineId::Warehouse, cpu)]),
            txn_cpu: 0.0,
            query_busy_s: BTreeMap::new(),
            cost_per_hour: 1.0,
            queries: 1,
        }
    }

    fn slo() -> SloConfig {
        SloConfig::new(0.03, 30.0, 24.0)
    }

    fn at(now: f64) -> TriggerClock {
        TriggerClock { now, ..Default::default() }
    }

    #[test]
    fn sustained_high_cpu_fires() {
        let w: Vec<_> = (1..=10).map(|i| rec(60.0 * i as f64, 0.9)).collect();
        let f = evaluate_triggers(&w, &TriggerConfig::default(), &slo(), &at(600.0)).unwrap();
        assert_eq!(f.cause, TriggerCause::CpuHigh(EngineId::Warehouse));
    }

    #[test]
    fn short_burst_does_not_fire() {
        let mut w: Vec<_> = (1..=5).map(|i| rec(60.0 * i as f64, 0.9)).collect();
        w.extend((6..=10).map(|i| rec(60.0 * i as f64, 0.5)));
        assert_eq!(evaluate_triggers(&w, &TriggerConfig::default(), &slo(), &at(600.0)), None);
        assert_eq!(evaluate_triggers(&w[..5], &TriggerConfig::default(), &slo(), &at(300.0)), None);
    }

    #[test]
    fn quiet_period_resets_evidence() {
        let w: Vec<_> = (1..=10).map(|i| rec(60.0 * i as f64, 0.05)).collect();
        let clock = TriggerClock { now: 600.0, quiet_since: 120.0, ..Default::default() };
        assert_eq!(evaluate_triggers(&w, &TriggerConfig::default(), &slo(), &clock), None);
        let f = evaluate_triggers(&w, &TriggerConfig::default(), &slo(), &at(600.0)).unwrap();
        assert_eq!(f.cause, TriggerCause::CpuLow(EngineId::Warehouse));
    }

    #[test]
    fn latency_outranks_cpu() {
        let w: Vec<_> = (1..=10)
            .map(|i| {
                let mut r = rec(60.0 * i as f64, 0.95);
                r.txn_p90_s = 0.05;
                r
            })
            .collect();
        let f = evaluate_triggers(&w, &TriggerConfig::default(), &slo(), &at(600.0)).unwrap();
        assert_eq!(f.cause, TriggerCause::LatencySlo);
    }

    #[test]
    fn recheck_fires_once_after_change() {
        let cfg = TriggerConfig::default();
        let w: Vec<_> = (1..=120).map(|i| rec(60.0 * i as f64, 0.5)).collect();
        let mut done = false;
        let mut fires = Vec::new();
        for now in 1..=7200 {
            let clock = TriggerClock { now: now as f64, last_change_at: Some(0.0), recheck_done: done, quiet_since: 0.0 };
            let upto = w.partition_point(|r| r.t <= now as f64);
            if let Some(f) = evaluate_triggers(&w[..upto], &cfg, &slo(), &clock) {
                fires.push(f);
                done = true;
            }
        }
        assert_eq!(fires.len(), 1);
        assert_eq!(fires[0], TriggerFired { t: 3600.0, cause: TriggerCause::Recheck });
    }

    #[test]
    fn invalid_thresholds_rejected() {
        let cfg = TriggerConfig { cpu_low: 0.9, cpu_high: 0.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
