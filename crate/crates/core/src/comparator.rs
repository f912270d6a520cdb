//! Scalarizes vector scores under latency SLOs and orders candidates.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scoring::VectorScore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SloClass {
    pub tag: String,
    pub query_p90_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SloConfig {
    pub txn_p90_s: f64,
    pub query_p90_s: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub benefit_period_hours: f64,
    #[serde(default)]
    pub classes: Vec<SloClass>,
}

fn default_gamma() -> f64 {
    2.0
}

impl SloConfig {
    pub fn new(txn_p90_s: f64, query_p90_s: f64, benefit_period_hours: f64) -> Self {
        Self { txn_p90_s, query_p90_s, gamma: 2.0, benefit_period_hours, classes: Vec::new() }
    }

    pub fn class_slo(&self, tag: &str) -> Option<f64> {
        self.classes.iter().find(|c| c.tag == tag).map(|c| c.query_p90_s)
    }
}

/// What the running blueprint is measured to deliver.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurrentMetrics {
    pub txn_p90_s: f64,
    pub query_p90_s: f64,
    #[serde(default)]
    pub class_p90_s: BTreeMap<String, f64>,
    /// Operating cost of the current blueprint, $/hour.
    pub cost_per_hour: f64,
}

/// `1 + max(t/t_slo, q/q_slo, per-class ratios)`.
pub fn penalty(m: &CurrentMetrics, slo: &SloConfig) -> f64 {
    let mut worst = (m.txn_p90_s / slo.txn_p90_s).max(m.query_p90_s / slo.query_p90_s);
    for (tag, v) in &m.class_p90_s {
        if let Some(s) = slo.class_slo(tag) {
            worst = worst.max(v / s);
        }
    }
    1.0 + worst
}

/// The finite part of the scalar cost: `P^γ·C0·T_T + C_T + C·T_B`, with the
/// time terms given in seconds and converted to hours.
pub fn weighted_cost(
    penalty: f64,
    slo: &SloConfig,
    current_cost_per_hour: f64,
    transition_time_s: f64,
    transition_cost: f64,
    operating_cost_per_hour: f64,
) -> f64 {
    penalty.powf(slo.gamma) * current_cost_per_hour * (transition_time_s / 3600.0)
        + transition_cost
        + operating_cost_per_hour * slo.benefit_period_hours
}

/// Whether predicted p90s meet every SLO.
pub fn meets_slos(s: &VectorScore, slo: &SloConfig) -> bool {
    if !(s.txn_latency <= slo.txn_p90_s) || !(s.query_p90 <= slo.query_p90_s) {
        return false;
    }
    s.class_p90.iter().all(|(tag, v)| slo.class_slo(tag).map_or(true, |limit| *v <= limit))
}

/// Scalar cost in dollars, `+∞` when the candidate misses an SLO.
pub fn scalarize(s: &VectorScore, m: &CurrentMetrics, slo: &SloConfig) -> f64 {
    if !meets_slos(s, slo) || !s.is_finite() {
        return f64::INFINITY;
    }
    weighted_cost(penalty(m, slo), slo, m.cost_per_hour, s.transition_time, s.transition_cost, s.operating_cost)
}

/// Sort key shared by the comparator and the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankKey {
    pub w: f64,
    pub transition_time: f64,
    pub operating_cost: f64,
    pub fingerprint: u64,
}

impl RankKey {
    pub fn cmp(&self, other: &Self) -> Ordering {
        self.w
            .total_cmp(&other.w)
            .then(self.transition_time.total_cmp(&other.transition_time))
            .then(self.operating_cost.total_cmp(&other.operating_cost))
            .then(self.fingerprint.cmp(&other.fingerprint))
    }
}

/// Total order: lower scalar cost first, then lower transition time, lower
/// operating cost, and finally blueprint fingerprint.
pub fn compare(a: (&VectorScore, u64), b: (&VectorScore, u64), m: &CurrentMetrics, slo: &SloConfig) -> Ordering {
    let key = |(s, fp): (&VectorScore, u64)| RankKey {
        w: scalarize(s, m, slo),
        transition_time: s.transition_time,
        operating_cost: s.operating_cost,
        fingerprint: fp,
    };
    key(a).cmp(&key(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(c: f64, t_t: f64, q: f64) -> VectorScore {
        VectorScore {
            query_latencies: vec![q],
            txn_latency: 0.001,
            operating_cost: c,
            transition_time: t_t,
            transition_cost: 0.0,
            query_p90: q,
            class_p90: BTreeMap::new(),
        }
    }

    fn slo() -> SloConfig {
        SloConfig::new(0.03, 30.0, 1.0)
    }

    #[test]
    fn penalty_examples() {
        let s = SloConfig::new(2.0, 10.0, 1.0);
        let m = |t, q| CurrentMetrics { txn_p90_s: t, query_p90_s: q, ..Default::default() };
        assert_eq!(penalty(&m(0.0, 0.0), &s), 1.0);
        assert_eq!(penalty(&m(2.0, 0.0), &s), 2.0);
        assert_eq!(penalty(&m(1.0, 15.0), &s), 2.5);
    }

    #[test]
    fn scalarize_examples() {
        let m = CurrentMetrics { cost_per_hour: 2.0, ..Default::default() };
        assert_eq!(scalarize(&score(1.0, 0.0, 1.0), &m, &slo()), 1.0);
        assert_eq!(scalarize(&score(1.0, 0.0, 31.0), &m, &slo()), f64::INFINITY);

        // P = 2 (txn at its SLO), γ = 2, C0 = 2, T_T = 0.5 h, C = 1, T_B = 10 h
        let s = SloConfig::new(0.03, 30.0, 10.0);
        let m = CurrentMetrics { txn_p90_s: 0.03, query_p90_s: 0.0, cost_per_hour: 2.0, ..Default::default() };
        assert_eq!(scalarize(&score(1.0, 1800.0, 1.0), &m, &s), 14.0);
    }

    #[test]
    fn ordering_rules() {
        let m = CurrentMetrics::default();
        let bad1 = score(1.0, 0.0, 99.0);
        let bad2 = score(1.0, 0.0, 98.0);
        assert_eq!(compare((&bad1, 5), (&bad2, 7), &m, &slo()), Ordering::Less);
        assert_eq!(compare((&bad1, 9), (&bad2, 7), &m, &slo()), Ordering::Greater);
        let pricier = score(2.0, 0.0, 99.0);
        assert_eq!(compare((&bad1, 9), (&pricier, 7), &m, &slo()), Ordering::Less);
        let good = score(5.0, 0.0, 1.0);
        assert_eq!(compare((&good, 9), (&bad1, 1), &m, &slo()), Ordering::Less);
        // With C0 = 0, transition time does not enter W.
        let fast = score(1.0, 100.0, 1.0);
        let slow = score(1.0, 200.0, 1.0);
        assert_eq!(compare((&fast, 9), (&slow, 1), &m, &slo()), Ordering::Less);
    }

    #[test]
    fn class_slos_gate_feasibility_and_penalty() {
        let mut s = slo();
        s.classes.push(SloClass { tag: "dash".into(), query_p90_s: 5.0 });
        let mut v = score(1.0, 0.0, 1.0);
        v.class_p90.insert("dash".into(), 6.0);
        assert_eq!(scalarize(&v, &CurrentMetrics::default(), &s), f64::INFINITY);
        let m = CurrentMetrics { class_p90_s: BTreeMap::from([("dash".into(), 10.0)]), ..Default::default() };
        assert_eq!(penalty(&m, &s), 3.0);
    }
}
