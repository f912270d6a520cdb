//! Incremental-friendly evaluator used by the search: everything that
//! depends only on the provisioning is precomputed once, so scoring an
//! assignment is a pass over the queries plus a few bitmask operations.

use std::collections::BTreeMap;

use super::{adjust_utilization, queueing_delay_eps, txn_latency, PlanningInput, ScoringError, VectorScore};
use crate::blueprint::{classify_change, Blueprint, EngineId, Provisioning, RoutingPolicy, TablePlacement};
use crate::comparator::{penalty, weighted_cost};
use crate::fingerprint::Fnv64;
use crate::router::route;
use crate::stats::weighted_percentile;

/// Scalar outcome of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    /// Scalarized cost; `+∞` when invalid or infeasible.
    pub w: f64,
    pub transition_time: f64,
    pub transition_cost: f64,
    pub operating_cost: f64,
    pub txn_latency: f64,
    pub query_p90: f64,
    pub valid: bool,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
struct QueryInfo {
    rate: f64,
    tables: u64,
    allowed: u8,
    /// Provisioning-adjusted run time per engine.
    latency: [f64; 3],
    scan_cost: f64,
    class: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
struct EngineInfo {
    active: bool,
    node_cost: f64,
    query_cpu: f64,
    observed_sum: f64,
    /// Transaction utilization rescaled to the candidate's vCPUs.
    txn_share: f64,
    fallback: f64,
    change_time: f64,
}

pub struct EvalContext<'a> {
    input: &'a PlanningInput,
    provisionings: BTreeMap<EngineId, Provisioning>,
    prov_hash: u64,
    tables: Vec<String>,
    queries: Vec<QueryInfo>,
    classes: Vec<(String, f64)>,
    engines: [EngineInfo; 3],
    writer_active: bool,
    /// Placement every candidate built from this context starts from.
    base_masks: [u64; 3],
    base_placement: TablePlacement,
    current_masks: [u64; 3],
    /// Per table: storage $/hour on each engine.
    storage: Vec<[f64; 3]>,
    /// Per table: seconds to copy onto each engine.
    move_time: Vec<[f64; 3]>,
    move_cost: Vec<[f64; 3]>,
    penalty: f64,
}

fn mask_of(placement: &TablePlacement, tables: &[String], e: EngineId) -> u64 {
    tables
        .iter()
        .enumerate()
        .filter(|(_, t)| placement.holds(t, e))
        .fold(0, |m, (i, _)| m | 1 << i)
}

impl<'a> EvalContext<'a> {
    /// Context for candidates derived from routing alone: every table lives
    /// on the RowStore (its writer) plus wherever queries are routed.
    pub fn new(input: &'a PlanningInput, provisionings: BTreeMap<EngineId, Provisioning>) -> Result<Self, ScoringError> {
        let base = Blueprint::derived(provisionings.clone(), BTreeMap::new(), &[], &input.window.catalog);
        Self::build(input, provisionings, base.placement)
    }

    /// Context whose base placement is that of an existing blueprint.
    pub fn for_blueprint(input: &'a PlanningInput, bp: &Blueprint) -> Result<Self, ScoringError> {
        Self::build(input, bp.provisionings.clone(), bp.placement.clone())
    }

    fn build(
        input: &'a PlanningInput,
        provisionings: BTreeMap<EngineId, Provisioning>,
        base_placement: TablePlacement,
    ) -> Result<Self, ScoringError> {
        let cat = &input.window.catalog;
        let tables: Vec<String> = cat.table_names().map(str::to_string).collect();
        if tables.len() > 64 {
            return Err(ScoringError::InvalidInput("at most 64 tables are supported".into()));
        }
        let pricing = &input.pricing;
        let models = &input.models;

        let mut engines = [EngineInfo::default(); 3];
        for e in EngineId::ALL {
            let info = &mut engines[e.index()];
            let cand = provisionings.get(&e);
            info.active = cand.is_some_and(Provisioning::is_active);
            if let Some(p) = cand.filter(|p| !e.is_serverless() && p.node_count > 0) {
                info.node_cost = p.node_count as f64 * pricing.instance(e, &p.instance_type)?.price_per_hour;
            }
            let load = input.load.get(e);
            info.query_cpu = (load.cpu - load.txn_cpu).max(0.0);
            info.observed_sum = load.query_runtime_s_per_hour;
            info.fallback = models.fallback(e);
            let cur_vcpus = input.current.provisioning(e).map_or(0, Provisioning::total_vcpus);
            let cand_vcpus = cand.map_or(0, Provisioning::total_vcpus);
            if load.txn_cpu > 0.0 {
                info.txn_share = if cand_vcpus == 0 { 1.0 } else { load.txn_cpu * cur_vcpus as f64 / cand_vcpus as f64 };
            }
        }

        let warehouse_bytes: f64 = tables
            .iter()
            .filter(|t| input.current.placement.holds(t, EngineId::Warehouse))
            .map(|t| cat.tables[t.as_str()].size_bytes as f64)
            .sum();
        for (e, new) in &provisionings {
            let old = input
                .current
                .provisioning(*e)
                .cloned()
                .unwrap_or_else(|| Provisioning { node_count: 0, ..new.clone() });
            if let Some(kind) = classify_change(&old, new) {
                engines[e.index()].change_time += pricing.change_duration(kind, warehouse_bytes);
            }
        }

        let mut storage = Vec::with_capacity(tables.len());
        let mut move_time = Vec::with_capacity(tables.len());
        let mut move_cost = Vec::with_capacity(tables.len());
        for t in &tables {
            let stats = &cat.tables[t.as_str()];
            let source = input.current.placement.writer.get(t).copied().unwrap_or(EngineId::RowStore);
            let mut s = [0.0; 3];
            let mut mt = [0.0; 3];
            let mut mc = [0.0; 3];
            for e in EngineId::ALL {
                s[e.index()] = pricing.storage_rate(e, t)? * stats.row_count as f64;
                let mv = crate::blueprint::TableMove { table: t.clone(), source, dest: e, bytes: stats.size_bytes };
                mt[e.index()] = pricing.move_duration(&mv)?;
                mc[e.index()] = stats.size_bytes as f64 / super::TB * pricing.transfer_price_per_tb;
            }
            storage.push(s);
            move_time.push(mt);
            move_cost.push(mc);
        }

        let classes: Vec<(String, f64)> = input.slo.classes.iter().map(|c| (c.tag.clone(), c.query_p90_s)).collect();
        let mut queries = Vec::with_capacity(input.window.queries.len());
        for (i, q) in input.window.queries.iter().enumerate() {
            let mut mask = 0u64;
            for t in &q.tables {
                let idx = tables
                    .iter()
                    .position(|x| x == t)
                    .ok_or_else(|| ScoringError::InvalidInput(format!("query {} reads unknown table {t}", q.id)))?;
                mask |= 1 << idx;
            }
            let mut latency = [0.0; 3];
            for e in EngineId::ALL {
                let vcpus = provisionings.get(&e).map_or(0, Provisioning::total_vcpus);
                latency[e.index()] = input.predictions.get(i, e) * models.factor(e, vcpus);
            }
            let class = input
                .window
                .tags
                .get(&q.id)
                .and_then(|tag| classes.iter().position(|(c, _)| c == tag));
            queries.push(QueryInfo {
                rate: q.arrival_rate,
                tables: mask,
                allowed: input.caps.allowed_mask(q),
                latency,
                scan_cost: q.arrival_rate * input.predictions.bytes[i] * pricing.scan_price_per_byte(),
                class,
            });
        }

        let base_masks = EngineId::ALL.map(|e| mask_of(&base_placement, &tables, e));
        let current_masks = EngineId::ALL.map(|e| mask_of(&input.current.placement, &tables, e));
        let writer_active = tables.iter().all(|t| {
            base_placement.writer.get(t).is_some_and(|w| provisionings.get(w).is_some_and(Provisioning::is_active))
        });
        let mut h = Fnv64::new();
        for p in provisionings.values() {
            h.write_str(&p.instance_type).write_u64(p.node_count as u64).write_u64(p.engine.index() as u64);
        }

        Ok(Self {
            input,
            prov_hash: h.finish(),
            provisionings,
            tables,
            queries,
            classes,
            engines,
            writer_active,
            base_masks,
            base_placement,
            current_masks,
            storage,
            move_time,
            move_cost,
            penalty: penalty(&input.metrics, &input.slo),
        })
    }

    pub fn input(&self) -> &PlanningInput {
        self.input
    }

    pub fn provisionings(&self) -> &BTreeMap<EngineId, Provisioning> {
        &self.provisionings
    }

    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    /// Whether query `i` may run on `e` under this provisioning.
    pub fn allowed(&self, i: usize, e: EngineId) -> bool {
        self.engines[e.index()].active && self.queries[i].allowed & e.bit() != 0
    }

    /// Provisioning-adjusted run time of query `i` on `e`.
    pub fn latency(&self, i: usize, e: EngineId) -> f64 {
        self.queries[i].latency[e.index()]
    }

    pub fn fingerprint(&self, assign: &[Option<EngineId>]) -> u64 {
        let mut h = Fnv64::new();
        h.write_u64(self.prov_hash);
        for a in assign {
            h.write(&[a.map_or(3, |e| e.index() as u8)]);
        }
        h.finish()
    }

    fn masks(&self, assign: &[Option<EngineId>]) -> [u64; 3] {
        let mut m = self.base_masks;
        for (q, a) in self.queries.iter().zip(assign) {
            if let Some(e) = a {
                m[e.index()] |= q.tables;
            }
        }
        m
    }

    fn loads(&self, assign: &[Option<EngineId>]) -> ([f64; 3], [f64; 3]) {
        let mut sum = [0.0; 3];
        let mut rate = [0.0; 3];
        let mut plain = [0.0; 3];
        let mut count = [0usize; 3];
        for (q, a) in self.queries.iter().zip(assign) {
            if let Some(e) = a {
                let i = e.index();
                sum[i] += q.rate * q.latency[i];
                rate[i] += q.rate;
                plain[i] += q.latency[i];
                count[i] += 1;
            }
        }
        let mut rho = [0.0; 3];
        let mut k = [0.0; 3];
        for e in EngineId::ALL {
            let i = e.index();
            let info = &self.engines[i];
            k[i] = if rate[i] > 0.0 {
                sum[i] / rate[i]
            } else if count[i] > 0 {
                plain[i] / count[i] as f64
            } else {
                0.0
            };
            let query_part = adjust_utilization(info.query_cpu, sum[i], info.observed_sum, info.fallback);
            rho[i] = (query_part + info.txn_share).clamp(0.0, 1.0);
        }
        (rho, k)
    }

    fn waits(&self, rho: &[f64; 3], k: &[f64; 3]) -> [f64; 3] {
        let models = &self.input.models;
        EngineId::ALL.map(|e| {
            let i = e.index();
            if e.is_serverless() {
                return 0.0;
            }
            queueing_delay_eps(rho[i], k[i].max(0.0), models.percentile, models.overload_epsilon)
                .unwrap_or(f64::INFINITY)
        })
    }

    fn txn(&self, rho: &[f64; 3]) -> f64 {
        if !self.engines[EngineId::RowStore.index()].active {
            return f64::INFINITY;
        }
        txn_latency(rho[EngineId::RowStore.index()], &self.input.models.txn).unwrap_or(f64::INFINITY)
    }

    fn valid(&self, assign: &[Option<EngineId>]) -> bool {
        self.writer_active
            && assign.iter().enumerate().all(|(i, a)| a.map_or(true, |e| self.allowed(i, e)))
    }

    fn cost_and_transition(&self, assign: &[Option<EngineId>], masks: &[u64; 3]) -> (f64, f64, f64) {
        let mut cost: f64 = self.engines.iter().map(|e| e.node_cost).sum();
        for (q, a) in self.queries.iter().zip(assign) {
            if *a == Some(EngineId::ScanService) {
                cost += q.scan_cost;
            }
        }
        let mut t_t = 0.0f64;
        let mut c_t = 0.0;
        for e in EngineId::ALL {
            let i = e.index();
            let mut serial = self.engines[i].change_time;
            let mut placed = masks[i];
            let mut new = masks[i] & !self.current_masks[i];
            while placed != 0 {
                let t = placed.trailing_zeros() as usize;
                cost += self.storage[t][i];
                placed &= placed - 1;
            }
            while new != 0 {
                let t = new.trailing_zeros() as usize;
                serial += self.move_time[t][i];
                c_t += self.move_cost[t][i];
                new &= new - 1;
            }
            t_t = t_t.max(serial);
        }
        (cost, t_t, c_t)
    }

    fn percentiles(&self, assign: &[Option<EngineId>], waits: &[f64; 3]) -> (f64, Vec<f64>) {
        let p = self.input.models.percentile;
        let mut all = Vec::with_capacity(assign.len());
        let mut per_class: Vec<Vec<(f64, f64)>> = vec![Vec::new(); self.classes.len()];
        for (q, a) in self.queries.iter().zip(assign) {
            if let Some(e) = a {
                let lat = q.latency[e.index()] + waits[e.index()];
                all.push((lat, q.rate));
                if let Some(c) = q.class {
                    per_class[c].push((lat, q.rate));
                }
            }
        }
        let q90 = weighted_percentile(&mut all, p).unwrap_or(0.0);
        let classes = per_class.into_iter().map(|mut s| weighted_percentile(&mut s, p).unwrap_or(0.0)).collect();
        (q90, classes)
    }

    /// Scores a (possibly partial) assignment; unassigned queries contribute
    /// nothing.
    pub fn evaluate(&self, assign: &[Option<EngineId>]) -> Summary {
        debug_assert_eq!(assign.len(), self.queries.len());
        let masks = self.masks(assign);
        let (operating_cost, transition_time, transition_cost) = self.cost_and_transition(assign, &masks);
        let valid = self.valid(assign);
        let (rho, k) = self.loads(assign);
        let waits = self.waits(&rho, &k);
        let txn = self.txn(&rho);
        let (query_p90, class_p90) = self.percentiles(assign, &waits);
        let slo = &self.input.slo;
        let feasible = valid
            && txn <= slo.txn_p90_s
            && query_p90 <= slo.query_p90_s
            && self.classes.iter().zip(&class_p90).all(|((_, limit), v)| v <= limit)
            && [operating_cost, transition_time, transition_cost].iter().all(|v| v.is_finite());
        let w = if feasible {
            weighted_cost(
                self.penalty,
                slo,
                self.input.metrics.cost_per_hour,
                transition_time,
                transition_cost,
                operating_cost,
            )
        } else {
            f64::INFINITY
        };
        Summary { w, transition_time, transition_cost, operating_cost, txn_latency: txn, query_p90, valid, feasible }
    }

    /// Full vector score; unassigned queries get infinite latency.
    pub fn score(&self, assign: &[Option<EngineId>]) -> VectorScore {
        let masks = self.masks(assign);
        let (operating_cost, transition_time, transition_cost) = self.cost_and_transition(assign, &masks);
        let (rho, k) = self.loads(assign);
        let waits = self.waits(&rho, &k);
        let (query_p90, class_p90) = self.percentiles(assign, &waits);
        let query_latencies = self
            .queries
            .iter()
            .zip(assign)
            .map(|(q, a)| a.map_or(f64::INFINITY, |e| q.latency[e.index()] + waits[e.index()]))
            .collect();
        let mut classes = BTreeMap::new();
        for ((tag, _), v) in self.classes.iter().zip(class_p90) {
            classes.insert(tag.clone(), v);
        }
        VectorScore {
            query_latencies,
            txn_latency: self.txn(&rho),
            operating_cost,
            transition_time,
            transition_cost,
            query_p90,
            class_p90: classes,
        }
    }

    /// The blueprint an assignment denotes.
    pub fn blueprint(&self, assign: &[Option<EngineId>]) -> Blueprint {
        let mut placement = self.base_placement.clone();
        for (q, a) in self.input.window.queries.iter().zip(assign) {
            if let Some(e) = a {
                for t in &q.tables {
                    placement.placement.entry(t.clone()).or_default().insert(*e);
                }
            }
        }
        let assignments = self
            .input
            .window
            .queries
            .iter()
            .zip(assign)
            .filter_map(|(q, a)| a.map(|e| (q.id.clone(), e)))
            .collect();
        Blueprint {
            engines: self.provisionings.keys().copied().collect(),
            provisionings: self.provisionings.clone(),
            placement,
            routing: RoutingPolicy { assignments, online_policy: None },
        }
    }

    /// Engine each window query would run on under `bp`.
    pub fn route_all(&self, bp: &Blueprint) -> Result<Vec<Option<EngineId>>, ScoringError> {
        let cat = &self.input.window.catalog;
        self.input
            .window
            .queries
            .iter()
            .map(|q| Ok(Some(route(q, bp, None, &self.input.caps, cat)?)))
            .collect()
    }

    pub fn tables(&self) -> &[String] {
        &self.tables
    }
}
