//! Deterministic simulation of the three engines: Poisson query arrivals,
//! one FIFO server per provisioned engine, fluid transactional load on the
//! RowStore, per-interval metrics, triggers, and the plan → transition loop.
//!
//! Time advances in one-second ticks. Query service time is the ground-truth
//! base run time scaled by the engine's provisioning factor; the ScanService
//! has no queue. Transactions do not queue; they add to the RowStore's busy
//! fraction and their p90 latency follows `a/(M − ρ) + b` at the RowStore's
//! total utilization over each interval.

mod metrics;
pub mod reference;
mod scenario;
mod sensitivity;
mod triggers;
mod truth;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blueprint::{
    diff_blueprints, Blueprint, BlueprintError, ChangeKind, EngineId, Provisioning, TransitionPlan,
};
use crate::comparator::CurrentMetrics;
use crate::predictor::{NoiseSpec, PredictError, PredictorKind, ProvisioningConstants};
use crate::query::{parse_query, LogicalQuery, QueryError, QueryId};
use crate::router::route;
use crate::scoring::{operating_cost, transition_time_cost, EngineLoad, LoadState, PlanningInput, ScoringError};
use crate::search::{plan, PlanConfig, ProvisioningLattice, SearchError};
use crate::workload::{PredictionTable, WorkloadWindow};

pub use crate::stats::{percentile, weighted_percentile, EmptySamples};
pub use metrics::{Event, MetricRecord, MetricsLog};
pub use scenario::{
    InitialBlueprint, InstanceSpec, Phase, PlanningConfig, PredictorConfig, ResolvedPhase, ResolvedScenario,
    ScenarioConfig, TxnConfig,
};
pub use sensitivity::{run_sensitivity, SensitivityCell, SensitivityGrid, SensitivityReport};
pub use triggers::{evaluate_triggers, TriggerCause, TriggerClock, TriggerConfig, TriggerFired};
pub use truth::{EngineSpeed, GroundTruth, QueryCostInputs, TruthParams};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("a transition is already in flight until t = {0}")]
    TransitionInFlight(f64),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Blueprint(#[from] BlueprintError),
}

#[derive(Debug, Clone)]
pub struct InFlight {
    pub target: Blueprint,
    pub plan: TransitionPlan,
    pub started_at: f64,
    pub completes_at: f64,
    pub cost: f64,
}

/// Active blueprint and the transition (at most one) moving away from it.
#[derive(Debug, Clone)]
pub struct SimState {
    pub clock: f64,
    pub blueprint: Blueprint,
    pub in_flight: Option<InFlight>,
    /// Completion time of the last blueprint change.
    pub last_change_at: Option<f64>,
    /// Transaction latency is inflated until this time.
    pub spike_until: f64,
    pub spike_s: f64,
    /// Bumped whenever the active blueprint (including routing) changes.
    pub version: u64,
}

impl SimState {
    pub fn new(blueprint: Blueprint, spike_s: f64) -> Self {
        Self {
            clock: 0.0,
            blueprint,
            in_flight: None,
            last_change_at: None,
            spike_until: f64::NEG_INFINITY,
            spike_s,
            version: 0,
        }
    }

    /// Starts moving to `target`. The current blueprint keeps serving until
    /// `clock + T_T`; a zero-length transition activates immediately.
    /// Returns whether the target is already active.
    pub fn apply_transition(
        &mut self,
        target: Blueprint,
        plan: TransitionPlan,
        est: (f64, f64),
    ) -> Result<bool, SimError> {
        if let Some(f) = &self.in_flight {
            return Err(SimError::TransitionInFlight(f.completes_at));
        }
        let (t_t, c_t) = est;
        self.in_flight =
            Some(InFlight { target, plan, started_at: self.clock, completes_at: self.clock + t_t.max(0.0), cost: c_t });
        Ok(self.advance(self.clock))
    }

    /// Moves the clock forward, activating a due transition. Returns whether
    /// an activation happened.
    pub fn advance(&mut self, t: f64) -> bool {
        self.clock = self.clock.max(t);
        let due = self.in_flight.as_ref().is_some_and(|f| f.completes_at <= self.clock);
        if !due {
            return false;
        }
        let f = self.in_flight.take().expect("checked");
        let failover = f
            .plan
            .provisioning_changes
            .iter()
            .any(|c| c.engine == EngineId::RowStore && c.kind == ChangeKind::InstanceChange);
        if failover {
            self.spike_until = f.completes_at + self.spike_s;
        }
        self.blueprint = f.target;
        self.last_change_at = Some(f.completes_at);
        self.version += 1;
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    /// $/hour over the first and last metrics interval.
    pub cost_initial: f64,
    pub cost_final: f64,
    pub blueprint_changes: usize,
    pub plans: usize,
    /// Fraction of intervals meeting each SLO.
    pub txn_slo_compliance: f64,
    pub query_slo_compliance: f64,
    /// Fraction of intervals after the first blueprint change meeting both.
    pub post_transition_slo_compliance: Option<f64>,
    pub first_change_at: Option<f64>,
    pub arrivals: usize,
    pub completed: usize,
    pub in_flight: usize,
    pub final_provisionings: BTreeMap<EngineId, String>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: MetricsLog,
    pub summary: SimSummary,
    pub final_blueprint: Blueprint,
}

pub fn describe(bp: &Blueprint) -> BTreeMap<EngineId, String> {
    bp.provisionings.iter().map(|(e, p)| (*e, p.to_string())).collect()
}

struct SimQuery {
    query: LogicalQuery,
    tag: Option<String>,
    base: [f64; 3],
    bytes: f64,
    next_at: f64,
}

#[derive(Debug, Clone, Copy)]
struct Arrival {
    t: f64,
    q: usize,
    engine: EngineId,
    latency: f64,
}

/// One scenario run. Built by [`run_scenario`]; exposed for harnesses that
/// need to stop at the first planning decision.
pub struct Simulation {
    sc: ResolvedScenario,
    truth: Arc<GroundTruth>,
    predictor: PredictorKind,
    truth_factor: BTreeMap<EngineId, ProvisioningConstants>,
    rng: ChaCha8Rng,
    state: SimState,
    queries: Vec<SimQuery>,
    /// Per phase, per query: arrivals per hour.
    rates: Vec<Vec<f64>>,
    phase: Option<usize>,
    txn_clients: f64,
    busy_until: [f64; 3],
    busy: BTreeMap<u64, [f64; 3]>,
    arrivals: Vec<Arrival>,
    reported: usize,
    log: MetricsLog,
    routes: (u64, Vec<Option<EngineId>>),
    static_cost: (u64, f64),
    txn_acc: f64,
    scan_dollars: f64,
    quiet_since: f64,
    recheck_done: bool,
    plans: usize,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Result<Self, SimError> {
        let sc = config.resolve()?;
        let truth = Arc::new(GroundTruth::new(sc.catalog.clone(), TruthParams::default()));
        let predictor = match &config.predictor {
            PredictorConfig::Oracle => PredictorKind::Oracle(truth.clone()),
            PredictorConfig::Noisy { fraction, error, seed } => {
                PredictorKind::NoisyOracle(truth.clone(), NoiseSpec::new(*fraction, *error, *seed)?)
            }
        };
        let mut queries: Vec<SimQuery> = Vec::new();
        let mut index: BTreeMap<QueryId, usize> = BTreeMap::new();
        let mut rates = Vec::with_capacity(sc.phases.len());
        for p in &sc.phases {
            let mut r = vec![0.0; queries.len()];
            for rec in &p.records {
                let mut q = parse_query(&rec.sql)?;
                if let Some(id) = rec.query_id.as_ref().filter(|s| !s.is_empty()) {
                    q.id = QueryId(id.clone());
                }
                let i = match index.get(&q.id) {
                    Some(i) => *i,
                    None => {
                        let mut base = [0.0; 3];
                        for e in EngineId::ALL {
                            base[e.index()] = truth.runtime(&q, e)?;
                        }
                        let bytes = truth.bytes_scanned(&q)?;
                        index.insert(q.id.clone(), queries.len());
                        queries.push(SimQuery { query: q, tag: rec.tag.clone(), base, bytes, next_at: f64::INFINITY });
                        r.push(0.0);
                        queries.len() - 1
                    }
                };
                r[i] += rec.arrival_rate_per_hour;
            }
            rates.push(r);
        }
        for r in &mut rates {
            r.resize(queries.len(), 0.0);
        }
        let state = SimState::new(sc.initial.clone(), config.txn.failover_spike_s);
        Ok(Self {
            truth,
            predictor,
            truth_factor: reference::reference_provisioning_constants(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            state,
            queries,
            rates,
            phase: None,
            txn_clients: 0.0,
            busy_until: [0.0; 3],
            busy: BTreeMap::new(),
            arrivals: Vec::new(),
            reported: 0,
            log: MetricsLog::default(),
            routes: (u64::MAX, Vec::new()),
            static_cost: (u64::MAX, 0.0),
            txn_acc: 0.0,
            scan_dollars: 0.0,
            quiet_since: 0.0,
            recheck_done: false,
            plans: 0,
            sc,
        })
    }

    pub fn ground_truth(&self) -> &Arc<GroundTruth> {
        &self.truth
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    fn interval(&self) -> f64 {
        self.sc.config.metrics_interval_s as f64
    }

    /// Provisioning multiplier the simulator charges on engine `e`.
    pub fn runtime_factor(&self, e: EngineId, p: Option<&Provisioning>) -> f64 {
        if e.is_serverless() {
            return 1.0;
        }
        let vcpus = p.map_or(0, Provisioning::total_vcpus);
        self.truth_factor.get(&e).map_or(1.0, |c| c.factor(vcpus))
    }

    fn start_phase(&mut self, i: usize, now: f64) {
        self.phase = Some(i);
        self.txn_clients = self.sc.phases[i].txn_clients;
        for (q, rate) in self.queries.iter_mut().zip(&self.rates[i]) {
            q.next_at = if *rate > 0.0 {
                now + Exp::new(rate / 3600.0).expect("positive rate").sample(&mut self.rng)
            } else {
                f64::INFINITY
            };
        }
        self.log.events.push(Event::PhaseStarted { t: now, phase: i, txn_clients: self.txn_clients });
    }

    fn engine_for(&mut self, qi: usize) -> Result<EngineId, SimError> {
        if self.routes.0 != self.state.version {
            self.routes = (self.state.version, vec![None; self.queries.len()]);
        }
        if let Some(e) = self.routes.1[qi] {
            return Ok(e);
        }
        let e = route(&self.queries[qi].query, &self.state.blueprint, None, &self.sc.caps, &self.sc.catalog)?;
        self.routes.1[qi] = Some(e);
        Ok(e)
    }

    fn add_busy(&mut self, e: EngineId, mut start: f64, end: f64) {
        let len = self.interval();
        while start < end {
            let k = (start / len).floor();
            let stop = end.min((k + 1.0) * len);
            self.busy.entry(k as u64).or_insert([0.0; 3])[e.index()] += stop - start;
            start = stop;
        }
    }

    fn current_static_cost(&mut self) -> Result<f64, SimError> {
        if self.static_cost.0 != self.state.version {
            let c = operating_cost(&self.state.blueprint, &[], &self.sc.pricing, &self.sc.catalog, &[])?;
            self.static_cost = (self.state.version, c);
        }
        Ok(self.static_cost.1)
    }

    fn arrive(&mut self, tick_end: f64) -> Result<(), SimError> {
        let mut due: Vec<(f64, usize)> = Vec::new();
        let phase = self.phase.expect("phase started");
        for qi in 0..self.queries.len() {
            let rate = self.rates[phase][qi];
            while self.queries[qi].next_at < tick_end {
                due.push((self.queries[qi].next_at, qi));
                let gap = Exp::new(rate / 3600.0).expect("positive rate").sample(&mut self.rng);
                self.queries[qi].next_at += gap;
            }
        }
        due.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (t, qi) in due {
            let e = self.engine_for(qi)?;
            let q = &self.queries[qi];
            let service = q.base[e.index()] * self.runtime_factor(e, self.state.blueprint.provisioning(e));
            let latency = if e.is_serverless() {
                self.scan_dollars += q.bytes * self.sc.pricing.scan_price_per_byte();
                service
            } else {
                let start = t.max(self.busy_until[e.index()]);
                let end = start + service;
                self.busy_until[e.index()] = end;
                self.add_busy(e, start, end);
                end - t
            };
            self.arrivals.push(Arrival { t, q: qi, engine: e, latency });
        }
        Ok(())
    }

    fn row_vcpus(&self) -> f64 {
        self.state.blueprint.provisioning(EngineId::RowStore).map_or(0, Provisioning::total_vcpus) as f64
    }

    fn txn_utilization(&self) -> f64 {
        let demand = self.txn_clients * self.sc.config.txn.per_client_tps * self.sc.config.txn.cpu_s_per_txn;
        let v = self.row_vcpus();
        if v > 0.0 {
            demand / v
        } else if demand > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    fn record(&mut self, end: f64) -> Result<(), SimError> {
        let len = self.interval();
        let k = ((end / len).round() as u64).saturating_sub(1);
        let busy = self.busy.remove(&k).unwrap_or([0.0; 3]);
        self.busy.retain(|j, _| *j > k);
        let txn_util = self.txn_acc / len;
        self.txn_acc = 0.0;
        let row_query = busy[EngineId::RowStore.index()] / len;
        let rho = txn_util + row_query;
        let cfg = &self.sc.config.txn;
        let mut txn = if rho < cfg.latency.m - 1e-9 {
            (cfg.latency.a / (cfg.latency.m - rho) + cfg.latency.b).min(cfg.saturated_latency_s)
        } else {
            cfg.saturated_latency_s
        };
        if self.state.spike_until > end - len {
            txn *= cfg.failover_spike_factor;
        }

        let from = end - len;
        let start = self.reported;
        let stop = start + self.arrivals[start..].partition_point(|a| a.t < end);
        self.reported = stop;
        let window = &self.arrivals[start..stop];
        debug_assert!(window.iter().all(|a| a.t >= from));
        let lat: Vec<f64> = window.iter().map(|a| a.latency).collect();
        let query_p90 = percentile(&lat, 0.9).ok();
        let mut by_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for a in window {
            if let Some(tag) = &self.queries[a.q].tag {
                by_class.entry(tag.clone()).or_default().push(a.latency);
            }
        }
        let class_p90_s = by_class.into_iter().map(|(t, v)| (t, percentile(&v, 0.9).unwrap_or(0.0))).collect();

        let mut cpu = BTreeMap::new();
        let mut query_busy_s = BTreeMap::new();
        for e in [EngineId::RowStore, EngineId::Warehouse] {
            if busy[e.index()] > 0.0 {
                query_busy_s.insert(e, busy[e.index()]);
            }
            if self.state.blueprint.is_active(e) {
                let extra = if e == EngineId::RowStore { txn_util } else { 0.0 };
                cpu.insert(e, (busy[e.index()] / len + extra).min(1.0));
            }
        }
        let n_queries = window.len();
        let cost_per_hour = self.current_static_cost()? + self.scan_dollars * 3600.0 / len;
        self.scan_dollars = 0.0;
        self.log.records.push(MetricRecord {
            t: end,
            txn_p90_s: txn,
            query_p90_s: query_p90,
            class_p90_s,
            cpu,
            txn_cpu: txn_util.min(1.0),
            query_busy_s,
            cost_per_hour,
            queries: n_queries,
        });
        Ok(())
    }

    /// The planner's view at `now`: the last window of logged queries with
    /// observed rates, and utilization over the recent load window.
    pub fn planning_input(&self, now: f64) -> Result<Option<PlanningInput>, SimError> {
        let pc = &self.sc.config.planning;
        let span = pc.window_s.min(now);
        if span <= 0.0 {
            return Ok(None);
        }
        let from = now - span;
        let first = self.arrivals.partition_point(|a| a.t < from);
        let mut counts = vec![0usize; self.queries.len()];
        for a in &self.arrivals[first..] {
            counts[a.q] += 1;
        }
        let mut queries = Vec::new();
        let mut tags = BTreeMap::new();
        for (q, n) in self.queries.iter().zip(&counts) {
            if *n > 0 {
                queries.push(q.query.clone().with_arrival_rate(*n as f64 * 3600.0 / span));
                if let Some(t) = &q.tag {
                    tags.insert(q.query.id.clone(), t.clone());
                }
            }
        }
        if queries.is_empty() {
            return Ok(None);
        }
        let predictions = PredictionTable::build(&queries, &self.predictor)?;
        let cfg = &self.sc.config;
        let window = WorkloadWindow {
            queries,
            tags,
            txn_rate_per_s: self.txn_clients * cfg.txn.per_client_tps,
            duration_s: span,
            catalog: self.sc.catalog.clone(),
        };

        let load_from = now - pc.load_window_s.min(now);
        let recs: Vec<&MetricRecord> = self.log.records.iter().filter(|r| r.t > load_from + 1e-9).collect();
        let len = self.interval();
        let mut load = LoadState::default();
        if !recs.is_empty() {
            let n = recs.len() as f64;
            for e in [EngineId::RowStore, EngineId::Warehouse] {
                if !self.state.blueprint.is_active(e) {
                    continue;
                }
                let cpu = recs.iter().map(|r| r.cpu.get(&e).copied().unwrap_or(0.0)).sum::<f64>() / n;
                let busy: f64 = recs.iter().map(|r| r.query_busy_s.get(&e).copied().unwrap_or(0.0)).sum();
                let txn_cpu =
                    if e == EngineId::RowStore { recs.iter().map(|r| r.txn_cpu).sum::<f64>() / n } else { 0.0 };
                let ran: Vec<f64> = self.arrivals[self.arrivals.partition_point(|a| a.t < load_from)..]
                    .iter()
                    .filter(|a| a.engine == e)
                    .map(|a| self.queries[a.q].base[e.index()])
                    .collect();
                let mean_runtime_s = if ran.is_empty() { 0.0 } else { ran.iter().sum::<f64>() / ran.len() as f64 };
                load.engines.insert(
                    e,
                    EngineLoad { cpu, query_runtime_s_per_hour: busy * 3600.0 / (n * len), txn_cpu, mean_runtime_s },
                );
            }
        }

        let txn_samples: Vec<f64> = recs.iter().map(|r| r.txn_p90_s).collect();
        let recent = &self.arrivals[self.arrivals.partition_point(|a| a.t < load_from)..];
        let lat: Vec<f64> = recent.iter().map(|a| a.latency).collect();
        let mut class_lat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for a in recent {
            if let Some(tag) = &self.queries[a.q].tag {
                class_lat.entry(tag.clone()).or_default().push(a.latency);
            }
        }
        let cost = recs.iter().map(|r| r.cost_per_hour).sum::<f64>() / recs.len().max(1) as f64;
        let metrics = CurrentMetrics {
            txn_p90_s: percentile(&txn_samples, 0.9).unwrap_or(0.0),
            query_p90_s: percentile(&lat, 0.9).unwrap_or(0.0),
            class_p90_s: class_lat.into_iter().map(|(t, v)| (t, percentile(&v, 0.9).unwrap_or(0.0))).collect(),
            cost_per_hour: if recs.is_empty() {
                operating_cost(&self.state.blueprint, &[], &self.sc.pricing, &self.sc.catalog, &[])?
            } else {
                cost
            },
        };
        Ok(Some(PlanningInput {
            current: self.state.blueprint.clone(),
            window,
            predictions,
            models: self.sc.models.clone(),
            load,
            pricing: self.sc.pricing.clone(),
            slo: cfg.slo.clone(),
            metrics,
            caps: self.sc.caps.clone(),
        }))
    }

    pub fn lattice(&self) -> ProvisioningLattice {
        let mut l = ProvisioningLattice::from_pricing(&self.sc.pricing, self.sc.config.planning.radius);
        for v in l.max_nodes.values_mut() {
            *v = self.sc.config.planning.max_nodes;
        }
        l
    }

    pub fn plan_config(&self) -> PlanConfig {
        PlanConfig { beam_width: self.sc.config.planning.beam_width, ..PlanConfig::default() }
    }

    fn warehouse_bytes(&self) -> f64 {
        let bp = &self.state.blueprint;
        self.sc
            .catalog
            .tables
            .iter()
            .filter(|(t, _)| bp.placement.holds(t, EngineId::Warehouse))
            .map(|(_, s)| s.size_bytes as f64)
            .sum()
    }

    fn on_activation(&mut self) {
        let t = self.state.last_change_at.unwrap_or(self.state.clock);
        self.log.events.push(Event::BlueprintChanged {
            t,
            provisionings: describe(&self.state.blueprint),
            fingerprint: self.state.blueprint.fingerprint(),
        });
        self.recheck_done = false;
        self.quiet_since = t;
    }

    fn replan(&mut self, now: f64) -> Result<(), SimError> {
        self.quiet_since = now;
        self.recheck_done = true;
        let Some(input) = self.planning_input(now)? else {
            self.log.events.push(Event::PlanFailed { t: now, reason: "empty planning window".into() });
            return Ok(());
        };
        self.plans += 1;
        let report = match plan(&input, &self.lattice(), &self.plan_config()) {
            Ok(r) => r,
            Err(SearchError::NoFeasibleBlueprint) => {
                self.log.events.push(Event::PlanFailed { t: now, reason: SearchError::NoFeasibleBlueprint.to_string() });
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        self.log.events.push(Event::PlanComputed {
            t: now,
            w: report.w,
            kept_current: report.kept_current,
            candidates: report.stats.candidates_scored,
            provisionings: describe(&report.blueprint),
        });
        if report.kept_current {
            return Ok(());
        }
        if report.blueprint.same_infrastructure(&self.state.blueprint) {
            self.state.blueprint = report.blueprint;
            self.state.version += 1;
            self.log.events.push(Event::RoutingUpdated { t: now });
            return Ok(());
        }
        let tp = diff_blueprints(&self.state.blueprint, &report.blueprint, &self.sc.catalog);
        let (t_t, c_t) = transition_time_cost(&tp, &self.sc.pricing, self.warehouse_bytes())?;
        let changes = tp
            .provisioning_changes
            .iter()
            .map(|c| format!("{} {:?}: {} -> {}", c.engine, c.kind, c.old, c.new))
            .chain(tp.table_moves.iter().map(|m| format!("move {} {} -> {}", m.table, m.source, m.dest)))
            .collect();
        self.log.events.push(Event::TransitionStarted { t: now, duration_s: t_t, cost: c_t, changes });
        if self.state.apply_transition(report.blueprint, tp, (t_t, c_t))? {
            self.on_activation();
        }
        Ok(())
    }

    /// Runs to the end, or until the first trigger fires when
    /// `stop_at_first_plan` is set (returning the planner input there).
    pub fn run(&mut self, stop_at_first_plan: bool) -> Result<Option<(f64, PlanningInput)>, SimError> {
        let duration = self.sc.config.duration_s.ceil() as u64;
        let len = self.sc.config.metrics_interval_s;
        let cfg = self.sc.config.triggers;
        let keep = ((cfg.sustain_s.max(cfg.latency_sustain_s) / len as f64).ceil() as usize) + 2;
        for tick in 0..duration {
            let now = tick as f64;
            let next_phase = self.phase.map_or(0, |p| p + 1);
            if next_phase < self.sc.phases.len() && self.sc.phases[next_phase].start_s <= now {
                self.start_phase(next_phase, now);
            }
            if self.state.advance(now) {
                self.on_activation();
            }
            self.arrive(now + 1.0)?;
            self.txn_acc += self.txn_utilization().min(1e6);
            let end = now + 1.0;
            if (tick + 1) % len == 0 {
                self.record(end)?;
            }
            if self.state.advance(end) {
                self.on_activation();
            }
            if self.state.in_flight.is_some() {
                continue;
            }
            let recs = &self.log.records;
            let tail = &recs[recs.len().saturating_sub(keep)..];
            let clock = TriggerClock {
                now: end,
                last_change_at: Some(self.state.last_change_at.unwrap_or(0.0)),
                recheck_done: self.recheck_done,
                quiet_since: self.quiet_since,
            };
            if let Some(f) = evaluate_triggers(tail, &cfg, &self.sc.config.slo, &clock) {
                if stop_at_first_plan {
                    if let Some(input) = self.planning_input(end)? {
                        return Ok(Some((end, input)));
                    }
                }
                self.log.events.push(Event::TriggerFired { t: end, cause: f.cause.to_string() });
                self.replan(end)?;
            }
        }
        Ok(None)
    }

    pub fn finish(self) -> SimOutput {
        let cfg = &self.sc.config;
        let recs = &self.log.records;
        let n = recs.len().max(1) as f64;
        let slo = &cfg.slo;
        let txn_ok = |r: &MetricRecord| r.txn_p90_s <= slo.txn_p90_s;
        let query_ok = |r: &MetricRecord| r.query_p90_s.map_or(true, |q| q <= slo.query_p90_s);
        let first_change_at = self.log.blueprint_changes().next().map(Event::t);
        let post: Vec<&MetricRecord> = match first_change_at {
            Some(c) => recs.iter().filter(|r| r.t > c).collect(),
            None => Vec::new(),
        };
        let post_ok = (!post.is_empty())
            .then(|| post.iter().filter(|r| txn_ok(r) && query_ok(r)).count() as f64 / post.len() as f64);
        let end = cfg.duration_s;
        let completed = self.arrivals.iter().filter(|a| a.t + a.latency <= end).count();
        let summary = SimSummary {
            scenario: cfg.name.clone(),
            seed: cfg.seed,
            duration_s: cfg.duration_s,
            cost_initial: recs.first().map_or(0.0, |r| r.cost_per_hour),
            cost_final: recs.last().map_or(0.0, |r| r.cost_per_hour),
            blueprint_changes: self.log.blueprint_changes().count(),
            plans: self.plans,
            txn_slo_compliance: recs.iter().filter(|r| txn_ok(r)).count() as f64 / n,
            query_slo_compliance: recs.iter().filter(|r| query_ok(r)).count() as f64 / n,
            post_transition_slo_compliance: post_ok,
            first_change_at,
            arrivals: self.arrivals.len(),
            completed,
            in_flight: self.arrivals.len() - completed,
            final_provisionings: describe(&self.state.blueprint),
        };
        SimOutput { log: self.log, summary, final_blueprint: self.state.blueprint }
    }
}

/// Replays a scenario end to end.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimOutput, SimError> {
    let mut sim = Simulation::new(config)?;
    sim.run(false)?;
    Ok(sim.finish())
}
