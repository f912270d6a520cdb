//! Beam search over query-to-engine assignments for each neighbouring
//! provisioning, plus exhaustive, greedy and random baselines.

mod lattice;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blueprint::{Blueprint, EngineId, Provisioning};
use crate::comparator::RankKey;
use crate::router::{train_routing_forest, ForestConfig, RouterError};
use crate::scoring::{EvalContext, PlanningInput, ScoringError, Summary, VectorScore};
use crate::workload::{PredictionTable, WorkloadWindow};

pub use lattice::{enumerate_neighbor_provisionings, ProvisioningLattice};

/// Beam width used by the planner.
pub const DEFAULT_BEAM_WIDTH: usize = 100;
/// Largest `3^queries × provisionings` the exhaustive oracle will enumerate.
pub const EXHAUSTIVE_LIMIT: f64 = 1e7;
pub const RANDOM_SAMPLES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("no blueprint satisfies the SLOs")]
    NoFeasibleBlueprint,
    #[error("search space of {0:.3e} candidates exceeds the exhaustive limit")]
    SearchSpaceTooLarge(f64),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Router(#[from] RouterError),
}

/// Window query indices in planning order: arrival rate descending, then
/// best-to-worst predicted speedup descending, then query id.
pub fn order_queries(w: &WorkloadWindow, predictions: &PredictionTable) -> Vec<usize> {
    let speedup = |i: usize| {
        let r = &predictions.runtime[i];
        let max = r.iter().copied().fold(f64::MIN, f64::max);
        let min = r.iter().copied().fold(f64::MAX, f64::min);
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    };
    let mut idx: Vec<usize> = (0..w.queries.len()).collect();
    idx.sort_by(|a, b| {
        w.queries[*b]
            .arrival_rate
            .total_cmp(&w.queries[*a].arrival_rate)
            .then(speedup(*b).total_cmp(&speedup(*a)))
            .then(w.queries[*a].id.cmp(&w.queries[*b].id))
    });
    idx
}

/// Best assignment found for one provisioning.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub assign: Vec<Option<EngineId>>,
    pub summary: Summary,
    pub fingerprint: u64,
    /// Complete or partial candidates scored.
    pub candidates: usize,
}

impl Outcome {
    pub fn key(&self) -> RankKey {
        key(&self.summary, self.fingerprint)
    }
}

fn key(s: &Summary, fingerprint: u64) -> RankKey {
    RankKey { w: s.w, transition_time: s.transition_time, operating_cost: s.operating_cost, fingerprint }
}

fn engines_for<'c>(ctx: &'c EvalContext<'_>, i: usize) -> impl Iterator<Item = EngineId> + 'c {
    EngineId::ALL.into_iter().filter(move |e| ctx.allowed(i, *e))
}

/// Alg. 1 for one provisioning: extend every beam entry by each engine for
/// the next query, keep valid children, truncate to the `k` best.
pub fn beam_search(ctx: &EvalContext, order: &[usize], k: usize) -> Result<Outcome, SearchError> {
    let k = k.max(1);
    let n = ctx.n_queries();
    let empty = vec![None; n];
    let s0 = ctx.evaluate(&empty);
    let fp0 = ctx.fingerprint(&empty);
    let mut beam = vec![(key(&s0, fp0), empty, s0)];
    let mut candidates = 0;
    for &qi in order {
        let mut children = Vec::with_capacity(beam.len() * 3);
        for (_, assign, _) in &beam {
            for e in engines_for(ctx, qi) {
                let mut a = assign.clone();
                a[qi] = Some(e);
                let s = ctx.evaluate(&a);
                candidates += 1;
                if s.valid {
                    children.push((key(&s, ctx.fingerprint(&a)), a, s));
                }
            }
        }
        if children.is_empty() {
            return Err(SearchError::NoFeasibleBlueprint);
        }
        children.sort_by(|a, b| a.0.cmp(&b.0));
        children.truncate(k);
        beam = children;
    }
    let (key, assign, summary) = beam.into_iter().next().expect("beam is nonempty");
    if !summary.feasible {
        return Err(SearchError::NoFeasibleBlueprint);
    }
    Ok(Outcome { assign, summary, fingerprint: key.fingerprint, candidates })
}

/// Global optimum over every assignment for one provisioning.
pub fn exhaustive_search(ctx: &EvalContext) -> Result<Outcome, SearchError> {
    let n = ctx.n_queries();
    let size = 3f64.powi(n as i32);
    if size > EXHAUSTIVE_LIMIT {
        return Err(SearchError::SearchSpaceTooLarge(size));
    }
    let options: Vec<Vec<EngineId>> = (0..n).map(|i| engines_for(ctx, i).collect()).collect();
    if options.iter().any(Vec::is_empty) {
        return Err(SearchError::NoFeasibleBlueprint);
    }
    let mut digits = vec![0usize; n];
    let mut assign: Vec<Option<EngineId>> = options.iter().map(|o| Some(o[0])).collect();
    let mut best: Option<Outcome> = None;
    let mut candidates = 0;
    loop {
        let s = ctx.evaluate(&assign);
        candidates += 1;
        if s.valid {
            let fp = ctx.fingerprint(&assign);
            if best.as_ref().map_or(true, |b| key(&s, fp).cmp(&b.key()).is_lt()) {
                best = Some(Outcome { assign: assign.clone(), summary: s, fingerprint: fp, candidates: 0 });
            }
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == n {
                let mut b = best.filter(|b| b.summary.feasible).ok_or(SearchError::NoFeasibleBlueprint)?;
                b.candidates = candidates;
                return Ok(b);
            }
            digits[i] += 1;
            if digits[i] < options[i].len() {
                assign[i] = Some(options[i][digits[i]]);
                break;
            }
            digits[i] = 0;
            assign[i] = Some(options[i][0]);
            i += 1;
        }
    }
}

/// Each query on its fastest allowed engine (ties by engine order).
pub fn naive_greedy(ctx: &EvalContext) -> Outcome {
    let assign: Vec<Option<EngineId>> = (0..ctx.n_queries())
        .map(|i| engines_for(ctx, i).min_by(|a, b| ctx.latency(i, *a).total_cmp(&ctx.latency(i, *b))))
        .collect();
    let summary = ctx.evaluate(&assign);
    Outcome { fingerprint: ctx.fingerprint(&assign), assign, summary, candidates: 1 }
}

/// Best of `samples` uniformly random assignments.
pub fn random_search(ctx: &EvalContext, samples: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let options: Vec<Vec<EngineId>> = (0..ctx.n_queries()).map(|i| engines_for(ctx, i).collect()).collect();
    let mut best: Option<Outcome> = None;
    for _ in 0..samples.max(1) {
        let assign: Vec<Option<EngineId>> =
            options.iter().map(|o| (!o.is_empty()).then(|| o[rng.gen_range(0..o.len())])).collect();
        let s = ctx.evaluate(&assign);
        let fp = ctx.fingerprint(&assign);
        if best.as_ref().map_or(true, |b| key(&s, fp).cmp(&b.key()).is_lt()) {
            best = Some(Outcome { assign, summary: s, fingerprint: fp, candidates: 0 });
        }
    }
    let mut b = best.expect("at least one sample");
    b.candidates = samples.max(1);
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub beam_width: usize,
    pub forest: ForestConfig,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { beam_width: DEFAULT_BEAM_WIDTH, forest: ForestConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanStats {
    pub provisionings: usize,
    pub queries: usize,
    pub beam_width: usize,
    pub candidates_scored: usize,
    /// `k·m·q·p` with `m = 3` engines.
    pub candidate_bound: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanReport {
    pub blueprint: Blueprint,
    pub w: f64,
    pub score: VectorScore,
    /// The current blueprint scored best and was kept.
    pub kept_current: bool,
    pub stats: PlanStats,
}

fn best_of(outcomes: impl IntoIterator<Item = (usize, Outcome)>) -> Option<(usize, Outcome)> {
    outcomes.into_iter().min_by(|a, b| a.1.key().cmp(&b.1.key()).then(a.0.cmp(&b.0)))
}

/// Best blueprint over all neighbouring provisionings. The current
/// blueprint itself is always a candidate.
pub fn plan(input: &PlanningInput, lattice: &ProvisioningLattice, cfg: &PlanConfig) -> Result<PlanReport, SearchError> {
    let provs = enumerate_neighbor_provisionings(&input.current.provisionings, lattice);
    let order = order_queries(&input.window, &input.predictions);
    let results: Vec<Result<Option<Outcome>, SearchError>> = provs
        .par_iter()
        .map(|p| {
            let ctx = EvalContext::new(input, p.clone())?;
            match beam_search(&ctx, &order, cfg.beam_width) {
                Ok(o) => Ok(Some(o)),
                Err(SearchError::NoFeasibleBlueprint) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut outcomes = Vec::new();
    let mut candidates = 0;
    for (i, r) in results.into_iter().enumerate() {
        if let Some(o) = r? {
            candidates += o.candidates;
            outcomes.push((i, o));
        }
    }

    let stay_ctx = EvalContext::for_blueprint(input, &input.current)?;
    let stay = stay_ctx.route_all(&input.current).ok().map(|assign| {
        let summary = stay_ctx.evaluate(&assign);
        Outcome { fingerprint: stay_ctx.fingerprint(&assign), assign, summary, candidates: 1 }
    });

    let best = best_of(outcomes.iter().cloned());
    let stay_wins = match (&stay, &best) {
        (Some(s), Some((_, b))) => s.summary.feasible && s.key().w <= b.key().w,
        (Some(s), None) => s.summary.feasible,
        _ => false,
    };
    let (ctx, outcome) = if stay_wins {
        (stay_ctx, stay.expect("checked"))
    } else {
        let (i, o) = best.ok_or(SearchError::NoFeasibleBlueprint)?;
        (EvalContext::new(input, provs[i].clone())?, o)
    };

    let mut blueprint = if stay_wins { input.current.clone() } else { ctx.blueprint(&outcome.assign) };
    if stay_wins {
        blueprint.routing.assignments = input
            .window
            .queries
            .iter()
            .zip(&outcome.assign)
            .filter_map(|(q, a)| a.map(|e| (q.id.clone(), e)))
            .collect();
    }
    if !input.window.is_empty() {
        let adjusted: Vec<[f64; 3]> =
            (0..ctx.n_queries()).map(|i| EngineId::ALL.map(|e| ctx.latency(i, e))).collect();
        let forest = train_routing_forest(&input.window.queries, &input.window.catalog, &adjusted, &cfg.forest)?;
        blueprint.routing.online_policy = Some(forest.shared());
    }
    let score = ctx.score(&outcome.assign);
    let q = input.window.len();
    Ok(PlanReport {
        blueprint,
        w: outcome.summary.w,
        score,
        kept_current: stay_wins,
        stats: PlanStats {
            provisionings: provs.len(),
            queries: q,
            beam_width: cfg.beam_width,
            candidates_scored: candidates,
            candidate_bound: cfg.beam_width * 3 * q * provs.len(),
        },
    })
}

/// Outcome of a search for each provisioning, for the baselines' harness.
pub fn per_provisioning<F>(
    input: &PlanningInput,
    provs: &[BTreeMap<EngineId, Provisioning>],
    f: F,
) -> Result<Option<(usize, Outcome)>, SearchError>
where
    F: Fn(&EvalContext) -> Result<Outcome, SearchError> + Sync,
{
    let results: Vec<Result<Option<Outcome>, SearchError>> = provs
        .par_iter()
        .map(|p| {
            let ctx = EvalContext::new(input, p.clone())?;
            match f(&ctx) {
                Ok(o) => Ok(Some(o)),
                Err(SearchError::NoFeasibleBlueprint) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut all = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        if let Some(o) = r? {
            all.push((i, o));
        }
    }
    Ok(best_of(all))
}

/// Exhaustive oracle across all neighbouring provisionings.
pub fn exhaustive_plan(input: &PlanningInput, lattice: &ProvisioningLattice) -> Result<(Blueprint, Outcome), SearchError> {
    let provs = enumerate_neighbor_provisionings(&input.current.provisionings, lattice);
    let size = 3f64.powi(input.window.len() as i32) * provs.len() as f64;
    if size > EXHAUSTIVE_LIMIT {
        return Err(SearchError::SearchSpaceTooLarge(size));
    }
    let (i, o) = per_provisioning(input, &provs, exhaustive_search)?.ok_or(SearchError::NoFeasibleBlueprint)?;
    let ctx = EvalContext::new(input, provs[i].clone())?;
    Ok((ctx.blueprint(&o.assign), o))
}

/// Assignment a blueprint implies for each window query.
pub fn assignment_of(bp: &Blueprint, w: &WorkloadWindow) -> Vec<Option<EngineId>> {
    w.queries.iter().map(|q| bp.routing.assignments.get(&q.id).copied()).collect()
}
