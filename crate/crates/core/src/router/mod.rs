//! Online engine selection: pre-planned assignments first, then a small
//! decision forest trained on predicted run times.

mod forest;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blueprint::{eligible_engines, Blueprint, BlueprintError, CapabilityConfig, EngineId};
use crate::query::{estimate_selectivity, DatasetCatalog, LogicalQuery, QueryError};

pub use forest::{ForestConfig, RoutingForest, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouterError {
    #[error("cannot train a routing forest on an empty workload")]
    EmptyWorkload,
    #[error("predictions cover {got} queries, workload has {want}")]
    PredictionShape { got: usize, want: usize },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("invalid forest document: {0}")]
    Json(String),
}

/// Per-table scan cardinalities over a fixed table order, followed by total
/// cardinality, table count and join count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingFeatures(pub Vec<f64>);

/// Feature layout: one slot per catalog table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub tables: Vec<String>,
}

impl FeatureSpace {
    pub fn from_catalog(cat: &DatasetCatalog) -> Self {
        Self { tables: cat.table_names().map(str::to_string).collect() }
    }

    pub fn width(&self) -> usize {
        self.tables.len() + 3
    }

    /// Index of the total-cardinality feature.
    pub fn total_index(&self) -> usize {
        self.tables.len()
    }

    pub fn featurize(&self, q: &LogicalQuery, cat: &DatasetCatalog) -> Result<RoutingFeatures, QueryError> {
        let est = estimate_selectivity(q, cat)?;
        let mut f = vec![0.0; self.width()];
        let mut total = 0.0;
        for t in &q.tables {
            let card = cat.table(t)?.row_count as f64 * est.scans[t];
            total += card;
            if let Some(i) = self.tables.iter().position(|x| x == t) {
                f[i] = card;
            }
        }
        let n = self.tables.len();
        f[n] = total;
        f[n + 1] = q.tables.len() as f64;
        f[n + 2] = q.join_predicates.len() as f64;
        Ok(RoutingFeatures(f))
    }
}

/// Engines ordered by ascending predicted run time, ties by engine order.
pub fn rank_by_runtime(runtimes: &[f64; 3]) -> [EngineId; 3] {
    let mut r = EngineId::ALL;
    r.sort_by(|a, b| runtimes[a.index()].total_cmp(&runtimes[b.index()]).then(a.cmp(b)));
    r
}

pub fn train_routing_forest(
    queries: &[LogicalQuery],
    catalog: &DatasetCatalog,
    predicted: &[[f64; 3]],
    cfg: &ForestConfig,
) -> Result<RoutingForest, RouterError> {
    if queries.is_empty() {
        return Err(RouterError::EmptyWorkload);
    }
    if predicted.len() != queries.len() {
        return Err(RouterError::PredictionShape { got: predicted.len(), want: queries.len() });
    }
    let space = FeatureSpace::from_catalog(catalog);
    let mut xs = Vec::with_capacity(queries.len());
    for q in queries {
        xs.push(space.featurize(q, catalog)?.0);
    }
    let labels: Vec<[EngineId; 3]> = predicted.iter().map(rank_by_runtime).collect();
    Ok(RoutingForest::fit(space, &xs, &labels, cfg))
}

/// Pre-planned assignment when still eligible; otherwise the forest's
/// ranking (engine order without a forest) filtered by eligibility.
pub fn route(
    q: &LogicalQuery,
    bp: &Blueprint,
    forest: Option<&RoutingForest>,
    caps: &CapabilityConfig,
    catalog: &DatasetCatalog,
) -> Result<EngineId, BlueprintError> {
    let eligible = eligible_engines(q, bp, caps)?;
    if let Some(e) = bp.routing.assignments.get(&q.id) {
        if eligible.contains(e) {
            return Ok(*e);
        }
    }
    let forest = forest.or(bp.routing.online_policy.as_deref());
    let ranking = forest
        .and_then(|f| f.space.featurize(q, catalog).ok().map(|x| f.rank(&x.0)))
        .unwrap_or(EngineId::ALL);
    Ok(ranking.into_iter().find(|e| eligible.contains(e)).expect("eligible set is nonempty"))
}

/// Geometric mean of chosen / best run time over routing decisions.
pub fn routing_slowdown(decisions: &[(EngineId, [f64; 3])]) -> f64 {
    if decisions.is_empty() {
        return 1.0;
    }
    let sum: f64 = decisions
        .iter()
        .map(|(e, r)| {
            let best = r.iter().copied().fold(f64::INFINITY, f64::min);
            (r[e.index()] / best).ln()
        })
        .sum();
    (sum / decisions.len() as f64).exp()
}

/// Routing quality of a forest on held-out queries, next to the baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingEvaluation {
    pub train_queries: usize,
    pub test_queries: usize,
    /// Geometric-mean slowdown against the fastest engine per query.
    pub forest_slowdown: f64,
    pub random_slowdown: f64,
    pub single_engine_slowdown: BTreeMap<EngineId, f64>,
    /// Most split nodes any single routing decision visited.
    pub max_nodes_touched: usize,
    pub node_bound: usize,
}

/// Trains on the first `train_fraction` of the queries (labelled by their
/// true run times) and routes the rest. Random routing picks uniformly with
/// a ChaCha8 stream seeded by `seed`.
pub fn evaluate_routing(
    queries: &[LogicalQuery],
    runtimes: &[[f64; 3]],
    catalog: &DatasetCatalog,
    train_fraction: f64,
    cfg: &ForestConfig,
    seed: u64,
) -> Result<RoutingEvaluation, RouterError> {
    if runtimes.len() != queries.len() {
        return Err(RouterError::PredictionShape { got: runtimes.len(), want: queries.len() });
    }
    let split = ((queries.len() as f64 * train_fraction.clamp(0.0, 1.0)).round() as usize).clamp(1, queries.len());
    if split == queries.len() {
        return Err(RouterError::EmptyWorkload);
    }
    let forest = train_routing_forest(&queries[..split], catalog, &runtimes[..split], cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    let mut random = Vec::new();
    let mut max_nodes = 0;
    for (q, r) in queries[split..].iter().zip(&runtimes[split..]) {
        let x = forest.space.featurize(q, catalog)?;
        let (rank, nodes) = forest.rank_counted(&x.0);
        max_nodes = max_nodes.max(nodes);
        chosen.push((rank[0], *r));
        random.push((EngineId::ALL[rng.gen_range(0..3)], *r));
    }
    let single_engine_slowdown = EngineId::ALL
        .into_iter()
        .map(|e| (e, routing_slowdown(&runtimes[split..].iter().map(|r| (e, *r)).collect::<Vec<_>>())))
        .collect();
    Ok(RoutingEvaluation {
        train_queries: split,
        test_queries: queries.len() - split,
        forest_slowdown: routing_slowdown(&chosen),
        random_slowdown: routing_slowdown(&random),
        single_engine_slowdown,
        max_nodes_touched: max_nodes,
        node_bound: forest.trees.len() * forest.max_depth,
    })
}

impl RoutingForest {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RouterError> {
        serde_json::from_str(text).map_err(|e| RouterError::Json(e.to_string()))
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    use crate::blueprint::Provisioning;
    use crate::query::{parse_query, Histogram, TableStats};

    fn catalog() -> DatasetCatalog {
        let mut cat = DatasetCatalog::default();
        for t in ["a", "b"] {
            let mut ts = TableStats { row_count: 100_000, size_bytes: 1 << 20, columns: BTreeMap::new() };
            ts.columns.insert("x".into(), Histogram::uniform(0.0, 1000.0, 100_000, 1000));
            cat.tables.insert(t.into(), ts);
        }
        cat
    }

    fn bp(cat: &DatasetCatalog) -> Blueprint {
        let provs = BTreeMap::from([
            (EngineId::RowStore, Provisioning::new(EngineId::RowStore, "r", 1, 2)),
            (EngineId::Warehouse, Provisioning::new(EngineId::Warehouse, "w", 1, 2)),
            (EngineId::ScanService, Provisioning::serverless()),
        ]);
        Blueprint::derived(provs, BTreeMap::new(), &[], cat)
    }

    #[test]
    fn slowdown_examples() {
        assert_eq!(routing_slowdown(&[(EngineId::RowStore, [1.0, 2.0, 3.0])]), 1.0);
        let two = [(EngineId::RowStore, [1.0, 2.0, 3.0]), (EngineId::Warehouse, [1.0, 4.0, 8.0])];
        assert!((routing_slowdown(&two) - 2.0).abs() < 1e-12);
        assert!((routing_slowdown(&[(EngineId::ScanService, [2.0, 2.5, 3.0])]) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn assignment_then_ranking_then_filter() {
        let cat = catalog();
        let mut bp = bp(&cat);
        let q = parse_query("SELECT x FROM a WHERE x < 10").unwrap();
        bp.routing.assignments.insert(q.id.clone(), EngineId::RowStore);
        let caps = CapabilityConfig::default();
        assert_eq!(route(&q, &bp, None, &caps, &cat).unwrap(), EngineId::RowStore);

        // Forest prefers Warehouse for everything; Warehouse lacks table a.
        let space = FeatureSpace::from_catalog(&cat);
        let x = vec![space.featurize(&q, &cat).unwrap().0];
        let forest = RoutingForest::fit(space, &x, &[[EngineId::Warehouse, EngineId::RowStore, EngineId::ScanService]], &ForestConfig::default());
        let unseen = parse_query("SELECT x FROM a WHERE x > 10").unwrap();
        assert_eq!(route(&unseen, &bp, Some(&forest), &caps, &cat).unwrap(), EngineId::RowStore);
        bp.placement.placement.get_mut("a").unwrap().insert(EngineId::Warehouse);
        assert_eq!(route(&unseen, &bp, Some(&forest), &caps, &cat).unwrap(), EngineId::Warehouse);
    }

    #[test]
    fn capabilities_override_ranking() {
        let cat = catalog();
        let mut bp = bp(&cat);
        for e in bp.placement.placement.values_mut() {
            e.extend([EngineId::Warehouse, EngineId::ScanService]);
        }
        let caps = CapabilityConfig(BTreeMap::from([("<=>".to_string(), BTreeSet::from([EngineId::RowStore]))]));
        let q = parse_query("SELECT x FROM a WHERE x <=> '[1,2]'").unwrap();
        let space = FeatureSpace::from_catalog(&cat);
        let x = vec![space.featurize(&q, &cat).unwrap().0];
        let forest = RoutingForest::fit(space, &x, &[[EngineId::ScanService, EngineId::Warehouse, EngineId::RowStore]], &ForestConfig::default());
        assert_eq!(route(&q, &bp, Some(&forest), &caps, &cat).unwrap(), EngineId::RowStore);
    }

    #[test]
    fn separable_workload_is_learned_exactly() {
        let cat = catalog();
        let mut queries = Vec::new();
        let mut preds = Vec::new();
        for i in 0..60 {
            let cut = 10 + i * 15;
            let q = parse_query(&format!("SELECT x FROM a WHERE x < {cut}")).unwrap();
            let card = 100.0 * cut as f64;
            preds.push(if card < 50_000.0 { [0.1, 1.0, 3.0] } else { [9.0, 1.0, 3.0] });
            queries.push(q);
        }
        let forest = train_routing_forest(&queries, &cat, &preds, &ForestConfig::default()).unwrap();
        for (q, p) in queries.iter().zip(&preds) {
            let f = forest.space.featurize(q, &cat).unwrap();
            assert_eq!(forest.rank(&f.0)[0], rank_by_runtime(p)[0]);
        }
        let again = RoutingForest::from_json(&forest.to_json()).unwrap();
        assert_eq!(again, forest);
    }

    #[test]
    fn empty_workload() {
        assert_eq!(
            train_routing_forest(&[], &catalog(), &[], &ForestConfig::default()),
            Err(RouterError::EmptyWorkload)
        );
    }
}
