//! A small movie-ticketing environment (IMDB-like catalog plus a ticketing
//! schema) used by the shipped scenarios, the harnesses and the tests.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GroundTruth, TruthParams};
use crate::blueprint::{Blueprint, CapabilityConfig, EngineId, Provisioning};
use crate::comparator::{CurrentMetrics, SloConfig};
use crate::predictor::{PredictError, PredictorKind, ProvisioningConstants, TxnModelConstants};
use crate::query::{parse_query, DatasetCatalog, Histogram, LogicalQuery, QueryError, TableStats};
use crate::scoring::{EngineLoad, InstanceType, LoadState, PlanningInput, PricingCatalog, ScoringModels, StorageRate};
use crate::search::ProvisioningLattice;
use crate::workload::{PredictionTable, WorkloadRecord, WorkloadWindow};

const MIB: u64 = 1 << 20;

fn table(rows: u64, bytes: u64, cols: &[(&str, f64, f64, u64)]) -> TableStats {
    let columns = cols
        .iter()
        .map(|(name, lo, hi, distinct)| (name.to_string(), Histogram::uniform(*lo, *hi, rows, (*distinct).min(rows))))
        .collect();
    TableStats { row_count: rows, size_bytes: bytes, columns }
}

pub fn reference_catalog() -> DatasetCatalog {
    let mut c = DatasetCatalog::default();
    let t = &mut c.tables;
    t.insert(
        "title".into(),
        table(2_500_000, 400 * MIB, &[
            ("id", 0.0, 2_500_000.0, 2_500_000),
            ("kind_id", 1.0, 8.0, 7),
            ("production_year", 1880.0, 2026.0, 146),
            ("title", 0.0, 2_500_000.0, 2_400_000),
        ]),
    );
    t.insert(
        "movie_info".into(),
        table(15_000_000, 2_000 * MIB, &[
            ("id", 0.0, 15_000_000.0, 15_000_000),
            ("movie_id", 0.0, 2_500_000.0, 2_500_000),
            ("info_type_id", 1.0, 114.0, 113),
            ("info", 0.0, 1e6, 1_000_000),
        ]),
    );
    t.insert(
        "cast_info".into(),
        table(36_000_000, 3_000 * MIB, &[
            ("id", 0.0, 36_000_000.0, 36_000_000),
            ("movie_id", 0.0, 2_500_000.0, 2_500_000),
            ("person_id", 0.0, 4_000_000.0, 4_000_000),
            ("role_id", 1.0, 13.0, 12),
        ]),
    );
    t.insert(
        "name".into(),
        table(4_000_000, 500 * MIB, &[
            ("id", 0.0, 4_000_000.0, 4_000_000),
            ("birth_year", 1850.0, 2020.0, 170),
            ("gender_id", 0.0, 3.0, 3),
        ]),
    );
    t.insert(
        "movie_companies".into(),
        table(2_600_000, 200 * MIB, &[
            ("id", 0.0, 2_600_000.0, 2_600_000),
            ("movie_id", 0.0, 2_500_000.0, 2_500_000),
            ("company_id", 0.0, 235_000.0, 235_000),
            ("company_type_id", 1.0, 5.0, 4),
        ]),
    );
    t.insert(
        "company_name".into(),
        table(235_000, 20 * MIB, &[("id", 0.0, 235_000.0, 235_000), ("country_id", 0.0, 200.0, 200)]),
    );
    t.insert(
        "movie_keyword".into(),
        table(4_500_000, 150 * MIB, &[
            ("id", 0.0, 4_500_000.0, 4_500_000),
            ("movie_id", 0.0, 2_500_000.0, 2_500_000),
            ("keyword_id", 0.0, 134_000.0, 134_000),
        ]),
    );
    t.insert("keyword".into(), table(134_000, 5 * MIB, &[("id", 0.0, 134_000.0, 134_000), ("phonetic_id", 0.0, 5000.0, 5000)]));
    t.insert(
        "theatres".into(),
        table(10_000, MIB, &[("id", 0.0, 10_000.0, 10_000), ("city_id", 0.0, 100.0, 100)]),
    );
    t.insert(
        "showings".into(),
        table(2_000_000, 120 * MIB, &[
            ("id", 0.0, 2_000_000.0, 2_000_000),
            ("theatre_id", 0.0, 10_000.0, 10_000),
            ("movie_id", 0.0, 2_500_000.0, 2_500_000),
            ("date_day", 0.0, 3650.0, 3650),
        ]),
    );
    t.insert(
        "ticket_orders".into(),
        table(10_000_000, 800 * MIB, &[
            ("id", 0.0, 10_000_000.0, 10_000_000),
            ("showing_id", 0.0, 2_000_000.0, 2_000_000),
            ("quantity", 1.0, 9.0, 8),
        ]),
    );
    c
}

fn instances(list: &[(&str, u32, f64)]) -> Vec<InstanceType> {
    list.iter().map(|(n, v, p)| InstanceType { name: n.to_string(), vcpus: *v, price_per_hour: *p }).collect()
}

/// On-demand prices in $/hour; move rates in bytes/second.
pub fn reference_pricing() -> PricingCatalog {
    let mb = MIB as f64;
    PricingCatalog {
        instance_prices: BTreeMap::from([
            (
                EngineId::RowStore,
                instances(&[
                    ("db.t4g.medium", 2, 0.073),
                    ("db.r6g.xlarge", 4, 0.519),
                    ("db.r6g.2xlarge", 8, 1.038),
                    ("db.r6g.4xlarge", 16, 2.076),
                ]),
            ),
            (
                EngineId::Warehouse,
                instances(&[("dc2.large", 2, 0.25), ("ra3.xlplus", 4, 1.086), ("ra3.4xlarge", 12, 3.26)]),
            ),
        ]),
        scan_price_per_tb: 5.0,
        storage_per_row_hour: BTreeMap::from([
            (EngineId::RowStore, StorageRate::Flat(1.5e-11)),
            (EngineId::Warehouse, StorageRate::Flat(3e-11)),
            (EngineId::ScanService, StorageRate::Flat(3e-12)),
        ]),
        export_rate_bps: BTreeMap::from([
            (EngineId::RowStore, 40.0 * mb),
            (EngineId::Warehouse, 80.0 * mb),
            (EngineId::ScanService, 200.0 * mb),
        ]),
        import_rate_bps: BTreeMap::from([
            (EngineId::RowStore, 30.0 * mb),
            (EngineId::Warehouse, 60.0 * mb),
            (EngineId::ScanService, 200.0 * mb),
        ]),
        rowstore_change_s: 300.0,
        elastic_resize_s: 900.0,
        classic_resize_bps: 18.0 * mb,
        transfer_price_per_tb: 0.0,
    }
}

/// Geospatial functions only the RowStore implements; vector similarity
/// only the RowStore and the Warehouse.
pub fn reference_capabilities() -> CapabilityConfig {
    CapabilityConfig(BTreeMap::from([
        ("ST_DWithin".to_string(), BTreeSet::from([EngineId::RowStore])),
        ("<=>".to_string(), BTreeSet::from([EngineId::RowStore, EngineId::Warehouse])),
    ]))
}

pub fn reference_provisioning_constants() -> BTreeMap<EngineId, ProvisioningConstants> {
    BTreeMap::from([
        (EngineId::RowStore, ProvisioningConstants::new(0.8, 0.2, 4)),
        (EngineId::Warehouse, ProvisioningConstants::new(0.9, 0.1, 4)),
    ])
}

pub fn reference_txn_model() -> TxnModelConstants {
    TxnModelConstants { a: 0.004, b: 0.002, m: 1.0, residual: 0.0 }
}

/// Calibrated models. The load fallback is one busy second per hour of
/// routed run time, i.e. the utilization of a single server.
pub fn reference_models() -> ScoringModels {
    let per_second_hour = 1.0 / 3600.0;
    ScoringModels {
        provisioning: reference_provisioning_constants(),
        txn: reference_txn_model(),
        load_fallback: EngineId::ALL.into_iter().map(|e| (e, per_second_hour)).collect(),
        percentile: 0.9,
        overload_epsilon: crate::scoring::OVERLOAD_EPSILON,
    }
}

pub fn reference_truth(catalog: Arc<DatasetCatalog>) -> GroundTruth {
    GroundTruth::new(catalog, TruthParams::default())
}

pub fn reference_lattice(pricing: &PricingCatalog, radius: usize) -> ProvisioningLattice {
    ProvisioningLattice::from_pricing(pricing, radius)
}

/// Read-mostly dashboard queries that a mid-sized RowStore can serve.
pub const LIGHT_ANALYTICS: [&str; 12] = [
    "SELECT COUNT(*) FROM title WHERE title.production_year > 2015",
    "SELECT title.kind_id, COUNT(*) FROM title WHERE title.production_year >= 2000 GROUP BY title.kind_id",
    "SELECT AVG(movie_info.info_type_id) FROM movie_info WHERE movie_info.info_type_id < 5",
    "SELECT COUNT(*) FROM cast_info WHERE cast_info.role_id = 3 AND cast_info.person_id < 400000",
    "SELECT name.birth_year, COUNT(*) FROM name WHERE name.birth_year > 1990 GROUP BY name.birth_year",
    "SELECT COUNT(*) FROM movie_companies, company_name WHERE movie_companies.company_id = company_name.id \
     AND company_name.country_id = 7 AND movie_companies.company_type_id = 2",
    "SELECT COUNT(*) FROM movie_keyword WHERE movie_keyword.keyword_id < 2000",
    "SELECT title.production_year, COUNT(*) FROM title, movie_keyword WHERE title.id = movie_keyword.movie_id \
     AND movie_keyword.keyword_id < 1000 AND title.production_year > 2010 GROUP BY title.production_year",
    "SELECT SUM(ticket_orders.quantity) FROM ticket_orders WHERE ticket_orders.showing_id < 100000",
    "SELECT showings.theatre_id, COUNT(*) FROM showings WHERE showings.date_day > 3600 GROUP BY showings.theatre_id",
    "SELECT COUNT(*) FROM showings, theatres WHERE showings.theatre_id = theatres.id AND theatres.city_id = 12 \
     AND showings.date_day > 3500",
    "SELECT title.kind_id, COUNT(*) FROM title WHERE title.kind_id = 1 GROUP BY title.kind_id",
];

/// Full-table reporting queries that favour the Warehouse.
pub const HEAVY_ANALYTICS: [&str; 6] = [
    "SELECT title.production_year, COUNT(*) FROM title, movie_info WHERE title.id = movie_info.movie_id \
     GROUP BY title.production_year",
    "SELECT cast_info.role_id, COUNT(*) FROM cast_info GROUP BY cast_info.role_id",
    "SELECT name.gender_id, COUNT(*) FROM name, cast_info WHERE name.id = cast_info.person_id GROUP BY name.gender_id",
    "SELECT SUM(ticket_orders.quantity) FROM ticket_orders, showings WHERE ticket_orders.showing_id = showings.id",
    "SELECT movie_companies.company_type_id, COUNT(*) FROM movie_companies GROUP BY movie_companies.company_type_id",
    "SELECT AVG(movie_info.info_type_id) FROM movie_info",
];

pub fn light_analytics(rate_per_hour: f64) -> Vec<WorkloadRecord> {
    LIGHT_ANALYTICS
        .iter()
        .enumerate()
        .map(|(i, sql)| WorkloadRecord {
            query_id: Some(format!("la{:02}", i + 1)),
            sql: sql.to_string(),
            arrival_rate_per_hour: rate_per_hour,
            tag: None,
        })
        .collect()
}

/// Blueprint with every table on the RowStore and the given provisionings
/// (vCPUs looked up in `pricing`).
pub fn reference_blueprint(
    pricing: &PricingCatalog,
    catalog: &DatasetCatalog,
    provs: &[(EngineId, &str, u32)],
) -> Blueprint {
    let mut map = BTreeMap::from([(EngineId::ScanService, Provisioning::serverless())]);
    for (e, ty, n) in provs {
        let vcpus = pricing.instance(*e, ty).map_or(1, |i| i.vcpus);
        map.insert(*e, Provisioning::new(*e, *ty, *n, vcpus));
    }
    Blueprint::derived(map, BTreeMap::new(), &[], catalog)
}

struct Template {
    table: &'static str,
    column: &'static str,
    lo: f64,
    hi: f64,
    join: Option<(&'static str, &'static str, &'static str)>,
}

const TEMPLATES: [Template; 8] = [
    Template { table: "title", column: "production_year", lo: 1890.0, hi: 2024.0, join: None },
    Template { table: "movie_info", column: "info_type_id", lo: 1.0, hi: 113.0, join: None },
    Template { table: "cast_info", column: "person_id", lo: 0.0, hi: 4_000_000.0, join: None },
    Template { table: "name", column: "birth_year", lo: 1850.0, hi: 2020.0, join: None },
    Template { table: "ticket_orders", column: "showing_id", lo: 0.0, hi: 2_000_000.0, join: None },
    Template { table: "showings", column: "date_day", lo: 0.0, hi: 3650.0, join: Some(("theatres", "theatre_id", "id")) },
    Template { table: "movie_keyword", column: "keyword_id", lo: 0.0, hi: 134_000.0, join: Some(("keyword", "keyword_id", "id")) },
    Template {
        table: "movie_companies",
        column: "company_id",
        lo: 0.0,
        hi: 235_000.0,
        join: Some(("company_name", "company_id", "id")),
    },
];

/// A random analytical query: a range filter over one of the templates,
/// with selectivity spread over three orders of magnitude.
pub fn random_query(rng: &mut impl Rng) -> LogicalQuery {
    let t = &TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
    let frac = 10f64.powf(rng.gen_range(-3.0..0.0));
    let cut = (t.lo + (t.hi - t.lo) * frac).round();
    let sql = match t.join {
        None => format!("SELECT COUNT(*) FROM {0} WHERE {0}.{1} < {2}", t.table, t.column, cut),
        Some((other, fk, pk)) => format!(
            "SELECT COUNT(*) FROM {0}, {3} WHERE {0}.{4} = {3}.{5} AND {0}.{1} < {2}",
            t.table, t.column, cut, other, fk, pk
        ),
    };
    parse_query(&sql).expect("template parses")
}

/// A self-contained planning problem over `n` random queries and a fixed
/// RowStore + Warehouse + ScanService provisioning, for comparing search
/// strategies.
pub fn random_planning_instance(n: usize, seed: u64) -> PlanningInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries: Vec<LogicalQuery> = Vec::with_capacity(n);
    while queries.len() < n {
        let q = random_query(&mut rng);
        if queries.iter().any(|x| x.id == q.id) {
            continue;
        }
        let rate = 10f64.powf(rng.gen_range(0.0..2.0));
        queries.push(q.with_arrival_rate(rate.round().max(1.0)));
    }
    planning_instance_with(queries, &mut rng)
}

/// Planning problem over the given queries with the same randomized
/// infrastructure, load and SLO as [`random_planning_instance`]. Queries
/// must reference the reference catalog.
pub fn planning_instance(queries: Vec<LogicalQuery>, seed: u64) -> Result<PlanningInput, PredictError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog = reference_catalog();
    for q in &queries {
        for t in &q.tables {
            if catalog.tables.get(t).is_none() {
                return Err(PredictError::Query(QueryError::UnknownTable(t.clone())));
            }
        }
    }
    Ok(planning_instance_with(queries, &mut rng))
}

fn planning_instance_with(queries: Vec<LogicalQuery>, rng: &mut ChaCha8Rng) -> PlanningInput {
    let catalog = Arc::new(reference_catalog());
    let pricing = reference_pricing();
    let truth = Arc::new(reference_truth(catalog.clone()));
    let predictions = PredictionTable::build(&queries, &PredictorKind::Oracle(truth)).expect("catalog covers queries");
    let wh_nodes = *[1u32, 2, 4].choose(rng).expect("nonempty");
    let current = reference_blueprint(
        &pricing,
        &catalog,
        &[(EngineId::RowStore, "db.r6g.xlarge", 1), (EngineId::Warehouse, "dc2.large", wh_nodes)],
    );
    let load = LoadState {
        engines: BTreeMap::from([
            (
                EngineId::RowStore,
                EngineLoad {
                    cpu: rng.gen_range(0.2..0.5),
                    query_runtime_s_per_hour: rng.gen_range(100.0..600.0),
                    txn_cpu: 0.15,
                    mean_runtime_s: 1.0,
                },
            ),
            (
                EngineId::Warehouse,
                EngineLoad {
                    cpu: rng.gen_range(0.1..0.5),
                    query_runtime_s_per_hour: rng.gen_range(300.0..1500.0),
                    txn_cpu: 0.0,
                    mean_runtime_s: 2.0,
                },
            ),
        ]),
    };
    let slo = SloConfig::new(0.03, rng.gen_range(15.0..60.0), 24.0);
    let cost = crate::scoring::operating_cost(&current, &[], &pricing, &catalog, &[]).expect("priced");
    let metrics = CurrentMetrics { txn_p90_s: 0.01, query_p90_s: 10.0, class_p90_s: BTreeMap::new(), cost_per_hour: cost };
    PlanningInput {
        current,
        window: WorkloadWindow::new(queries, catalog),
        predictions,
        models: reference_models(),
        load,
        pricing,
        slo,
        metrics,
        caps: CapabilityConfig::default(),
    }
}

/// `n` distinct random queries with their true run times on each engine.
/// The fastest engine is a deterministic function of table sizes and
/// predicate selectivity, so the routing labels are separable in feature
/// space.
pub fn separable_routing_workload(n: usize, seed: u64) -> (Vec<LogicalQuery>, Vec<[f64; 3]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog = Arc::new(reference_catalog());
    let truth = reference_truth(catalog);
    let mut queries = Vec::with_capacity(n);
    let mut runtimes = Vec::with_capacity(n);
    let mut seen = BTreeSet::new();
    while queries.len() < n {
        let q = random_query(&mut rng);
        if !seen.insert(q.id.clone()) {
            continue;
        }
        let r = EngineId::ALL.map(|e| truth.runtime(&q, e).expect("catalog covers queries"));
        queries.push(q);
        runtimes.push(r);
    }
    (queries, runtimes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn light_analytics_fit_on_a_small_rowstore() {
        let cat = Arc::new(reference_catalog());
        let gt = reference_truth(cat);
        let mut row = 0.0;
        let mut wh = 0.0;
        for sql in LIGHT_ANALYTICS {
            let q = parse_query(sql).unwrap();
            let r = gt.runtime(&q, EngineId::RowStore).unwrap();
            assert!(r < 6.0, "{sql}: {r}");
            row += r;
            wh += gt.runtime(&q, EngineId::Warehouse).unwrap();
        }
        assert!(row > 5.0 && row < 30.0, "{row}");
        assert!(wh > 5.0, "{wh}");
        for sql in HEAVY_ANALYTICS {
            let q = parse_query(sql).unwrap();
            assert!(gt.runtime(&q, EngineId::Warehouse).unwrap() < gt.runtime(&q, EngineId::RowStore).unwrap());
        }
    }

    #[test]
    fn pricing_is_valid_and_ordered() {
        let p = reference_pricing();
        p.validate().unwrap();
        for e in [EngineId::RowStore, EngineId::Warehouse] {
            let v: Vec<u32> = p.instances(e).iter().map(|i| i.vcpus).collect();
            assert!(v.windows(2).all(|w| w[0] < w[1]));
        }
        reference_catalog().validate().unwrap();
    }

    #[test]
    fn random_instances_are_deterministic() {
        let a = random_planning_instance(10, 3);
        let b = random_planning_instance(10, 3);
        assert_eq!(a.window.queries, b.window.queries);
        assert_eq!(a.predictions, b.predictions);
        assert_eq!(a.window.len(), 10);
    }
}
