//! End-to-end acceptance checks, run without the libtest harness so the
//! report is always printed. Each criterion prints one PASS/FAIL line; the
//! process exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use blueprint_core::blueprint::{ChangeKind, EngineId, Provisioning, ProvisioningChange, TableMove, TransitionPlan};
use blueprint_core::comparator::{compare, penalty, scalarize, CurrentMetrics, SloConfig};
use blueprint_core::predictor::{
    fit_provisioning_constants, fit_txn_model, predict_runtime, q_error, PredictorKind, ProvisioningConstants,
    ProvisioningObservation, TxnModelConstants,
};
use blueprint_core::query::parse_query;
use blueprint_core::router::{evaluate_routing, ForestConfig};
use blueprint_core::scoring::{
    adjust_for_provisioning, adjust_utilization, queueing_delay, transition_time_cost, txn_latency, VectorScore, MB,
};
use blueprint_core::search::{
    beam_search, enumerate_neighbor_provisionings, exhaustive_plan, naive_greedy, order_queries, per_provisioning,
    random_search, DEFAULT_BEAM_WIDTH, RANDOM_SAMPLES,
};
use blueprint_core::simulator::reference::{
    random_planning_instance, random_query, reference_catalog, reference_lattice, reference_pricing,
    separable_routing_workload,
};
use blueprint_core::simulator::{run_scenario, run_sensitivity, Event, ScenarioConfig, SensitivityGrid, Simulation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&scenarios_dir().join(format!("{name}.json"))).unwrap()
}

fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    if want == 0.0 {
        got.abs() <= tol
    } else {
        ((got - want) / want).abs() <= tol
    }
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    if took <= limit {
        Ok(took)
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

/// Collects failed sub-checks so one criterion reports all its problems.
#[derive(Default)]
struct Failures(Vec<String>);

impl Failures {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.0.push(what.into());
        }
    }

    fn close(&mut self, what: &str, got: f64, want: f64) {
        self.check(rel_close(got, want, 1e-9), format!("{what}: got {got}, want {want}"));
    }

    fn finish(self, detail: String) -> Check {
        if self.0.is_empty() {
            Ok(detail)
        } else {
            Err(self.0.join("; "))
        }
    }
}

fn score(cost: f64, t_t: f64) -> VectorScore {
    VectorScore {
        query_latencies: vec![1.0],
        txn_latency: 0.0,
        operating_cost: cost,
        transition_time: t_t,
        transition_cost: 0.0,
        query_p90: 1.0,
        class_p90: BTreeMap::new(),
    }
}

fn closed_form_models() -> Check {
    let start = Instant::now();
    let mut f = Failures::default();

    // Queueing: −K/(1−ρ)·ln((1−q)/ρ).
    f.close("queueing(0.9, 1, 0.9)", queueing_delay(0.9, 1.0, 0.9).unwrap(), 10.0 * 9f64.ln());
    f.close("queueing(0.5, 2, 0.9)", queueing_delay(0.5, 2.0, 0.9).unwrap(), -4.0 * 0.2f64.ln());
    f.close("queueing at ρ = 1 − q", queueing_delay(0.1, 3.0, 0.9).unwrap(), 0.0);

    // Provisioning: (0.9·4/8 + 0.1)·10.
    let k = ProvisioningConstants::new(0.9, 0.1, 4);
    f.close("adjust_for_provisioning", adjust_for_provisioning(10.0, &k, 8), 5.5);

    // Txn: 1/(1 − 0.5) + 0.005.
    let t = TxnModelConstants { a: 1.0, b: 0.005, m: 1.0, residual: 0.0 };
    f.close("txn_latency", txn_latency(0.5, &t).unwrap(), 2.005);

    // Utilization rescaling.
    f.close("adjust_utilization", adjust_utilization(0.4, 20.0, 10.0, 0.001), 0.8);
    f.close("adjust_utilization fallback", adjust_utilization(0.0, 300.0, 0.0, 0.001), 0.3);

    // Penalty.
    let slo = SloConfig::new(1.0, 1.0, 1.0);
    let m = |txn: f64, q: f64, c: f64| CurrentMetrics { txn_p90_s: txn, query_p90_s: q, class_p90_s: BTreeMap::new(), cost_per_hour: c };
    f.close("penalty idle", penalty(&m(0.0, 0.0, 0.0), &slo), 1.0);
    f.close("penalty at SLO", penalty(&m(1.0, 0.0, 0.0), &slo), 2.0);
    f.close("penalty worst ratio", penalty(&m(0.5, 1.5, 0.0), &slo), 2.5);

    // Scalarization: P^γ·C0·T_T + C_T + C·T_B.
    let slo_q = SloConfig::new(1.0, 10.0, 1.0);
    f.close("scalarize unit", scalarize(&score(1.0, 0.0), &m(0.0, 0.0, 1.0), &slo_q), 1.0);
    let mut slo_b = SloConfig::new(1.0, 10.0, 10.0);
    slo_b.gamma = 2.0;
    // P = 1 + max(0, 10/10) = 2.
    let w = scalarize(&score(1.0, 1800.0), &m(0.0, 10.0, 2.0), &slo_b);
    f.close("scalarize with transition", w, 2f64.powi(2) * 2.0 * 0.5 + 10.0);

    // Tie on W is broken by the shorter transition.
    let (a, b) = (score(0.0, 100.0), score(0.0, 200.0));
    let idle = m(0.0, 0.0, 0.0);
    f.check(
        compare((&a, 1), (&b, 0), &idle, &slo_q) == std::cmp::Ordering::Less,
        "compare: equal W should prefer the shorter transition",
    );

    let took = within(Duration::from_secs(1), start)?;
    f.finish(format!("13 closed forms in {took:.2?}"))
}

fn fit_recovery() -> Check {
    let start = Instant::now();
    let mut f = Failures::default();

    let (c1, c2, base) = (0.85, 0.15, 4);
    let mut obs = Vec::new();
    for g in [0.5, 2.0, 7.5, 30.0] {
        for d in [2, 4, 8, 16, 32] {
            obs.push(ProvisioningObservation { g, dest_vcpus: d, runtime: (c1 * base as f64 / d as f64 + c2) * g });
        }
    }
    let k = fit_provisioning_constants(&obs, base).map_err(|e| e.to_string())?;
    f.check(rel_close(k.c1, c1, 1e-9), format!("c1 {} vs {c1}", k.c1));
    f.check(rel_close(k.c2, c2, 1e-9), format!("c2 {} vs {c2}", k.c2));

    let (a, b, m) = (0.002, 0.004, 1.05);
    let txn: Vec<(f64, f64)> = (0..19).map(|i| i as f64 * 0.05).map(|r| (r, a / (m - r) + b)).collect();
    let t = fit_txn_model(&txn).map_err(|e| e.to_string())?;
    for (name, got, want) in [("a", t.a, a), ("b", t.b, b), ("M", t.m, m)] {
        f.check(rel_close(got, want, 1e-2), format!("txn {name} {got} vs {want}"));
    }

    let took = within(Duration::from_secs(5), start)?;
    f.finish(format!("c1={:.12} c2={:.12} a={:.5} b={:.5} M={:.3} in {took:.2?}", k.c1, k.c2, t.a, t.b, t.m))
}

struct SearchRow {
    beam: f64,
    exhaustive: f64,
    greedy: f64,
    random: f64,
}

/// Runs each search strategy over at least 20 feasible random instances.
fn search_rows() -> Result<(Vec<SearchRow>, Duration), String> {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut seed = 0u64;
    while rows.len() < 20 && seed < 200 {
        let n = 8 + (seed % 5) as usize;
        let input = random_planning_instance(n, seed);
        seed += 1;
        let lattice = reference_lattice(&input.pricing, 0);
        let Ok((_, exact)) = exhaustive_plan(&input, &lattice) else { continue };
        let provs = enumerate_neighbor_provisionings(&input.current.provisionings, &lattice);
        let order = order_queries(&input.window, &input.predictions);
        let w = |o: Option<(usize, blueprint_core::search::Outcome)>| o.map_or(f64::INFINITY, |(_, o)| o.summary.w);
        let beam = w(per_provisioning(&input, &provs, |c| beam_search(c, &order, DEFAULT_BEAM_WIDTH)).map_err(|e| e.to_string())?);
        let greedy = w(per_provisioning(&input, &provs, |c| Ok(naive_greedy(c))).map_err(|e| e.to_string())?);
        let random = w(per_provisioning(&input, &provs, |c| Ok(random_search(c, RANDOM_SAMPLES, seed))).map_err(|e| e.to_string())?);
        rows.push(SearchRow { beam, exhaustive: exact.summary.w, greedy, random });
    }
    if rows.len() < 20 {
        return Err(format!("only {} feasible instances", rows.len()));
    }
    Ok((rows, start.elapsed()))
}

fn beam_vs_exhaustive(rows: &[SearchRow], took: Duration) -> Check {
    let exact = rows.iter().filter(|r| r.beam == r.exhaustive).count();
    let worst = rows.iter().map(|r| r.beam / r.exhaustive - 1.0).fold(0.0, f64::max);
    let share = exact as f64 / rows.len() as f64;
    let detail = format!("{exact}/{} exact, worst gap {:.3}%, {took:.2?}", rows.len(), worst * 100.0);
    if share >= 0.95 && worst <= 0.05 && took <= Duration::from_secs(300) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn baseline_dominance(rows: &[SearchRow]) -> Check {
    let bad: Vec<usize> =
        (0..rows.len()).filter(|i| !(rows[*i].beam <= rows[*i].greedy && rows[*i].beam <= rows[*i].random)).collect();
    let gain = |f: fn(&SearchRow) -> f64| {
        let finite: Vec<f64> = rows.iter().filter(|r| f(r).is_finite()).map(|r| f(r) / r.beam).collect();
        finite.iter().sum::<f64>() / finite.len().max(1) as f64
    };
    let detail = format!(
        "{} instances; mean greedy/beam {:.3}, random/beam {:.3}",
        rows.len(),
        gain(|r| r.greedy),
        gain(|r| r.random)
    );
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("beam worse on instances {bad:?}; {detail}"))
    }
}

fn scale_down_replay() -> Check {
    let start = Instant::now();
    let out = run_scenario(&scenario("scale_down")).map_err(|e| e.to_string())?;
    let s = &out.summary;
    let mut f = Failures::default();
    let wh = &s.final_provisionings[&EngineId::Warehouse];
    f.check(wh == "Warehouse(paused)", format!("warehouse ends as {wh}"));
    f.check(s.cost_final <= 0.5 * s.cost_initial, format!("cost {:.4} -> {:.4}", s.cost_initial, s.cost_final));
    let post = s.post_transition_slo_compliance.unwrap_or(0.0);
    f.check(post >= 0.95, format!("post-transition compliance {post:.3}"));
    let took = within(Duration::from_secs(120), start)?;
    f.finish(format!(
        "cost {:.4} -> {:.4} $/h ({:.1}x), compliance {post:.3}, {took:.2?}",
        s.cost_initial,
        s.cost_final,
        s.cost_initial / s.cost_final
    ))
}

fn rowstore_vcpus(desc: &str, pricing: &blueprint_core::scoring::PricingCatalog) -> Option<u32> {
    let inner = desc.strip_prefix("RowStore(")?.strip_suffix(')')?;
    let (n, ty) = inner.split_once(" x ")?;
    Some(n.parse::<u32>().ok()? * pricing.instance(EngineId::RowStore, ty).ok()?.vcpus)
}

fn txn_scale_up_replay() -> Check {
    let cfg = scenario("txn_scale_up");
    let out = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let pricing = reference_pricing();
    let step = cfg.phases[1].start_s;
    let init = &cfg.initial.provisionings[&EngineId::RowStore];
    let before = init.node_count * pricing.instance(EngineId::RowStore, &init.instance_type).map_err(|e| e.to_string())?.vcpus;

    let mut transition = None;
    let mut change = None;
    for e in &out.log.events {
        match e {
            Event::TransitionStarted { t, duration_s, .. } if *t >= step && transition.is_none() => {
                transition = Some(*duration_s)
            }
            Event::BlueprintChanged { t, provisionings, .. } if *t > step && change.is_none() => {
                change = Some((*t, provisionings[&EngineId::RowStore].clone()))
            }
            _ => {}
        }
    }
    let (changed_at, desc) = change.ok_or("no blueprint change after the step-up")?;
    let after = rowstore_vcpus(&desc, &pricing).ok_or(format!("unparsable provisioning {desc}"))?;
    let t_t = transition.unwrap_or(0.0);
    let deadline = step + cfg.planning.window_s + t_t;
    let recovered = out.log.records.iter().find(|r| r.t > changed_at && r.txn_p90_s <= cfg.slo.txn_p90_s).map(|r| r.t);
    let detail = format!(
        "RowStore {before} -> {after} vCPUs at {changed_at} s; txn p90 back under SLO at {} s (deadline {deadline} s)",
        recovered.map_or("never".into(), |t| t.to_string())
    );
    if after > before && recovered.is_some_and(|t| t <= deadline) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sensitivity_harness() -> Check {
    let start = Instant::now();
    let cfg = scenario("scale_down");
    let grid = SensitivityGrid::default();
    let a = run_sensitivity(&cfg, &grid).map_err(|e| e.to_string())?;
    let b = run_sensitivity(&cfg, &grid).map_err(|e| e.to_string())?;
    let mut f = Failures::default();
    f.check(grid.seeds.len() >= 5, "fewer than 5 seeds");
    f.check(a.stable_within(0.4, 0.4), "selection changed within fraction ≤ 0.4, |error| ≤ 0.4");
    let ja = serde_json::to_string(&a).unwrap();
    f.check(ja == serde_json::to_string(&b).unwrap(), "report differs between runs");
    let unchanged = a.cells.iter().filter(|c| c.unchanged).count();
    let took = within(Duration::from_secs(300), start)?;
    f.finish(format!(
        "{} cells ({unchanged} unchanged), planned at {} s, {took:.2?} for two runs",
        a.cells.len(),
        a.planned_at
    ))
}

fn router_quality() -> Check {
    let (qs, rt) = separable_routing_workload(1000, 1);
    let cfg = ForestConfig::default();
    let e = evaluate_routing(&qs, &rt, &reference_catalog(), 0.5, &cfg, 1).map_err(|e| e.to_string())?;
    let mut f = Failures::default();
    f.check(e.forest_slowdown <= 1.5, format!("forest slowdown {}", e.forest_slowdown));
    f.check(e.forest_slowdown < e.random_slowdown, "not better than random");
    for (engine, s) in &e.single_engine_slowdown {
        f.check(e.forest_slowdown < *s, format!("not better than all-{engine}"));
    }
    f.check(e.max_nodes_touched <= e.node_bound, format!("{} nodes > {}", e.max_nodes_touched, e.node_bound));
    let singles: Vec<String> = e.single_engine_slowdown.iter().map(|(k, v)| format!("{k} {v:.2}")).collect();
    f.finish(format!(
        "forest {:.4}x, random {:.2}x, {}; ≤ {} of {} nodes",
        e.forest_slowdown,
        e.random_slowdown,
        singles.join(", "),
        e.max_nodes_touched,
        e.node_bound
    ))
}

fn oracle_consistency() -> Check {
    let mut checked = 0usize;
    let mut worst = 1.0f64;
    for name in ["scale_down", "txn_scale_up", "flat"] {
        let cfg = scenario(name);
        let sim = Simulation::new(&cfg).map_err(|e| e.to_string())?;
        let truth = Arc::clone(sim.ground_truth());
        let oracle = PredictorKind::Oracle(Arc::clone(&truth));
        let mut queries: Vec<_> = Vec::new();
        for phase in cfg.resolve().map_err(|e| e.to_string())?.phases {
            for r in phase.records {
                queries.push(parse_query(&r.sql).map_err(|e| e.to_string())?);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        queries.extend((0..200).map(|_| random_query(&mut rng)));
        for q in &queries {
            for e in EngineId::ALL {
                let p = predict_runtime(q, e, &oracle).map_err(|e| e.to_string())?.seconds;
                let t = truth.runtime(q, e).map_err(|e| e.to_string())?;
                worst = worst.max(q_error(p, t).map_err(|e| e.to_string())?);
                checked += 1;
            }
        }
    }
    let detail = format!("{checked} (query, engine) pairs, max q-error {worst}");
    if worst == 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Runs the binary and returns the bytes of every output it produced.
fn run_cli(args: &[&str], out: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_blueprintd"))
        .args(args)
        .env_remove("BLUEPRINTD_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?} exited {}: {}", o.status, String::from_utf8_lossy(&o.stderr)));
    }
    let mut files = vec![("stdout".to_string(), o.stdout)];
    if out.is_dir() {
        let mut names: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            files.push((p.display().to_string(), std::fs::read(&p).unwrap()));
        }
    } else if out.exists() {
        files.push((out.display().to_string(), std::fs::read(out).unwrap()));
    }
    Ok(files)
}

fn cli_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scen = |n: &str| scenarios_dir().join(format!("{n}.json")).display().to_string();
    let data = dir.path().join("txn.json");
    std::fs::write(&data, "[[0.1,0.0062],[0.3,0.0069],[0.5,0.008],[0.7,0.0105],[0.9,0.02]]").unwrap();
    let workload = scenarios_dir().join("dashboard_12.jsonl").display().to_string();
    let data = data.display().to_string();

    let commands: Vec<(&str, Vec<String>)> = vec![
        ("simulate", vec!["simulate".into(), "--scenario".into(), scen("scale_down"), "--seed".into(), "3".into()]),
        ("simulate-txn", vec!["simulate".into(), "--scenario".into(), scen("txn_scale_up"), "--seed".into(), "3".into()]),
        ("plan", vec!["plan".into(), "--scenario".into(), scen("scale_down"), "--seed".into(), "3".into()]),
        ("fit", vec!["fit".into(), "--model".into(), "txn".into(), "--data".into(), data]),
        ("route-eval", vec!["route-eval".into(), "--queries".into(), "300".into(), "--seed".into(), "3".into()]),
        (
            "sensitivity",
            vec![
                "sensitivity".into(),
                "--scenario".into(),
                scen("scale_down"),
                "--fractions".into(),
                "0.2,0.8".into(),
                "--errors".into(),
                "-0.4,0.4".into(),
                "--seeds".into(),
                "2".into(),
            ],
        ),
        ("search-compare", vec!["search-compare".into(), "--workload".into(), workload, "--max-queries".into(), "8".into()]),
    ];
    let mut f = Failures::default();
    for (name, args) in &commands {
        let mut runs = Vec::new();
        for i in 0..2 {
            let out = dir.path().join(format!("{name}-{i}"));
            let mut a: Vec<String> = args.clone();
            a.push("--out".into());
            a.push(out.display().to_string());
            let refs: Vec<&str> = a.iter().map(String::as_str).collect();
            let files = run_cli(&refs, &out)?;
            runs.push(files.into_iter().map(|(p, b)| (p.replace(&format!("-{i}"), ""), b)).collect::<Vec<_>>());
        }
        f.check(runs[0].len() > 1, format!("{name}: produced no output file"));
        f.check(runs[0] == runs[1], format!("{name}: outputs differ"));
    }
    f.finish(format!("{} commands, byte-identical across two runs", commands.len()))
}

fn transition_arithmetic() -> Check {
    let pricing = reference_pricing();
    let mut f = Failures::default();
    f.close("classic resize of 18,000 MB", pricing.change_duration(ChangeKind::ClassicResize, 18_000.0 * MB), 1000.0);
    f.close("instance change", pricing.change_duration(ChangeKind::InstanceChange, 0.0), 300.0);
    f.close("elastic resize", pricing.change_duration(ChangeKind::ElasticResize, 0.0), 900.0);
    f.close("pause", pricing.change_duration(ChangeKind::Pause, 1e12), 0.0);

    let gib = 1u64 << 30;
    let mv = |t: &str, s, d| TableMove { table: t.into(), source: s, dest: d, bytes: gib };
    let mut even = pricing.clone();
    for e in EngineId::ALL {
        even.export_rate_bps.insert(e, 100.0 * MB);
        even.import_rate_bps.insert(e, 100.0 * MB);
    }
    f.close("1 GiB at 100 MB/s each way", even.move_duration(&mv("title", EngineId::RowStore, EngineId::Warehouse)).unwrap(), 20.48);
    // Reference rates: RowStore exports at 40 MB/s, the Warehouse imports at 60 MB/s.
    let row_to_wh = 1024.0 / 40.0 + 1024.0 / 60.0;
    f.close("reference RowStore -> Warehouse", pricing.move_duration(&mv("title", EngineId::RowStore, EngineId::Warehouse)).unwrap(), row_to_wh);

    let (t, c) = transition_time_cost(&TransitionPlan::default(), &pricing, 0.0).unwrap();
    f.close("empty plan time", t, 0.0);
    f.close("empty plan cost", c, 0.0);

    // Two moves into the Warehouse plus a classic resize run serially there;
    // the RowStore change runs in parallel.
    let wh_old = Provisioning::new(EngineId::Warehouse, "ra3.xlplus", 2, 4);
    let wh_new = Provisioning::new(EngineId::Warehouse, "ra3.4xlarge", 2, 12);
    let rs_old = Provisioning::new(EngineId::RowStore, "db.r6g.xlarge", 1, 4);
    let rs_new = Provisioning::new(EngineId::RowStore, "db.r6g.2xlarge", 1, 8);
    let plan = TransitionPlan {
        table_moves: vec![mv("title", EngineId::RowStore, EngineId::Warehouse), mv("cast_info", EngineId::RowStore, EngineId::Warehouse)],
        provisioning_changes: vec![
            ProvisioningChange { engine: EngineId::Warehouse, old: wh_old, new: wh_new, kind: ChangeKind::ClassicResize },
            ProvisioningChange { engine: EngineId::RowStore, old: rs_old, new: rs_new, kind: ChangeKind::InstanceChange },
        ],
    };
    let mut priced = pricing.clone();
    priced.transfer_price_per_tb = 10.0;
    let (t, c) = transition_time_cost(&plan, &priced, 18_000.0 * MB).unwrap();
    f.close("serial warehouse time", t, 2.0 * row_to_wh + 1000.0);
    f.close("transfer cost", c, 2.0 / 1024.0 * 10.0);
    f.finish(format!("classic resize 1000 s, 1 GiB move 20.48 s, composite plan {t:.4} s"))
}

fn main() {
    let (rows, search_time) = match search_rows() {
        Ok(x) => (x.0, x.1),
        Err(e) => (Vec::new(), {
            eprintln!("search instances: {e}");
            Duration::ZERO
        }),
    };
    let results: Vec<(&str, Check)> = vec![
        ("1 closed-form models", closed_form_models()),
        ("2 fit recovery", fit_recovery()),
        (
            "3 beam vs exhaustive",
            if rows.is_empty() { Err("no instances".into()) } else { beam_vs_exhaustive(&rows, search_time) },
        ),
        ("4 baseline dominance", if rows.is_empty() { Err("no instances".into()) } else { baseline_dominance(&rows) }),
        ("5 scale-down replay", scale_down_replay()),
        ("6 txn scale-up replay", txn_scale_up_replay()),
        ("7 sensitivity", sensitivity_harness()),
        ("8 router quality", router_quality()),
        ("9 oracle consistency", oracle_consistency()),
        ("10 CLI determinism", cli_determinism()),
        ("11 transition arithmetic", transition_arithmetic()),
    ];
    let mut failed = Vec::new();
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                println!("FAIL {name}: {d}");
                failed.push(*name);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed: {failed:?}");
        std::process::exit(1);
    }
}
