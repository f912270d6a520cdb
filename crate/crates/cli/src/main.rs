use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use blueprint_core::blueprint::EngineId;
use blueprint_core::predictor::{fit_provisioning_constants, fit_txn_model, ProvisioningObservation};
use blueprint_core::router::{evaluate_routing, ForestConfig};
use blueprint_core::search::{
    beam_search, enumerate_neighbor_provisionings, exhaustive_plan, naive_greedy, order_queries, per_provisioning,
    plan, random_search, Outcome, SearchError, DEFAULT_BEAM_WIDTH, RANDOM_SAMPLES,
};
use blueprint_core::simulator::reference::{
    planning_instance, reference_catalog, reference_lattice, separable_routing_workload,
};
use blueprint_core::simulator::{
    describe, run_scenario, run_sensitivity, ScenarioConfig, SensitivityGrid, SimError, Simulation,
};
use blueprint_core::workload::parse_workload;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

const SEED_ENV: &str = "BLUEPRINTD_SEED";

#[derive(Debug, Parser)]
#[command(name = "blueprintd", version, about = "Blueprint planner and multi-engine simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay a scenario and write metrics.csv, events.json and summary.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario up to its first trigger and print the chosen blueprint.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
        beam_width: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit model constants from observations in a JSON file.
    Fit {
        #[arg(long, value_enum)]
        model: FitModel,
        /// Provisioning: array of {g, dest_vcpus, runtime}. Txn: array of [utilization, latency].
        #[arg(long)]
        data: PathBuf,
        /// vCPUs the base run times were measured on (provisioning model).
        #[arg(long, default_value_t = 4)]
        base_vcpus: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate forest routing on a synthetic separable workload.
    RouteEval {
        #[arg(long, default_value_t = 1000)]
        queries: usize,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-plan a scenario's first decision under perturbed predictions.
    Sensitivity {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.4,0.8")]
        fractions: Vec<f64>,
        /// Comma list or `lo..hi` range (stepped by --error-step).
        #[arg(long, default_value = "-0.8..0.8", allow_hyphen_values = true)]
        errors: String,
        #[arg(long, default_value_t = 0.2)]
        error_step: f64,
        /// First noise seed; `--seeds` consecutive seeds are used.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare beam search with exhaustive, greedy and random search.
    SearchCompare {
        /// JSON Lines workload over the reference catalog.
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, default_value_t = 12)]
        max_queries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Provisioning lattice radius around the current blueprint.
        #[arg(long, default_value_t = 0)]
        radius: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitModel {
    Provisioning,
    Txn,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(SearchError::NoFeasibleBlueprint) = cause.downcast_ref::<SearchError>() {
            return 3;
        }
        match cause.downcast_ref::<SimError>() {
            Some(SimError::Search(SearchError::NoFeasibleBlueprint)) => return 3,
            Some(SimError::Config(_)) => return 2,
            _ => {}
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
    }
    1
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// `BLUEPRINTD_SEED` wins over the flag when set.
fn effective_seed(flag: Option<u64>) -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| usage(format!("{SEED_ENV} is not an integer: {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    std::io::Write::write_all(&mut tmp, contents.as_bytes())?;
    tmp.persist(path).map_err(|e| e.error).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => write_atomic(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = effective_seed(seed)? {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_errors(spec: &str, step: f64) -> Result<Vec<f64>> {
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: f64 = lo.trim().parse().map_err(|_| usage(format!("bad error range {spec:?}")))?;
        let hi: f64 = hi.trim().parse().map_err(|_| usage(format!("bad error range {spec:?}")))?;
        if !(step > 0.0) || hi < lo {
            return Err(usage("error range needs lo ≤ hi and a positive step"));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as i64;
        // Round to kill accumulated float noise (0.6000000000000001 → 0.6).
        Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect())
    } else {
        spec.split(',')
            .map(|s| s.trim().parse().map_err(|_| usage(format!("bad error value {s:?}"))))
            .collect()
    }
}

#[derive(Serialize)]
struct PlanOutput {
    scenario: String,
    planned_at: f64,
    w: f64,
    kept_current: bool,
    provisionings: BTreeMap<EngineId, String>,
    assignments: BTreeMap<String, EngineId>,
    candidates_scored: usize,
}

#[derive(Serialize)]
struct SearchCompareOutput {
    queries: usize,
    provisionings: usize,
    beam_width: usize,
    random_samples: usize,
    beam_w: f64,
    exhaustive_w: f64,
    naive_greedy_w: Option<f64>,
    random_w: Option<f64>,
    beam_matches_exhaustive: bool,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, out, seed } => {
            let cfg = load_scenario(&scenario, seed)?;
            let output = run_scenario(&cfg)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_atomic(&out.join("metrics.csv"), &output.log.to_csv())?;
            write_atomic(&out.join("events.json"), &(output.log.events_json() + "\n"))?;
            write_atomic(&out.join("summary.json"), &(serde_json::to_string_pretty(&output.summary)? + "\n"))?;
            eprintln!(
                "{}: cost {:.4} -> {:.4} $/h, {} blueprint change(s)",
                output.summary.scenario,
                output.summary.cost_initial,
                output.summary.cost_final,
                output.summary.blueprint_changes
            );
        }
        Command::Plan { scenario, seed, beam_width, out } => {
            let cfg = load_scenario(&scenario, seed)?;
            let mut sim = Simulation::new(&cfg)?;
            let (at, input) = match sim.run(true)? {
                Some(x) => x,
                None => {
                    let end = cfg.duration_s;
                    let input = sim.planning_input(end)?.ok_or_else(|| usage("the scenario issues no queries"))?;
                    (end, input)
                }
            };
            let mut pc = sim.plan_config();
            pc.beam_width = beam_width;
            let report = plan(&input, &sim.lattice(), &pc)?;
            let assignments =
                report.blueprint.routing.assignments.iter().map(|(q, e)| (q.0.clone(), *e)).collect();
            emit(
                &PlanOutput {
                    scenario: cfg.name.clone(),
                    planned_at: at,
                    w: report.w,
                    kept_current: report.kept_current,
                    provisionings: describe(&report.blueprint),
                    assignments,
                    candidates_scored: report.stats.candidates_scored,
                },
                out.as_deref(),
            )?;
        }
        Command::Fit { model, data, base_vcpus, out } => {
            let text = std::fs::read_to_string(&data).with_context(|| format!("reading {}", data.display()))?;
            match model {
                FitModel::Provisioning => {
                    let obs: Vec<ProvisioningObservation> = serde_json::from_str(&text)?;
                    emit(&fit_provisioning_constants(&obs, base_vcpus).map_err(|e| usage(e.to_string()))?, out.as_deref())?;
                }
                FitModel::Txn => {
                    let obs: Vec<(f64, f64)> = serde_json::from_str(&text)?;
                    emit(&fit_txn_model(&obs).map_err(|e| usage(e.to_string()))?, out.as_deref())?;
                }
            }
        }
        Command::RouteEval { queries, train_fraction, seed, out } => {
            let seed = effective_seed(Some(seed))?.unwrap_or(seed);
            if queries < 2 {
                return Err(usage("route-eval needs at least 2 queries"));
            }
            let (qs, runtimes) = separable_routing_workload(queries, seed);
            let report =
                evaluate_routing(&qs, &runtimes, &reference_catalog(), train_fraction, &ForestConfig::default(), seed)
                    .map_err(|e| usage(e.to_string()))?;
            emit(&report, out.as_deref())?;
        }
        Command::Sensitivity { scenario, fractions, errors, error_step, seed, seeds, out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let first = effective_seed(Some(seed))?.unwrap_or(seed);
            let grid = SensitivityGrid {
                fractions,
                errors: parse_errors(&errors, error_step)?,
                seeds: (first..first + seeds.max(1)).collect(),
            };
            emit(&run_sensitivity(&cfg, &grid)?, out.as_deref())?;
        }
        Command::SearchCompare { workload, max_queries, seed, radius, out } => {
            let seed = effective_seed(Some(seed))?.unwrap_or(seed);
            let text = std::fs::read_to_string(&workload).with_context(|| format!("reading {}", workload.display()))?;
            let (mut queries, _) = parse_workload(&text).map_err(|e| usage(e.to_string()))?;
            queries.truncate(max_queries);
            if queries.is_empty() {
                return Err(usage("the workload is empty"));
            }
            let input = planning_instance(queries, seed).map_err(|e| usage(e.to_string()))?;
            let lattice = reference_lattice(&input.pricing, radius);
            let provs = enumerate_neighbor_provisionings(&input.current.provisionings, &lattice);
            let order = order_queries(&input.window, &input.predictions);
            let best = |o: Option<(usize, Outcome)>| o.map(|(_, o)| o.summary.w);
            let (_, exhaustive) = exhaustive_plan(&input, &lattice)?;
            let beam = per_provisioning(&input, &provs, |c| beam_search(c, &order, DEFAULT_BEAM_WIDTH))?
                .ok_or(SearchError::NoFeasibleBlueprint)?
                .1;
            let greedy = best(per_provisioning(&input, &provs, |c| Ok(naive_greedy(c)))?);
            let random = best(per_provisioning(&input, &provs, |c| Ok(random_search(c, RANDOM_SAMPLES, seed)))?);
            emit(
                &SearchCompareOutput {
                    queries: input.window.len(),
                    provisionings: provs.len(),
                    beam_width: DEFAULT_BEAM_WIDTH,
                    random_samples: RANDOM_SAMPLES,
                    beam_w: beam.summary.w,
                    exhaustive_w: exhaustive.summary.w,
                    naive_greedy_w: greedy,
                    random_w: random,
                    beam_matches_exhaustive: beam.summary.w == exhaustive.summary.w,
                },
                out.as_deref(),
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
