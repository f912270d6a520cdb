//! Re-plans the first decision of a scenario under perturbed predictions.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{describe, ScenarioConfig, SimError, Simulation};
use crate::blueprint::{Blueprint, EngineId};
use crate::predictor::{NoiseSpec, PredictorKind};
use crate::search::plan;
use crate::workload::PredictionTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityGrid {
    pub fractions: Vec<f64>,
    pub errors: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SensitivityGrid {
    fn default() -> Self {
        Self {
            fractions: vec![0.1, 0.2, 0.4, 0.8],
            errors: (-4..=4).map(|i| i as f64 * 0.2).collect(),
            seeds: (1..=5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub fraction: f64,
    pub error: f64,
    pub seed: u64,
    pub w: f64,
    /// Same infrastructure and query assignments as the unperturbed plan.
    pub unchanged: bool,
    pub selection: BTreeMap<EngineId, String>,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub scenario: String,
    /// Simulated time of the decision being perturbed.
    pub planned_at: f64,
    pub baseline_w: f64,
    pub baseline_selection: BTreeMap<EngineId, String>,
    pub baseline_fingerprint: u64,
    pub cells: Vec<SensitivityCell>,
}

impl SensitivityReport {
    /// Whether every cell within the given bounds kept the baseline selection.
    pub fn stable_within(&self, max_fraction: f64, max_abs_error: f64) -> bool {
        self.cells
            .iter()
            .filter(|c| c.fraction <= max_fraction + 1e-12 && c.error.abs() <= max_abs_error + 1e-12)
            .all(|c| c.unchanged)
    }
}

/// Runs the scenario with exact predictions up to its first trigger, then
/// re-plans that decision once per grid cell with a noisy oracle.
pub fn run_sensitivity(config: &ScenarioConfig, grid: &SensitivityGrid) -> Result<SensitivityReport, SimError> {
    let mut exact = config.clone();
    exact.predictor = super::PredictorConfig::Oracle;
    let mut sim = Simulation::new(&exact)?;
    let Some((planned_at, input)) = sim.run(true)? else {
        return Err(SimError::Config("the scenario never triggers planning".into()));
    };
    let lattice = sim.lattice();
    let cfg = sim.plan_config();
    let truth = Arc::clone(sim.ground_truth());
    let base = plan(&input, &lattice, &cfg)?;
    let base_fp = base.blueprint.fingerprint();

    let mut cells = Vec::new();
    for &fraction in &grid.fractions {
        for &error in &grid.errors {
            for &seed in &grid.seeds {
                let noise = NoiseSpec::new(fraction, error, seed)?;
                let predictor = PredictorKind::NoisyOracle(truth.clone(), noise);
                let mut noisy = input.clone();
                noisy.predictions = PredictionTable::build(&noisy.window.queries, &predictor)?;
                let (w, bp): (f64, Option<Blueprint>) = match plan(&noisy, &lattice, &cfg) {
                    Ok(r) => (r.w, Some(r.blueprint)),
                    Err(crate::search::SearchError::NoFeasibleBlueprint) => (f64::INFINITY, None),
                    Err(e) => return Err(e.into()),
                };
                let fingerprint = bp.as_ref().map_or(0, Blueprint::fingerprint);
                cells.push(SensitivityCell {
                    fraction,
                    error,
                    seed,
                    w,
                    unchanged: fingerprint == base_fp,
                    selection: bp.as_ref().map(describe).unwrap_or_default(),
                    fingerprint,
                });
            }
        }
    }
    Ok(SensitivityReport {
        scenario: config.name.clone(),
        planned_at,
        baseline_w: base.w,
        baseline_selection: describe(&base.blueprint),
        baseline_fingerprint: base_fp,
        cells,
    })
}
