use serde::{Deserialize, Serialize};

use super::PredictError;

/// Upper end of the `M` grid searched by [`fit_txn_model`].
pub const M_GRID_MAX: f64 = 2.0;
/// Grid points per unit of `M` (step 1e-3).
pub const M_GRID_STEP: f64 = 1e-3;
const M_GRID_PER_UNIT: f64 = 1000.0;

/// Amdahl-style scaling constants: `P(G) = (c1·b/d + c2)·G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProvisioningConstants {
    pub c1: f64,
    pub c2: f64,
    /// vCPUs of the provisioning the base run times were measured on.
    pub base_vcpus: u32,
    #[serde(default)]
    pub residual: f64,
}

impl ProvisioningConstants {
    pub fn new(c1: f64, c2: f64, base_vcpus: u32) -> Self {
        Self { c1, c2, base_vcpus, residual: 0.0 }
    }

    /// Run-time multiplier on a provisioning with `d` vCPUs.
    pub fn factor(&self, d: u32) -> f64 {
        self.c1 * (self.base_vcpus as f64 / d.max(1) as f64) + self.c2
    }
}

/// Transaction latency model `R(ρ) = a/(M − ρ) + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxnModelConstants {
    pub a: f64,
    pub b: f64,
    pub m: f64,
    #[serde(default)]
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProvisioningObservation {
    /// Base run time.
    pub g: f64,
    pub dest_vcpus: u32,
    /// Measured run time on the destination provisioning.
    pub runtime: f64,
}

/// Least squares over `R = c1·(b/d)·G + c2·G` via the 2×2 normal equations.
pub fn fit_provisioning_constants(
    obs: &[ProvisioningObservation],
    base_vcpus: u32,
) -> Result<ProvisioningConstants, PredictError> {
    let mut ds: Vec<u32> = obs.iter().map(|o| o.dest_vcpus).collect();
    ds.sort_unstable();
    ds.dedup();
    if ds.len() < 2 {
        return Err(PredictError::DegenerateDesign("need observations at two or more vCPU counts".into()));
    }
    if ds[0] == 0 || base_vcpus == 0 {
        return Err(PredictError::DegenerateDesign("vCPU counts must be positive".into()));
    }
    let b = base_vcpus as f64;
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for o in obs {
        let x1 = b / o.dest_vcpus as f64 * o.g;
        let x2 = o.g;
        s11 += x1 * x1;
        s12 += x1 * x2;
        s22 += x2 * x2;
        r1 += x1 * o.runtime;
        r2 += x2 * o.runtime;
    }
    let det = s11 * s22 - s12 * s12;
    if !(det.abs() > 1e-12 * s11 * s22) {
        return Err(PredictError::DegenerateDesign("singular normal equations".into()));
    }
    let c1 = (r1 * s22 - r2 * s12) / det;
    let c2 = (s11 * r2 - s12 * r1) / det;
    let mut consts = ProvisioningConstants::new(c1, c2, base_vcpus);
    consts.residual = obs
        .iter()
        .map(|o| {
            let e = o.runtime - consts.factor(o.dest_vcpus) * o.g;
            e * e
        })
        .sum();
    Ok(consts)
}

/// Grid search over `M` with a closed-form `(a, b)` at each grid point.
/// `a` is constrained to be nonnegative; a flat latency profile fits `a = 0`.
pub fn fit_txn_model(obs: &[(f64, f64)]) -> Result<TxnModelConstants, PredictError> {
    if obs.iter().any(|(r, l)| !r.is_finite() || !l.is_finite() || *r < 0.0 || *r >= 1.0) {
        return Err(PredictError::DegenerateDesign("utilizations must lie in [0, 1)".into()));
    }
    let mut rhos: Vec<f64> = obs.iter().map(|o| o.0).collect();
    rhos.sort_by(f64::total_cmp);
    rhos.dedup();
    if rhos.len() < 3 {
        return Err(PredictError::DegenerateDesign("need three or more distinct utilizations".into()));
    }
    let max_rho = *rhos.last().expect("nonempty");
    let n = obs.len() as f64;
    let y_mean = obs.iter().map(|o| o.1).sum::<f64>() / n;
    let steps = (M_GRID_MAX * M_GRID_PER_UNIT).round() as u64;
    let mut k = (max_rho * M_GRID_PER_UNIT).floor() as u64;
    let mut best: Option<TxnModelConstants> = None;
    while k <= steps {
        let m = k as f64 / M_GRID_PER_UNIT;
        k += 1;
        if m <= max_rho {
            continue;
        }
        let xs: Vec<f64> = obs.iter().map(|o| 1.0 / (m - o.0)).collect();
        let x_mean = xs.iter().sum::<f64>() / n;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (x, o) in xs.iter().zip(obs) {
            sxx += (x - x_mean) * (x - x_mean);
            sxy += (x - x_mean) * (o.1 - y_mean);
        }
        let (a, b) = if sxx > 0.0 && sxy > 0.0 { (sxy / sxx, y_mean - sxy / sxx * x_mean) } else { (0.0, y_mean) };
        let rss: f64 = xs.iter().zip(obs).map(|(x, o)| (o.1 - a * x - b).powi(2)).sum();
        if best.as_ref().map_or(true, |c| rss < c.residual) {
            best = Some(TxnModelConstants { a, b, m, residual: rss });
        }
    }
    best.ok_or_else(|| PredictError::DegenerateDesign("no grid point above max utilization".into()))
}
