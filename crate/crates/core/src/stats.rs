//! Small numeric helpers shared by scoring and the simulator.

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("percentile of an empty sample")]
pub struct EmptySamples;

/// Nearest-rank percentile of weighted samples: the smallest value whose
/// cumulative weight reaches `p` of the total. Zero-weight samples never win.
pub fn weighted_percentile(samples: &mut [(f64, f64)], p: f64) -> Result<f64, EmptySamples> {
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = samples.iter().map(|s| s.1.max(0.0)).sum();
    if samples.is_empty() {
        return Err(EmptySamples);
    }
    if total <= 0.0 {
        // Degenerate weights: plain nearest rank.
        let n = samples.len();
        let rank = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        return Ok(samples[rank - 1].0);
    }
    let target = p.clamp(0.0, 1.0) * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for &(v, w) in samples.iter() {
        if w <= 0.0 {
            continue;
        }
        cum += w;
        if cum >= target {
            return Ok(v);
        }
    }
    Ok(samples.iter().rev().find(|s| s.1 > 0.0).map_or(samples[samples.len() - 1].0, |s| s.0))
}

/// Unweighted nearest-rank percentile.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, EmptySamples> {
    let mut s: Vec<(f64, f64)> = values.iter().map(|v| (*v, 1.0)).collect();
    weighted_percentile(&mut s, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.9).unwrap(), 90.0);
        assert_eq!(percentile(&v, 1.0).unwrap(), 100.0);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(percentile(&[4.2], 0.37).unwrap(), 4.2);
        assert_eq!(percentile(&[3.0; 7], 0.9).unwrap(), 3.0);
        assert_eq!(percentile(&[], 0.5), Err(EmptySamples));
    }

    #[test]
    fn weights_shift_the_rank() {
        let mut s = vec![(1.0, 9.0), (10.0, 1.0)];
        assert_eq!(weighted_percentile(&mut s, 0.9).unwrap(), 1.0);
        let mut s = vec![(1.0, 8.0), (10.0, 2.0)];
        assert_eq!(weighted_percentile(&mut s, 0.9).unwrap(), 10.0);
    }
}
