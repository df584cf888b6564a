//! Post-hoc reconstruction of the full horizon from a collected profile.

pub mod gpr;
pub mod lstm;

pub use gpr::{gpr_fit, gpr_predict, GprModel, GprParams};
pub use lstm::{train_estimator, EstimatorConfig, EstimatorReport, LstmEstimator};

use crate::error::{Error, Result};

/// Observations interleaved with the predictor's bridging values.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectedProfile {
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
    pub history: Vec<f64>,
    /// Hour of day of `values[0]`.
    pub hour_of_day_offset: u32,
}

impl CollectedProfile {
    pub fn observations(&self) -> Vec<(usize, f64)> {
        self.observed
            .iter()
            .zip(&self.values)
            .enumerate()
            .filter(|(_, (&o, _))| o)
            .map(|(t, (_, &v))| (t, v))
            .collect()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn hour_at(&self, t: usize) -> u32 {
        ((self.hour_of_day_offset as usize + t) % 24) as u32
    }
}

/// Merge observations and bridging segments `(start, values)` into a profile
/// over `0..horizon`. Every index must be covered exactly once.
pub fn assemble_profile(
    observations: &[(usize, f64)],
    bridging: &[(usize, Vec<f64>)],
    history: &[f64],
    horizon: usize,
    hour_of_day_offset: u32,
) -> Result<CollectedProfile> {
    let mut values = vec![f64::NAN; horizon];
    let mut observed = vec![false; horizon];
    let mut filled = vec![false; horizon];
    let mut last = None;
    for &(t, v) in observations {
        if t >= horizon || last.is_some_and(|p| t <= p) {
            return Err(Error::Assembly(format!(
                "observation times must be strictly increasing within 0..{horizon}; got {t}"
            )));
        }
        if !v.is_finite() {
            return Err(Error::Assembly(format!("observation at {t} is {v}")));
        }
        last = Some(t);
        values[t] = v;
        observed[t] = true;
        filled[t] = true;
    }
    for (start, seg) in bridging {
        for (i, &v) in seg.iter().enumerate() {
            let t = start + i;
            if t >= horizon || filled[t] {
                return Err(Error::Assembly(format!("index {t} is covered twice or out of range")));
            }
            if !v.is_finite() {
                return Err(Error::Assembly(format!("bridging value at {t} is {v}")));
            }
            values[t] = v;
            filled[t] = true;
        }
    }
    if let Some(t) = filled.iter().position(|f| !f) {
        return Err(Error::Assembly(format!("index {t} is neither observed nor predicted")));
    }
    Ok(CollectedProfile {
        values,
        observed,
        history: history.to_vec(),
        hour_of_day_offset,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    /// The profile itself is the estimate.
    None,
    Lstm(LstmEstimator),
    Gpr(GprParams),
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::None => "none",
            Estimator::Lstm(_) => "lstm",
            Estimator::Gpr(_) => "gpr",
        }
    }

    pub fn estimate(&self, profile: &CollectedProfile) -> Result<Vec<f64>> {
        match self {
            Estimator::None => Ok(profile.values.clone()),
            Estimator::Lstm(e) => e.estimate(profile),
            Estimator::Gpr(params) => {
                let m = gpr_fit(&profile.observations(), params)?;
                let times: Vec<usize> = (0..profile.values.len()).collect();
                Ok(gpr_predict(&m, &times))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> Vec<f64> {
        (0..168).map(|t| (t as f64 * 0.1).sin()).collect()
    }

    #[test]
    fn all_observed_profile_is_ground_truth() {
        let gt = truth();
        let obs: Vec<_> = gt.iter().copied().enumerate().collect();
        let p = assemble_profile(&obs, &[], &[0.0; 48], 168, 0).unwrap();
        assert_eq!(p.values, gt);
        assert!(p.observed.iter().all(|&o| o));
    }

    #[test]
    fn no_observations_is_pure_prediction() {
        let pred = vec![0.25; 168];
        let p = assemble_profile(&[], &[(0, pred.clone())], &[0.0; 48], 168, 0).unwrap();
        assert_eq!(p.values, pred);
        assert_eq!(p.observed_count(), 0);
    }

    #[test]
    fn uniform_observation_mask() {
        let gt = truth();
        let obs: Vec<_> = (0..28).map(|i| (6 * i, gt[6 * i])).collect();
        let bridges: Vec<_> = (0..28).map(|i| (6 * i + 1, vec![0.0; 5])).collect();
        let p = assemble_profile(&obs, &bridges, &[0.0; 48], 168, 0).unwrap();
        let marked: Vec<usize> = (0..168).filter(|&t| p.observed[t]).collect();
        assert_eq!(marked, (0..28).map(|i| 6 * i).collect::<Vec<_>>());
        for &(t, v) in &obs {
            assert_eq!(p.values[t].to_bits(), v.to_bits());
        }
    }

    #[test]
    fn gaps_and_overlaps_are_rejected() {
        let gap = assemble_profile(&[(0, 1.0)], &[(1, vec![0.0; 100])], &[], 168, 0);
        assert!(matches!(gap, Err(Error::Assembly(_))));
        let overlap = assemble_profile(&[(0, 1.0)], &[(0, vec![0.0; 168])], &[], 168, 0);
        assert!(matches!(overlap, Err(Error::Assembly(_))));
        let unordered = assemble_profile(&[(5, 1.0), (3, 1.0)], &[], &[], 168, 0);
        assert!(matches!(unordered, Err(Error::Assembly(_))));
    }
}
