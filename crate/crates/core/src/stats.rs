//! Tracking statistics over a run.

use num_rational::Rational64;
use num_traits::Signed;
use thiserror::Error;

use crate::engine::MetricsRecord;
use crate::num::Energy;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("no samples to summarise")]
    Empty,
}

/// Half-width of the tolerance band, as a fraction of the goal.
pub const BAND: (i64, i64) = (1, 20);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub samples: usize,
    pub mean: Rational64,
    pub min: Energy,
    pub max: Energy,
    pub mean_goal: Option<Rational64>,
    /// `|mean - mean_goal| / mean_goal`.
    pub relative_error: Option<Rational64>,
    pub in_band: usize,
    /// Share of samples with `|consumption - goal| <= 5% of goal`.
    pub band_fraction: Option<Rational64>,
}

/// Summarises `(consumption, goal)` samples.
pub fn summarize(samples: &[(Energy, Option<Energy>)]) -> Result<Summary, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = samples.len() as i64;
    let total: Energy = samples.iter().map(|s| s.0).sum();
    let mean = Rational64::new(total, n);
    let min = samples.iter().map(|s| s.0).min().unwrap_or(0);
    let max = samples.iter().map(|s| s.0).max().unwrap_or(0);

    let goals: Option<Vec<Energy>> = samples.iter().map(|s| s.1).collect();
    let (mean_goal, relative_error, in_band, band_fraction) = match goals {
        Some(goals) => {
            let mean_goal = Rational64::new(goals.iter().sum(), n);
            let relative_error =
                (mean_goal != Rational64::from(0)).then(|| ((mean - mean_goal) / mean_goal).abs());
            let in_band = samples
                .iter()
                .zip(&goals)
                .filter(|((c, _), &g)| (c - g).abs() * BAND.1 <= g * BAND.0)
                .count();
            (
                Some(mean_goal),
                relative_error,
                in_band,
                Some(Rational64::new(in_band as i64, n)),
            )
        }
        None => (None, None, 0, None),
    };
    Ok(Summary {
        samples: samples.len(),
        mean,
        min,
        max,
        mean_goal,
        relative_error,
        in_band,
        band_fraction,
    })
}

/// Summary of a run. `goal` overrides the per-record goals when given.
pub fn compute_stats(
    records: &[MetricsRecord],
    goal: Option<Energy>,
) -> Result<Summary, StatsError> {
    let samples: Vec<(Energy, Option<Energy>)> = records
        .iter()
        .map(|r| (r.consumption, goal.or(r.goal)))
        .collect();
    summarize(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_on_goal() {
        let s = summarize(&[(1000, Some(1000)); 4]).unwrap();
        assert_eq!(s.relative_error, Some(Rational64::from(0)));
        assert_eq!(s.band_fraction, Some(Rational64::from(1)));
    }

    #[test]
    fn symmetric_misses() {
        let s = summarize(&[(900, Some(1000)), (1100, Some(1000))]).unwrap();
        assert_eq!(s.mean, Rational64::from(1000));
        assert_eq!(s.band_fraction, Some(Rational64::from(0)));
        assert_eq!((s.min, s.max), (900, 1100));
    }

    #[test]
    fn band_edges_are_inclusive() {
        let s = summarize(&[(950, Some(1000)), (1050, Some(1000)), (949, Some(1000))]).unwrap();
        assert_eq!(s.in_band, 2);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(summarize(&[]), Err(StatsError::Empty));
    }

    #[test]
    fn goal_free_samples() {
        let s = summarize(&[(3, None), (5, None)]).unwrap();
        assert_eq!(s.mean, Rational64::from(4));
        assert!(s.relative_error.is_none());
    }
}
