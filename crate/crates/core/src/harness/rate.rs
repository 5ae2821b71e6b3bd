use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::stats::{fit_line, mean_and_se};

use super::{HarnessError, RegretTrace};

pub const MIN_RATE_POINTS: usize = 4;

/// Across-seed mean and standard error of `R(t)/t` at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub t: u64,
    pub mean: f64,
    /// Absent for a single seed.
    pub se: Option<f64>,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretAggregate {
    pub config_hash: String,
    pub points: Vec<AggregatePoint>,
}

impl RegretAggregate {
    /// Checkpoints with `min_t <= t <= max_t`.
    pub fn window(&self, min_t: u64, max_t: u64) -> Vec<AggregatePoint> {
        self.points.iter().copied().filter(|p| p.t >= min_t && p.t <= max_t).collect()
    }

    pub fn at(&self, t: u64) -> Option<&AggregatePoint> {
        self.points.iter().find(|p| p.t == t)
    }
}

/// Mean and SE of `R/T` per checkpoint across traces of one config. A
/// checkpoint averages over the traces that reached it.
pub fn aggregate_regret(traces: &[RegretTrace]) -> Result<RegretAggregate, HarnessError> {
    let first = traces.first().ok_or(HarnessError::NoTraces)?;
    let mut by_t: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for tr in traces {
        if tr.config_hash != first.config_hash {
            return Err(HarnessError::MixedConfigs { first: first.config_hash.clone(), other: tr.config_hash.clone() });
        }
        for cp in &tr.checkpoints {
            by_t.entry(cp.t).or_default().push(cp.regret / cp.t as f64);
        }
    }
    let points = by_t
        .into_iter()
        .map(|(t, vals)| {
            let (mean, se) = mean_and_se(&vals);
            AggregatePoint { t, mean, se, seeds: vals.len() }
        })
        .collect();
    Ok(RegretAggregate { config_hash: first.config_hash.clone(), points })
}

/// Least-squares fit of `log mean(R/T)` against `log T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `(log T, log mean R/T)` of the fitted checkpoints.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub ci_95: (f64, f64),
    /// Checkpoints left out because their mean was not positive.
    pub excluded: Vec<u64>,
}

impl RateFit {
    /// True when the 95% interval meets `[expected - tol, expected + tol]`.
    pub fn consistent_with(&self, expected: f64, tol: f64) -> bool {
        self.ci_95.0 <= expected + tol && self.ci_95.1 >= expected - tol
    }
}

pub fn fit_rate(points: &[AggregatePoint]) -> Result<RateFit, HarnessError> {
    if points.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(HarnessError::CheckpointOrder);
    }
    let (kept, dropped): (Vec<&AggregatePoint>, Vec<&AggregatePoint>) = points.iter().partition(|p| p.mean > 0.0 && p.mean.is_finite());
    if kept.len() < MIN_RATE_POINTS {
        return Err(HarnessError::TooFewPoints { positive: kept.len(), required: MIN_RATE_POINTS });
    }
    let xy: Vec<(f64, f64)> = kept.iter().map(|p| ((p.t as f64).ln(), p.mean.ln())).collect();
    let xs: Vec<f64> = xy.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = xy.iter().map(|p| p.1).collect();
    let fit = fit_line(&xs, &ys).ok_or(HarnessError::CheckpointOrder)?;
    Ok(RateFit {
        points: xy,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        ci_95: fit.ci_95,
        excluded: dropped.iter().map(|p| p.t).collect(),
    })
}
