use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::costs::{CostFamily, Drift};
use crate::records::{RecordKind, RecordSink, ResultRecord};
use crate::schedule::FeedbackMode;

use super::{Experiment, HarnessError, RegretTrace};

/// Cartesian grid of experiment configs. Empty axes produce no points; keys
/// not on an axis come from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub base: ExperimentConfig,
    pub modes: Vec<FeedbackMode>,
    pub dims: Vec<usize>,
    /// `(a, b)` pairs.
    pub schedules: Vec<(f64, f64)>,
    pub horizons: Vec<u64>,
    pub families: Vec<CostFamily>,
    pub drifts: Vec<Drift>,
}

impl SweepGrid {
    /// A grid with the single point `base`.
    pub fn single(base: ExperimentConfig) -> Self {
        Self {
            modes: vec![base.mode],
            dims: vec![base.n],
            schedules: vec![(base.a, base.b)],
            horizons: vec![base.horizon],
            families: vec![base.cost.family],
            drifts: vec![base.cost.drift],
            base,
        }
    }

    /// Grid points in a fixed order: mode, n, schedule, T, family, drift.
    pub fn points(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &n in &self.dims {
                for &(a, b) in &self.schedules {
                    for &horizon in &self.horizons {
                        for &family in &self.families {
                            for &drift in &self.drifts {
                                let mut c = self.base.clone();
                                c.mode = mode;
                                c.n = n;
                                c.a = a;
                                c.b = b;
                                c.horizon = horizon;
                                c.cost.family = family;
                                c.cost.drift = drift;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub episodes_run: usize,
    pub skipped: usize,
    /// Config-level failures (seed absent) and episode aborts.
    pub failures: Vec<SweepFailure>,
}

/// Runs `seeds` episodes at every grid point, appending one trace record per
/// episode to `sink` in grid order, then seed order. Episodes whose key is
/// already in the sink are skipped. Aborted episodes are still written (with
/// their partial trace) and reported as failures. Only sink errors stop the
/// sweep.
pub fn sweep(grid: &SweepGrid, seeds: u64, sink: &mut dyn RecordSink) -> Result<SweepReport, HarnessError> {
    let mut report = SweepReport::default();
    for mut config in grid.points() {
        config.seeds = seeds;
        let hash = config.config_hash();
        let pending: Vec<u64> = config
            .episode_seeds()
            .filter(|&s| !sink.contains(&(RecordKind::Trace, hash.clone(), Some(s))))
            .collect();
        report.skipped += (seeds as usize) - pending.len();
        if pending.is_empty() {
            continue;
        }
        let experiment = match Experiment::prepare(&config) {
            Ok(e) => e,
            Err(e) => {
                report.failures.push(SweepFailure { config_hash: hash, seed: None, message: e.to_string() });
                continue;
            }
        };
        let results: Vec<(u64, Result<RegretTrace, HarnessError>)> =
            pending.par_iter().map(|&s| (s, experiment.run_episode(s))).collect();
        for (seed, result) in results {
            let trace = match result {
                Ok(t) => t,
                Err(HarnessError::Aborted { trace, source }) => {
                    report.failures.push(SweepFailure { config_hash: hash.clone(), seed: Some(seed), message: source.to_string() });
                    *trace
                }
                Err(e) => {
                    report.failures.push(SweepFailure { config_hash: hash.clone(), seed: Some(seed), message: e.to_string() });
                    continue;
                }
            };
            sink.append(&trace_record(&config, &trace)?)?;
            report.episodes_run += 1;
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct TracePayload<'a> {
    config: &'a ExperimentConfig,
    trace: &'a RegretTrace,
}

/// A self-contained trace record: the payload carries the config too.
pub fn trace_record(config: &ExperimentConfig, trace: &RegretTrace) -> Result<ResultRecord, HarnessError> {
    Ok(ResultRecord::new(
        RecordKind::Trace,
        trace.config_hash.clone(),
        Some(trace.seed),
        &TracePayload { config, trace },
    )?)
}
