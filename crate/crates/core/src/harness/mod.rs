//! Regret experiments: episodes, comparators, multi-seed aggregation, rate
//! fits and parameter sweeps.
//!
//! The harness is the only place that sees whole cost functions. The learner
//! is driven through a [`RoundEnv`], which answers value queries for the
//! current round and refuses anything beyond the mode's query budget.

mod comparator;
mod rate;
mod sweep;

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::action::ActionVector;
use crate::config::{ComparatorPolicy, ConfigError, ExperimentConfig, TraceDetail};
use crate::costs::{CostError, CostFunction, CostInstance, CostSequence, CostSequenceSpec};
use crate::optimizer::{OptimizerError, OptimizerState, QueryError, RoundFeedback, RoundOutcome};
use crate::records::RecordError;
use crate::rng;

pub use comparator::{compute_comparator, fit_comparator, ComparatorFit, COMPARATOR_GRAD_TOL, COMPARATOR_MAX_ITERS};
pub use rate::{aggregate_regret, fit_rate, AggregatePoint, RateFit, RegretAggregate, MIN_RATE_POINTS};
pub use sweep::{sweep, trace_record, SweepFailure, SweepGrid, SweepReport};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("comparator did not converge: gradient norm {gradient_norm:.3e} after {iterations} iterations")]
    ComparatorNotConverged { gradient_norm: f64, iterations: usize },
    #[error("episode aborted after {} rounds: {source}", trace.completed_rounds)]
    Aborted { trace: Box<RegretTrace>, source: OptimizerError },
    #[error("round table entries must share shape, scale and dimension")]
    InconsistentRounds,
    #[error("traces come from different configs ({first} vs {other})")]
    MixedConfigs { first: String, other: String },
    #[error("no traces to aggregate")]
    NoTraces,
    #[error("rate fit needs at least {required} checkpoints with positive mean regret, got {positive}")]
    TooFewPoints { positive: usize, required: usize },
    #[error("checkpoint rounds must be strictly increasing")]
    CheckpointOrder,
    #[error(transparent)]
    Record(#[from] RecordError),
}

/// Feedback for one round: values of `cost`, at most `budget` of them.
pub struct RoundEnv<'a, C: ?Sized> {
    cost: &'a C,
    remaining: u64,
    used: u64,
}

impl<'a, C: CostFunction + ?Sized> RoundEnv<'a, C> {
    pub fn new(cost: &'a C, budget: u64) -> Self {
        Self { cost, remaining: budget, used: 0 }
    }

    pub fn queries_used(&self) -> u64 {
        self.used
    }
}

impl<C: CostFunction + ?Sized> RoundFeedback for RoundEnv<'_, C> {
    fn query(&mut self, x: &ActionVector) -> Result<f64, QueryError> {
        if self.remaining == 0 {
            return Err(QueryError::Refused);
        }
        if x.dim() != self.cost.dim() {
            return Err(QueryError::Failed(format!("query of dimension {} for a {}-dimensional cost", x.dim(), self.cost.dim())));
        }
        self.remaining -= 1;
        self.used += 1;
        Ok(self.cost.value(x.as_slice()))
    }
}

/// Wraps a cost and counts value and gradient accesses.
#[derive(Debug)]
pub struct CountingCost<C> {
    inner: C,
    values: Cell<u64>,
    gradients: Cell<u64>,
}

impl<C: CostFunction> CountingCost<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, values: Cell::new(0), gradients: Cell::new(0) }
    }

    pub fn value_calls(&self) -> u64 {
        self.values.get()
    }

    pub fn gradient_calls(&self) -> u64 {
        self.gradients.get()
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: CostFunction> CostFunction for CountingCost<C> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.values.set(self.values.get() + 1);
        self.inner.value(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradients.set(self.gradients.get() + 1);
        self.inner.gradient(x)
    }
}

/// The cost of every round `1..=T`: one shared instance whose center is
/// swapped per round.
#[derive(Debug, Clone)]
pub struct RoundTable {
    template: CostInstance,
    /// Row-major `T x n` centers; empty when every round is the template.
    centers: Vec<f64>,
    horizon: u64,
}

impl RoundTable {
    pub fn generate(spec: &CostSequenceSpec, horizon: u64) -> Self {
        let mut seq = CostSequence::new(spec.clone());
        let template = seq.next_instance();
        if spec.is_stationary() {
            return Self { template, centers: Vec::new(), horizon };
        }
        let mut centers = Vec::with_capacity(horizon as usize * spec.dimension);
        centers.extend_from_slice(template.center.as_slice());
        for _ in 1..horizon {
            centers.extend_from_slice(seq.next_instance().center.as_slice());
        }
        Self { template, centers, horizon }
    }

    /// Builds a table from explicit rounds `c_1, ..., c_T`, which must differ
    /// only in their centers.
    pub fn from_instances(rounds: &[CostInstance]) -> Result<Self, HarnessError> {
        let first = rounds.first().ok_or(HarnessError::InconsistentRounds)?;
        let mut centers = Vec::with_capacity(rounds.len() * first.dim());
        for r in rounds {
            if r.shape != first.shape || r.scale != first.scale || r.dim() != first.dim() {
                return Err(HarnessError::InconsistentRounds);
            }
            centers.extend_from_slice(r.center.as_slice());
        }
        Ok(Self { template: first.clone(), centers, horizon: rounds.len() as u64 })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.template.dim()
    }

    pub fn is_stationary(&self) -> bool {
        self.centers.is_empty()
    }

    /// A scratch instance for [`RoundTable::load`].
    pub fn instance(&self) -> CostInstance {
        self.template.clone()
    }

    /// Overwrites `slot` with round `t`'s cost.
    pub fn load(&self, t: u64, slot: &mut CostInstance) {
        debug_assert!(t >= 1 && t <= self.horizon);
        if !self.centers.is_empty() {
            let n = self.dim();
            let start = (t as usize - 1) * n;
            slot.center.as_mut_slice().copy_from_slice(&self.centers[start..start + n]);
        }
        slot.round = t;
    }

    /// Every round's cost at `x`, in order.
    pub fn values_at(&self, x: &[f64]) -> Vec<f64> {
        if self.is_stationary() {
            return vec![self.template.value(x); self.horizon as usize];
        }
        let mut slot = self.instance();
        (1..=self.horizon)
            .map(|t| {
                self.load(t, &mut slot);
                slot.value(x)
            })
            .collect()
    }

    /// `(1/T) sum_t c_t(x)`.
    pub fn average_value(&self, x: &[f64]) -> f64 {
        if self.is_stationary() {
            return self.template.value(x);
        }
        self.values_at(x).iter().sum::<f64>() / self.horizon as f64
    }
}

/// One played round as stored in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<ActionVector>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretCheckpoint {
    pub t: u64,
    /// `R(t) = sum_{s<=t} c_s(x_s) - sum_{s<=t} c_s(comparator)`.
    pub regret: f64,
}

/// Everything recorded about one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub config_hash: String,
    pub seed: u64,
    pub horizon: u64,
    pub completed_rounds: u64,
    /// Cost values handed to the learner, over all rounds.
    pub queries: u64,
    pub comparator: ActionVector,
    /// Comparator cost summed over the completed rounds.
    pub comparator_cost_sum: f64,
    /// Cost at the queries summed over the completed rounds.
    pub cost_sum: f64,
    pub checkpoints: Vec<RegretCheckpoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_round: Vec<RoundRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort: Option<String>,
}

impl RegretTrace {
    /// Regret over the completed rounds.
    pub fn regret(&self) -> f64 {
        self.cost_sum - self.comparator_cost_sum
    }

    /// Regret recomputed from the stored per-round costs, if they were kept.
    pub fn recomputed_regret(&self) -> Option<f64> {
        if self.per_round.len() as u64 != self.completed_rounds {
            return None;
        }
        Some(self.per_round.iter().map(|r| r.cost).sum::<f64>() - self.comparator_cost_sum)
    }

    pub fn is_complete(&self) -> bool {
        self.abort.is_none() && self.completed_rounds == self.horizon
    }
}

/// Per-episode counters reported by [`Experiment::play`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeStats {
    pub completed_rounds: u64,
    pub queries: u64,
}

/// A validated config with its round table and comparator in place, ready
/// to run any number of seeds.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    hash: String,
    table: RoundTable,
    comparator: ActionVector,
    comparator_prefix: Vec<f64>,
    checkpoints: Vec<u64>,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let spec = config.cost_spec()?;
        let table = RoundTable::generate(&spec, config.horizon);
        let comparator = match &config.comparator {
            ComparatorPolicy::Auto => fit_comparator(&table, comparator::step_hint(&spec))?.point,
            ComparatorPolicy::Origin => ActionVector::zeros(config.n),
            ComparatorPolicy::Explicit(v) => v.clone(),
        };
        let mut comparator_prefix = Vec::with_capacity(config.horizon as usize + 1);
        comparator_prefix.push(0.0);
        let mut acc = 0.0;
        for v in table.values_at(comparator.as_slice()) {
            acc += v;
            comparator_prefix.push(acc);
        }
        Ok(Self {
            hash: config.config_hash(),
            checkpoints: config.checkpoint_rounds(),
            config: config.clone(),
            table,
            comparator,
            comparator_prefix,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn comparator(&self) -> &ActionVector {
        &self.comparator
    }

    pub fn table(&self) -> &RoundTable {
        &self.table
    }

    /// Runs the learner for `T` rounds from a fresh state, passing each round
    /// to `observer`. On abort, returns the counters up to the failed round.
    pub fn play(
        &self,
        seed: u64,
        observer: &mut dyn FnMut(&RoundOutcome),
    ) -> Result<EpisodeStats, (EpisodeStats, OptimizerError)> {
        let mut stats = EpisodeStats { completed_rounds: 0, queries: 0 };
        let mut state =
            OptimizerState::new(self.config.schedule(), self.config.initial_mean(), rng::episode_stream(seed))
                .map_err(|e| (stats, e))?;
        let budget = self.config.mode.queries_per_round();
        let mut slot = self.table.instance();
        for t in 1..=self.config.horizon {
            self.table.load(t, &mut slot);
            let mut env = RoundEnv::new(&slot, budget);
            let outcome = state.step(&mut env);
            stats.queries += env.queries_used();
            match outcome {
                Ok(o) => {
                    stats.completed_rounds = t;
                    observer(&o);
                }
                Err(e) => return Err((stats, e)),
            }
        }
        Ok(stats)
    }

    pub fn run_episode(&self, seed: u64) -> Result<RegretTrace, HarnessError> {
        let detail = self.config.trace;
        let keep_rounds = detail != TraceDetail::Summary;
        let mut per_round = Vec::with_capacity(if keep_rounds { self.config.horizon as usize } else { 0 });
        let mut checkpoints = Vec::with_capacity(self.checkpoints.len());
        let mut next_cp = self.checkpoints.iter().copied().peekable();
        let mut cost_sum = 0.0;
        let result = self.play(seed, &mut |o| {
            cost_sum += o.cost_at_query;
            if keep_rounds {
                let query = (detail == TraceDetail::Full).then(|| o.query.clone());
                per_round.push(RoundRecord { t: o.t, query, cost: o.cost_at_query });
            }
            if next_cp.peek() == Some(&o.t) {
                next_cp.next();
                checkpoints.push(RegretCheckpoint { t: o.t, regret: cost_sum - self.comparator_prefix[o.t as usize] });
            }
        });
        let (stats, error) = match result {
            Ok(stats) => (stats, None),
            Err((stats, e)) => (stats, Some(e)),
        };
        let trace = RegretTrace {
            config_hash: self.hash.clone(),
            seed,
            horizon: self.config.horizon,
            completed_rounds: stats.completed_rounds,
            queries: stats.queries,
            comparator: self.comparator.clone(),
            comparator_cost_sum: self.comparator_prefix[stats.completed_rounds as usize],
            cost_sum,
            checkpoints,
            per_round,
            abort: error.as_ref().map(|e| e.to_string()),
        };
        match error {
            None => Ok(trace),
            Some(source) => Err(HarnessError::Aborted { trace: Box::new(trace), source }),
        }
    }
}

/// Prepares `config` and runs one episode.
pub fn run_episode(config: &ExperimentConfig, seed: u64) -> Result<RegretTrace, HarnessError> {
    Experiment::prepare(config)?.run_episode(seed)
}
