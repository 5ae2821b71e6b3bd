//! Experiment configuration documents (TOML).
//!
//! ```toml
//! mode = "two_point"
//! n = 2
//! a = 0.5
//! b = 0.25
//! limit_mode = true
//! T = 1024
//! seeds = 5
//!
//! [cost]
//! family = "pseudo_huber"
//! ```
//!
//! Optional keys and their defaults: `checkpoints = true` (dyadic
//! checkpoints; `false` keeps only the final round), `seed = 0` (first
//! episode seed; episode `i` uses `seed + i`), `mu0 = "zero"` (or a list of
//! `n` numbers), `comparator = "auto"` (or `"origin"`, or a list),
//! `trace = "full"` (`"costs"` drops stored queries, `"summary"` drops all
//! per-round data), and in `[cost]`: `drift = "fixed"`, `center_bound = 1.0`,
//! `seed = 0`, `scale = 1.0`, plus `weights` (mixture), `value` (constant)
//! and `gradient` (linear).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{ActionError, ActionVector};
use crate::costs::{CostError, CostFamily, CostSequenceSpec, CostShape, Drift};
use crate::schedule::{validate_schedule_with, FeedbackMode, ScheduleParams, ScheduleVerdict};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("schedule {0}")]
    Schedule(ScheduleVerdict),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Dimension(#[from] ActionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum KeywordOrVector {
    Keyword(String),
    Vector(Vec<f64>),
}

/// Initial mean of the learner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KeywordOrVector", into = "KeywordOrVector")]
pub enum InitialMean {
    #[default]
    Zero,
    Explicit(ActionVector),
}

impl TryFrom<KeywordOrVector> for InitialMean {
    type Error = String;
    fn try_from(v: KeywordOrVector) -> Result<Self, String> {
        match v {
            KeywordOrVector::Keyword(k) if k == "zero" => Ok(InitialMean::Zero),
            KeywordOrVector::Keyword(k) => Err(format!("mu0 must be \"zero\" or a list of numbers, got \"{k}\"")),
            KeywordOrVector::Vector(v) => ActionVector::new(v).map(InitialMean::Explicit).map_err(|e| e.to_string()),
        }
    }
}

impl From<InitialMean> for KeywordOrVector {
    fn from(m: InitialMean) -> Self {
        match m {
            InitialMean::Zero => KeywordOrVector::Keyword("zero".into()),
            InitialMean::Explicit(v) => KeywordOrVector::Vector(v.into_vec()),
        }
    }
}

/// The static action regret is measured against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KeywordOrVector", into = "KeywordOrVector")]
pub enum ComparatorPolicy {
    /// Minimizer of the average cost over the horizon, by gradient descent.
    #[default]
    Auto,
    Origin,
    Explicit(ActionVector),
}

impl TryFrom<KeywordOrVector> for ComparatorPolicy {
    type Error = String;
    fn try_from(v: KeywordOrVector) -> Result<Self, String> {
        match v {
            KeywordOrVector::Keyword(k) if k == "auto" => Ok(ComparatorPolicy::Auto),
            KeywordOrVector::Keyword(k) if k == "origin" => Ok(ComparatorPolicy::Origin),
            KeywordOrVector::Keyword(k) => {
                Err(format!("comparator must be \"auto\", \"origin\" or a list of numbers, got \"{k}\""))
            }
            KeywordOrVector::Vector(v) => {
                ActionVector::new(v).map(ComparatorPolicy::Explicit).map_err(|e| e.to_string())
            }
        }
    }
}

impl From<ComparatorPolicy> for KeywordOrVector {
    fn from(c: ComparatorPolicy) -> Self {
        match c {
            ComparatorPolicy::Auto => KeywordOrVector::Keyword("auto".into()),
            ComparatorPolicy::Origin => KeywordOrVector::Keyword("origin".into()),
            ComparatorPolicy::Explicit(v) => KeywordOrVector::Vector(v.into_vec()),
        }
    }
}

/// How much per-round data a trace keeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceDetail {
    /// Round index, query and cost.
    #[default]
    Full,
    /// Round index and cost.
    Costs,
    /// Checkpoints and totals only.
    Summary,
}

fn default_true() -> bool {
    true
}

fn default_center_bound() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub family: CostFamily,
    #[serde(default = "default_drift")]
    pub drift: Drift,
    #[serde(default = "default_center_bound")]
    pub center_bound: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<f64>>,
}

fn default_drift() -> Drift {
    Drift::Fixed
}

impl CostConfig {
    pub fn new(family: CostFamily) -> Self {
        Self {
            family,
            drift: Drift::Fixed,
            center_bound: 1.0,
            seed: 0,
            scale: 1.0,
            weights: None,
            value: None,
            gradient: None,
        }
    }

    fn shape(&self) -> Result<CostShape, ConfigError> {
        let stray = |key: &str| {
            ConfigError::Invalid(format!("cost.{key} is not a parameter of family {}", self.family))
        };
        if self.weights.is_some() && self.family != CostFamily::Mixture {
            return Err(stray("weights"));
        }
        if self.value.is_some() && self.family != CostFamily::Constant {
            return Err(stray("value"));
        }
        if self.gradient.is_some() && self.family != CostFamily::Linear {
            return Err(stray("gradient"));
        }
        Ok(match self.family {
            CostFamily::PseudoHuber => CostShape::PseudoHuber,
            CostFamily::SoftAbs => CostShape::SoftAbs,
            CostFamily::LinearSaturating => CostShape::LinearSaturating,
            CostFamily::Mixture => match self.weights {
                Some(weights) => CostShape::Mixture { weights },
                None => CostShape::equal_mixture(),
            },
            CostFamily::Quadratic => CostShape::Quadratic,
            CostFamily::Linear => {
                let g = self
                    .gradient
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("cost.gradient is required for family linear".into()))?;
                CostShape::Linear { gradient: ActionVector::new(g)? }
            }
            CostFamily::Constant => CostShape::Constant {
                value: self
                    .value
                    .ok_or_else(|| ConfigError::Invalid("cost.value is required for family constant".into()))?,
            },
        })
    }
}

/// A fully specified experiment: schedule, horizon, cost sequence and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: FeedbackMode,
    pub n: usize,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub limit_mode: bool,
    #[serde(rename = "T")]
    pub horizon: u64,
    /// Dyadic checkpoints when true, final round only otherwise.
    #[serde(default = "default_true")]
    pub checkpoints: bool,
    pub seeds: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mu0: InitialMean,
    #[serde(default)]
    pub comparator: ComparatorPolicy,
    #[serde(default)]
    pub trace: TraceDetail,
    pub cost: CostConfig,
}

/// Keys that do not change what a single episode computes.
const UNHASHED_KEYS: [&str; 3] = ["seed", "seeds", "trace"];

impl ExperimentConfig {
    /// A config with defaults for everything but the essentials.
    pub fn new(mode: FeedbackMode, n: usize, a: f64, b: f64, horizon: u64, cost: CostConfig) -> Self {
        Self {
            mode,
            n,
            a,
            b,
            limit_mode: false,
            horizon,
            checkpoints: true,
            seeds: 1,
            seed: 0,
            mu0: InitialMean::Zero,
            comparator: ComparatorPolicy::Auto,
            trace: TraceDetail::Full,
            cost,
        }
    }

    pub fn schedule(&self) -> ScheduleParams {
        ScheduleParams::new(self.a, self.b, self.n, self.mode)
    }

    pub fn cost_spec(&self) -> Result<CostSequenceSpec, ConfigError> {
        let spec = CostSequenceSpec {
            shape: self.cost.shape()?,
            dimension: self.n,
            center_bound: self.cost.center_bound,
            drift: self.cost.drift,
            seed: self.cost.seed,
            scale: self.cost.scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn initial_mean(&self) -> ActionVector {
        match &self.mu0 {
            InitialMean::Zero => ActionVector::zeros(self.n),
            InitialMean::Explicit(v) => v.clone(),
        }
    }

    /// Seeds of the configured episodes, `seed, seed + 1, ...`.
    pub fn episode_seeds(&self) -> impl Iterator<Item = u64> {
        let base = self.seed;
        (0..self.seeds).map(move |i| base.wrapping_add(i))
    }

    /// Checks every invariant; a config that passes can be run.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let verdict = validate_schedule_with(&self.schedule(), self.limit_mode);
        if !verdict.is_ok() {
            return Err(ConfigError::Schedule(verdict));
        }
        if self.seeds < 1 {
            return Err(ConfigError::Invalid("seeds must be at least 1".into()));
        }
        if self.horizon < 2 {
            return Err(ConfigError::Invalid(format!("T must be at least 2, got {}", self.horizon)));
        }
        self.cost_spec()?;
        if let InitialMean::Explicit(v) = &self.mu0 {
            v.check_dim(self.n)?;
        }
        if let ComparatorPolicy::Explicit(v) = &self.comparator {
            v.check_dim(self.n)?;
        }
        Ok(())
    }

    /// Checkpoint rounds: powers of two up to `T`, plus `T` itself.
    pub fn checkpoint_rounds(&self) -> Vec<u64> {
        let mut out = Vec::new();
        if self.checkpoints {
            let mut t = 1u64;
            while t <= self.horizon {
                out.push(t);
                match t.checked_mul(2) {
                    Some(next) => t = next,
                    None => break,
                }
            }
        }
        if out.last() != Some(&self.horizon) {
            out.push(self.horizon);
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Hex SHA-256 of the canonical JSON form without `seed`, `seeds` and
    /// `trace`, so every episode of one experiment shares a hash.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            for key in UNHASHED_KEYS {
                map.remove(key);
            }
        }
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Parses and validates a TOML experiment document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}
