//! Zeroth-order bandit online convex optimization in unconstrained action
//! spaces, using Gaussian-smoothing gradient estimates.
//!
//! The learner ([`optimizer`]) sees only cost values. Everything else in the
//! crate exists to check it: certified cost families ([`costs`]), a
//! quadrature/Monte Carlo oracle for the smoothed cost ([`smoothing`]),
//! noise-moment and boundedness diagnostics ([`diagnostics`]), and the regret
//! experiment harness ([`harness`]).

pub mod action;
pub mod checks;
pub mod cli;
pub mod config;
pub mod costs;
pub mod diagnostics;
pub mod harness;
pub mod optimizer;
pub mod records;
pub mod rng;
pub mod schedule;
pub mod smoothing;
pub mod stats;

pub use action::{ActionError, ActionVector, EstimatorNoise};
pub use config::{parse_config, ExperimentConfig};
pub use costs::{CostFamily, CostFunction, CostInstance, CostSequenceSpec, CostShape, Drift};
pub use diagnostics::{BoundednessReport, MomentReport};
pub use harness::{RateFit, RegretTrace};
pub use optimizer::{OptimizerState, RoundFeedback, RoundOutcome};
pub use schedule::{FeedbackMode, ScheduleParams, ScheduleVerdict};
