//! The bandit learner.
//!
//! Each round draws `x_t ~ N(mu_t, sigma_t^2 I)`, observes the cost value(s)
//! it is allowed to see, and moves the mean:
//!
//! * one-point: `mu_{t+1} = mu_t - alpha_t c_t(x_t) (x_t - mu_t) / sigma_t^2`
//! * two-point: `mu_{t+1} = mu_t - alpha_t (c_t(x_t) - c_t(mu_t)) (x_t - mu_t) / sigma_t^2`
//!
//! There is no projection, clipping or normalization. The learner only talks
//! to a [`RoundFeedback`], which hands out cost values and nothing else.

use rand_distr::{Distribution, StandardNormal};

use crate::action::{ActionError, ActionVector};
use crate::rng::StreamRng;
use crate::schedule::{FeedbackMode, ScheduleError, ScheduleParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("query refused: the round's feedback budget is exhausted")]
    Refused,
    #[error("cost query failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error("sigma must be positive and finite, got {0}")]
    NonPositiveSigma(f64),
    #[error(transparent)]
    Dimension(#[from] ActionError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("round {t}: {source}")]
    Query { t: u64, source: QueryError },
    #[error("round {t}: non-finite cost value {value} observed")]
    NonFiniteCost { t: u64, value: f64 },
    #[error("round {t}: update produced a non-finite mean iterate")]
    NonFiniteIterate { t: u64 },
}

/// Zeroth-order feedback for one round: a cost value per permitted query.
pub trait RoundFeedback {
    fn query(&mut self, x: &ActionVector) -> Result<f64, QueryError>;
}

fn check_sigma(sigma: f64) -> Result<(), OptimizerError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(OptimizerError::NonPositiveSigma(sigma))
    }
}

fn scaled_offset(weight: f64, x: &[f64], mu: &[f64], sigma: f64) -> Vec<f64> {
    let inv_var = 1.0 / (sigma * sigma);
    x.iter().zip(mu).map(|(xi, mi)| weight * (xi - mi) * inv_var).collect()
}

pub(crate) fn one_point_raw(cost_value: f64, x: &[f64], mu: &[f64], sigma: f64) -> Vec<f64> {
    scaled_offset(cost_value, x, mu, sigma)
}

pub(crate) fn two_point_raw(cost_at_x: f64, cost_at_mu: f64, x: &[f64], mu: &[f64], sigma: f64) -> Vec<f64> {
    scaled_offset(cost_at_x - cost_at_mu, x, mu, sigma)
}

/// `cost_value (x - mu) / sigma^2`.
pub fn gradient_estimate_one_point(
    cost_value: f64,
    x: &ActionVector,
    mu: &ActionVector,
    sigma: f64,
) -> Result<ActionVector, OptimizerError> {
    check_sigma(sigma)?;
    x.check_dim(mu.dim())?;
    Ok(ActionVector::new(one_point_raw(cost_value, x.as_slice(), mu.as_slice(), sigma))?)
}

/// `(cost_at_x - cost_at_mu) (x - mu) / sigma^2`.
pub fn gradient_estimate_two_point(
    cost_at_x: f64,
    cost_at_mu: f64,
    x: &ActionVector,
    mu: &ActionVector,
    sigma: f64,
) -> Result<ActionVector, OptimizerError> {
    check_sigma(sigma)?;
    x.check_dim(mu.dim())?;
    Ok(ActionVector::new(two_point_raw(cost_at_x, cost_at_mu, x.as_slice(), mu.as_slice(), sigma))?)
}

/// Everything observed and computed in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub t: u64,
    pub alpha: f64,
    pub sigma: f64,
    /// `mu_t`, the mean the query was drawn around.
    pub mu: ActionVector,
    /// `x_t`.
    pub query: ActionVector,
    /// `mu_t` as queried; two-point only.
    pub mean_query: Option<ActionVector>,
    pub cost_at_query: f64,
    pub cost_at_mean: Option<f64>,
    pub gradient_estimate: ActionVector,
    pub next_mu: ActionVector,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    mu: ActionVector,
    t: u64,
    params: ScheduleParams,
    rng: StreamRng,
}

impl OptimizerState {
    /// Starts at round `t = 1` with mean `mu0`.
    pub fn new(params: ScheduleParams, mu0: ActionVector, rng: StreamRng) -> Result<Self, OptimizerError> {
        mu0.check_dim(params.n)?;
        Ok(Self { mu: mu0, t: 1, params, rng })
    }

    pub fn mu(&self) -> &ActionVector {
        &self.mu
    }

    /// The round about to be played.
    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn mode(&self) -> FeedbackMode {
        self.params.mode
    }

    /// Draws `x_t ~ N(mu_t, sigma_t^2 I)`.
    pub fn sample_query(&mut self) -> Result<ActionVector, OptimizerError> {
        let sigma = self.params.sigma(self.t)?;
        let coords = self
            .mu
            .as_slice()
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                m + sigma * z
            })
            .collect();
        Ok(ActionVector::new(coords)?)
    }

    /// Plays one round against `env` and advances to `t + 1`.
    ///
    /// `env` is queried once (one-point) or twice (two-point, second query at
    /// `mu_t`). On error the state is left at the failed round.
    pub fn step(&mut self, env: &mut dyn RoundFeedback) -> Result<RoundOutcome, OptimizerError> {
        let t = self.t;
        let alpha = self.params.alpha(t)?;
        let sigma = self.params.sigma(t)?;
        let query = self.sample_query()?;

        let cost_at_query = env.query(&query).map_err(|source| OptimizerError::Query { t, source })?;
        if !cost_at_query.is_finite() {
            return Err(OptimizerError::NonFiniteCost { t, value: cost_at_query });
        }
        let (mean_query, cost_at_mean, estimate) = match self.params.mode {
            FeedbackMode::OnePoint => {
                (None, None, one_point_raw(cost_at_query, query.as_slice(), self.mu.as_slice(), sigma))
            }
            FeedbackMode::TwoPoint => {
                let at_mean = env.query(&self.mu).map_err(|source| OptimizerError::Query { t, source })?;
                if !at_mean.is_finite() {
                    return Err(OptimizerError::NonFiniteCost { t, value: at_mean });
                }
                let est = two_point_raw(cost_at_query, at_mean, query.as_slice(), self.mu.as_slice(), sigma);
                (Some(self.mu.clone()), Some(at_mean), est)
            }
        };
        let gradient_estimate =
            ActionVector::new(estimate).map_err(|_| OptimizerError::NonFiniteIterate { t })?;
        let next: Vec<f64> = self
            .mu
            .as_slice()
            .iter()
            .zip(gradient_estimate.as_slice())
            .map(|(m, g)| m - alpha * g)
            .collect();
        let next_mu = ActionVector::new(next).map_err(|_| OptimizerError::NonFiniteIterate { t })?;

        let mu = std::mem::replace(&mut self.mu, next_mu.clone());
        self.t += 1;
        Ok(RoundOutcome {
            t,
            alpha,
            sigma,
            mu,
            query,
            mean_query,
            cost_at_query,
            cost_at_mean,
            gradient_estimate,
            next_mu,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{CostFunction, CostInstance};
    use crate::rng;

    fn av(v: &[f64]) -> ActionVector {
        ActionVector::new(v.to_vec()).unwrap()
    }

    struct Fixed<F: FnMut(&ActionVector) -> f64>(F, usize);

    impl<F: FnMut(&ActionVector) -> f64> RoundFeedback for Fixed<F> {
        fn query(&mut self, x: &ActionVector) -> Result<f64, QueryError> {
            self.1 += 1;
            Ok((self.0)(x))
        }
    }

    #[test]
    fn one_point_estimator_examples() {
        let mu = av(&[1.0, 1.0]);
        let x = av(&[1.5, 0.5]);
        assert_eq!(gradient_estimate_one_point(0.0, &x, &mu, 0.5).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(gradient_estimate_one_point(2.0, &x, &mu, 0.5).unwrap().as_slice(), &[4.0, -4.0]);
        assert_eq!(gradient_estimate_one_point(7.0, &mu, &mu, 0.5).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(
            gradient_estimate_one_point(1.0, &x, &mu, 0.0),
            Err(OptimizerError::NonPositiveSigma(0.0))
        );
        assert!(gradient_estimate_one_point(1.0, &av(&[1.0]), &mu, 1.0).is_err());
    }

    #[test]
    fn two_point_estimator_examples() {
        let mu = av(&[0.0]);
        let x = av(&[0.2]);
        let g = gradient_estimate_two_point(1.5, 1.0, &x, &mu, 0.5).unwrap();
        assert!((g[0] - 0.4).abs() < 1e-15);
        assert_eq!(gradient_estimate_two_point(3.0, 3.0, &x, &mu, 0.5).unwrap().as_slice(), &[0.0]);
        assert!(gradient_estimate_two_point(3.0, 3.0, &x, &mu, -1.0).is_err());
    }

    #[test]
    fn two_point_linear_estimator_is_unbiased() {
        let g = [0.6, -0.8];
        let lin = CostInstance::linear(av(&g));
        let mu = av(&[0.3, 2.0]);
        let sigma = 0.4;
        let mut r = rng::stream(21, 0);
        let samples = 1_000_000;
        let (mut sum, mut sum_sq) = ([0.0; 2], [0.0; 2]);
        for _ in 0..samples {
            let x: Vec<f64> = mu
                .as_slice()
                .iter()
                .map(|m| m + sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r))
                .collect();
            let est = two_point_raw(lin.value(&x), lin.value(mu.as_slice()), &x, mu.as_slice(), sigma);
            for i in 0..2 {
                sum[i] += est[i];
                sum_sq[i] += est[i] * est[i];
            }
        }
        for i in 0..2 {
            let mean = sum[i] / samples as f64;
            let var = sum_sq[i] / samples as f64 - mean * mean;
            let se = (var / samples as f64).sqrt();
            assert!(((mean - g[i]) / se).abs() < 4.0);
        }
    }

    #[test]
    fn sample_query_moments_and_determinism() {
        let params = ScheduleParams::new(0.5, 0.5, 2, FeedbackMode::OnePoint);
        // sigma_2 = (2 * 2)^(-1/2) = 0.5
        let make = || {
            let mut s = OptimizerState::new(params, av(&[2.0, -1.0]), rng::stream(3, 0)).unwrap();
            s.t = 2;
            s
        };
        let mut s = make();
        let samples = 1_000_000;
        let mut sum = [0.0; 2];
        let mut sum_sq = [0.0; 2];
        for _ in 0..samples {
            let x = s.sample_query().unwrap();
            for i in 0..2 {
                sum[i] += x[i];
                sum_sq[i] += x[i] * x[i];
            }
        }
        let nf = samples as f64;
        for (i, target) in [2.0, -1.0].into_iter().enumerate() {
            let mean = sum[i] / nf;
            let var = sum_sq[i] / nf - mean * mean;
            assert!(((mean - target) / (var / nf).sqrt()).abs() < 4.0);
            // Var of the sample variance for a Gaussian is 2 sigma^4 / N.
            let se_var = (2.0 * 0.0625 / nf).sqrt();
            assert!(((var - 0.25) / se_var).abs() < 4.0);
        }
        assert_eq!(make().sample_query().unwrap(), make().sample_query().unwrap());
    }

    #[test]
    fn hand_executed_one_point_round() {
        // mu_1 = 1, alpha_1 = sigma_1 = 1, x_1 = 1.5 forced through the env.
        let params = ScheduleParams::new(0.5, 0.25, 1, FeedbackMode::OnePoint);
        let mu = av(&[1.0]);
        let x = av(&[1.5]);
        let c = CostInstance::pseudo_huber(av(&[0.0]));
        let chat = c.evaluate(&x).unwrap();
        assert!((chat - 0.802_776).abs() < 1e-6);
        let est = gradient_estimate_one_point(chat, &x, &mu, params.sigma(1).unwrap()).unwrap();
        let next = mu[0] - params.alpha(1).unwrap() * est[0];
        assert!((next - 0.598_612).abs() < 1e-6);
    }

    #[test]
    fn step_follows_update_rule() {
        let params = ScheduleParams::new(0.7, 0.1, 2, FeedbackMode::OnePoint);
        let c = CostInstance::pseudo_huber(av(&[0.5, -0.5]));
        let mut state = OptimizerState::new(params, av(&[3.0, 1.0]), rng::stream(1, 0)).unwrap();
        let mut env = Fixed(|x: &ActionVector| c.evaluate(x).unwrap(), 0);
        for t in 1..=50 {
            let mu_before = state.mu().clone();
            let out = state.step(&mut env).unwrap();
            assert_eq!(out.t, t);
            assert_eq!(out.mu, mu_before);
            assert!(out.mean_query.is_none() && out.cost_at_mean.is_none());
            let est = gradient_estimate_one_point(out.cost_at_query, &out.query, &mu_before, out.sigma).unwrap();
            assert_eq!(est, out.gradient_estimate);
            for i in 0..2 {
                // exact identity of the update
                assert_eq!(out.next_mu[i], mu_before[i] - out.alpha * est[i]);
                // round trip up to rounding of the subtraction
                let back = out.next_mu[i] + out.alpha * est[i];
                let scale = mu_before[i].abs().max((out.alpha * est[i]).abs());
                assert!((back - mu_before[i]).abs() <= 4.0 * f64::EPSILON * scale);
            }
            assert_eq!(state.mu(), &out.next_mu);
            assert_eq!(state.round(), t + 1);
        }
        assert_eq!(env.1, 50);
    }

    #[test]
    fn two_point_constant_cost_freezes_mean() {
        let params = ScheduleParams::optimal(3, FeedbackMode::TwoPoint);
        let mu0 = av(&[1.0, -2.0, 0.5]);
        let mut state = OptimizerState::new(params, mu0.clone(), rng::stream(2, 0)).unwrap();
        let mut env = Fixed(|_: &ActionVector| 5.0, 0);
        for _ in 0..100 {
            let out = state.step(&mut env).unwrap();
            assert_eq!(out.mean_query.as_ref(), Some(&mu0));
            assert_eq!(out.next_mu, mu0);
        }
        assert_eq!(env.1, 200);
    }

    #[test]
    fn non_finite_cost_aborts() {
        let params = ScheduleParams::optimal(1, FeedbackMode::TwoPoint);
        let mut state = OptimizerState::new(params, av(&[0.0]), rng::stream(2, 0)).unwrap();
        let mut env = Fixed(|_: &ActionVector| f64::NAN, 0);
        assert!(matches!(state.step(&mut env), Err(OptimizerError::NonFiniteCost { t: 1, .. })));
        assert_eq!(state.round(), 1);
        let mut huge = Fixed(|x: &ActionVector| if x[0] == 0.0 { -f64::MAX } else { f64::MAX }, 0);
        assert!(matches!(state.step(&mut huge), Err(OptimizerError::NonFiniteIterate { t: 1 })));
    }

    #[test]
    fn refused_query_propagates() {
        struct OneShot(bool);
        impl RoundFeedback for OneShot {
            fn query(&mut self, _: &ActionVector) -> Result<f64, QueryError> {
                if std::mem::replace(&mut self.0, true) {
                    Err(QueryError::Refused)
                } else {
                    Ok(1.0)
                }
            }
        }
        let params = ScheduleParams::optimal(1, FeedbackMode::TwoPoint);
        let mut state = OptimizerState::new(params, av(&[0.0]), rng::stream(2, 0)).unwrap();
        assert!(matches!(
            state.step(&mut OneShot(false)),
            Err(OptimizerError::Query { t: 1, source: QueryError::Refused })
        ));
    }
}
