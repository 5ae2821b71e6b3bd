//! Empirical checks on the learner's gradient noise and iterates.
//!
//! The noise of an estimator at `(mu, sigma)` is `grad c~(mu)` minus the
//! estimator; its second to fourth norm moments are estimated by Monte
//! Carlo, their growth in `sigma` by log-log regression. Boundedness runs
//! whole episodes and records `max_t |mu_t|`.

use rayon::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::action::{ActionError, ActionVector};
use crate::config::{ComparatorPolicy, ConfigError, ExperimentConfig, TraceDetail};
use crate::costs::{self, CostFunction, CostInstance};
use crate::harness::{Experiment, HarnessError};
use crate::optimizer::{one_point_raw, two_point_raw};
use crate::rng;
use crate::schedule::FeedbackMode;
use crate::smoothing::{reference_gradient, SmoothingError, MIN_UNBIASEDNESS_SAMPLES};
use crate::stats::{fit_line, LineFit};

/// Samples per independent random stream in moment estimation.
const CHUNK: usize = 8192;

/// Smallest ratio between the largest and smallest sigma of a scaling grid.
pub const MIN_SIGMA_SPAN: f64 = 8.0;

#[derive(Debug, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("at least {MIN_UNBIASEDNESS_SAMPLES} samples are required, got {0}")]
    BudgetTooSmall(usize),
    #[error("sigma must be positive and finite, got {0}")]
    NonPositiveSigma(f64),
    #[error("degenerate sigma grid: {0}")]
    DegenerateGrid(String),
    #[error(transparent)]
    Oracle(#[from] SmoothingError),
    #[error(transparent)]
    Dimension(#[from] ActionError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// Monte Carlo means of `|noise|^k` for `k = 2, 3, 4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mode: FeedbackMode,
    pub mu: ActionVector,
    pub sigma: f64,
    pub n: usize,
    pub samples: usize,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    /// Standard errors of `m2, m3, m4`.
    pub standard_errors: [f64; 3],
    /// Error estimate of the oracle gradient the noise is measured from.
    pub oracle_error: f64,
}

/// The ordering `m2^(1/2) <= m3^(1/3) <= m4^(1/4)`, each step allowed a
/// slack of four standard errors of the larger root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentOrdering {
    pub roots: [f64; 3],
    /// Delta-method standard errors of the roots.
    pub root_errors: [f64; 3],
    pub holds: bool,
}

impl MomentReport {
    pub fn ordering(&self) -> MomentOrdering {
        let ms = [self.m2, self.m3, self.m4];
        let mut roots = [0.0; 3];
        let mut root_errors = [0.0; 3];
        for i in 0..3 {
            let k = (i + 2) as f64;
            roots[i] = ms[i].powf(1.0 / k);
            root_errors[i] =
                if ms[i] > 0.0 { self.standard_errors[i] * ms[i].powf(1.0 / k - 1.0) / k } else { 0.0 };
        }
        let holds = roots[0] <= roots[1] + 4.0 * root_errors[1] && roots[1] <= roots[2] + 4.0 * root_errors[2];
        MomentOrdering { roots, root_errors, holds }
    }

    /// `|m2 - expected| / se(m2)`.
    pub fn m2_z(&self, expected: f64) -> f64 {
        crate::smoothing::z_score(self.m2 - expected, self.standard_errors[0]).abs()
    }
}

/// Draws `x ~ N(mu, sigma^2 I)` `samples` times and averages the powers of
/// `|grad c~(mu) - estimator|`. Samples are split into fixed chunks with
/// their own streams, run in parallel and summed in chunk order, so the
/// result does not depend on the thread count.
pub fn estimate_noise_moments(
    c: &CostInstance,
    mu: &ActionVector,
    sigma: f64,
    mode: FeedbackMode,
    samples: usize,
    seed: u64,
) -> Result<MomentReport, DiagnosticsError> {
    if samples < MIN_UNBIASEDNESS_SAMPLES {
        return Err(DiagnosticsError::BudgetTooSmall(samples));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(DiagnosticsError::NonPositiveSigma(sigma));
    }
    mu.check_dim(c.dim())?;
    let oracle = reference_gradient(c, mu, sigma)?;
    let m = mu.as_slice();
    let g = oracle.vector.as_slice();
    let at_mean = c.value(m);
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<[f64; 6]> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let count = CHUNK.min(samples - k * CHUNK);
            let mut r = rng::stream(seed, rng::DIAGNOSTICS_STREAM + k as u64);
            let mut x = vec![0.0; m.len()];
            let mut acc = [0.0; 6];
            for _ in 0..count {
                for (xi, mi) in x.iter_mut().zip(m) {
                    let z: f64 = StandardNormal.sample(&mut r);
                    *xi = mi + sigma * z;
                }
                let cx = c.value(&x);
                let est = match mode {
                    FeedbackMode::OnePoint => one_point_raw(cx, &x, m, sigma),
                    FeedbackMode::TwoPoint => two_point_raw(cx, at_mean, &x, m, sigma),
                };
                let sq: f64 = g.iter().zip(&est).map(|(gi, ei)| (gi - ei) * (gi - ei)).sum();
                let powers = [sq, sq * sq.sqrt(), sq * sq];
                for j in 0..3 {
                    acc[j] += powers[j];
                    acc[j + 3] += powers[j] * powers[j];
                }
            }
            acc
        })
        .collect();
    let mut total = [0.0; 6];
    for p in &partial {
        for j in 0..6 {
            total[j] += p[j];
        }
    }
    let nf = samples as f64;
    let mean = |j: usize| total[j] / nf;
    let se = |j: usize| ((total[j + 3] / nf - mean(j) * mean(j)).max(0.0) / (nf - 1.0)).sqrt();
    Ok(MomentReport {
        mode,
        mu: mu.clone(),
        sigma,
        n: mu.dim(),
        samples,
        m2: mean(0),
        m3: mean(1),
        m4: mean(2),
        standard_errors: [se(0), se(1), se(2)],
        oracle_error: oracle.error_estimate,
    })
}

/// Log-log fit of the second noise moment against sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaScaling {
    pub sigmas: Vec<f64>,
    pub m2: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub ci_95: (f64, f64),
}

fn check_sigma_grid(sigmas: &[f64]) -> Result<(), DiagnosticsError> {
    let bad = |msg: String| Err(DiagnosticsError::DegenerateGrid(msg));
    if sigmas.len() < 4 {
        return bad(format!("need at least 4 sigma values, got {}", sigmas.len()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
        return bad(format!("sigma values must lie in (0, 1], got {s}"));
    }
    let lo = sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sigmas.iter().cloned().fold(0.0, f64::max);
    if hi / lo < MIN_SIGMA_SPAN {
        return bad(format!("sigma values span a factor {:.3}, need at least {MIN_SIGMA_SPAN}", hi / lo));
    }
    Ok(())
}

/// Least-squares slope of `log m2` against `log sigma`.
pub fn scaling_slope(sigmas: &[f64], m2: &[f64]) -> Result<SigmaScaling, DiagnosticsError> {
    check_sigma_grid(sigmas)?;
    if m2.len() != sigmas.len() || m2.iter().any(|v| !(*v > 0.0)) {
        return Err(DiagnosticsError::DegenerateGrid("moments must be positive, one per sigma".into()));
    }
    let xs: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = m2.iter().map(|v| v.ln()).collect();
    let LineFit { slope, intercept, r_squared, ci_95, .. } =
        fit_line(&xs, &ys).ok_or_else(|| DiagnosticsError::DegenerateGrid("sigma values must be distinct".into()))?;
    Ok(SigmaScaling { sigmas: sigmas.to_vec(), m2: m2.to_vec(), slope, intercept, r_squared, ci_95 })
}

/// Estimates `m2` at every sigma (same seed, so common random numbers) and
/// fits the log-log slope. One-point fits need `|mu| >= 1`, where the
/// `1/sigma^2` term dominates.
pub fn fit_sigma_scaling(
    c: &CostInstance,
    mu: &ActionVector,
    mode: FeedbackMode,
    sigmas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<SigmaScaling, DiagnosticsError> {
    check_sigma_grid(sigmas)?;
    if mode == FeedbackMode::OnePoint && mu.norm() < 1.0 {
        return Err(DiagnosticsError::DegenerateGrid(format!(
            "one-point scaling needs |mu| >= 1, got {}",
            mu.norm()
        )));
    }
    let mut m2 = Vec::with_capacity(sigmas.len());
    for &s in sigmas {
        m2.push(estimate_noise_moments(c, mu, s, mode, samples, seed)?.m2);
    }
    scaling_slope(sigmas, &m2)
}

/// Largest mean-iterate norm seen across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub max_norm: f64,
    /// Earliest round (over all seeds) whose iterate exceeded the threshold.
    pub first_excursion_round: Option<u64>,
    pub threshold: f64,
    pub seeds: u64,
    pub horizon: u64,
    /// Episodes stopped by a non-finite cost or iterate.
    pub aborted_episodes: u64,
    pub per_seed_max: Vec<f64>,
}

impl BoundednessReport {
    pub fn passed(&self) -> bool {
        self.aborted_episodes == 0 && self.max_norm <= self.threshold && self.max_norm.is_finite()
    }
}

/// `10 max(sqrt K, |mu_0|, 1)`; `K` counts as 0 for families without
/// certified constants.
pub fn boundedness_threshold(config: &ExperimentConfig) -> Result<f64, DiagnosticsError> {
    let spec = config.cost_spec()?;
    let k = costs::constants(&spec).map_or(0.0, |c| c.k);
    Ok(10.0 * k.sqrt().max(config.initial_mean().norm()).max(1.0))
}

/// Runs `seeds` episodes of `horizon` rounds and tracks `max_t |mu_t|`,
/// including `mu_0`. The schedule is validated before anything runs.
pub fn monitor_boundedness(
    config: &ExperimentConfig,
    horizon: u64,
    seeds: u64,
) -> Result<BoundednessReport, DiagnosticsError> {
    let mut config = config.clone();
    config.horizon = horizon;
    config.seeds = seeds;
    config.comparator = ComparatorPolicy::Origin;
    config.trace = TraceDetail::Summary;
    let threshold = boundedness_threshold(&config)?;
    let experiment = Experiment::prepare(&config)?;
    let start = config.initial_mean().norm();
    let per_seed: Vec<(f64, Option<u64>, bool)> = config
        .episode_seeds()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|seed| {
            let mut max = start;
            let mut excursion = (start > threshold).then_some(0);
            let result = experiment.play(seed, &mut |o| {
                let norm = o.next_mu.norm();
                if norm > max {
                    max = norm;
                }
                if excursion.is_none() && norm > threshold {
                    excursion = Some(o.t + 1);
                }
            });
            (max, excursion, result.is_err())
        })
        .collect();
    Ok(BoundednessReport {
        max_norm: per_seed.iter().map(|p| p.0).fold(0.0, f64::max),
        first_excursion_round: per_seed.iter().filter_map(|p| p.1).min(),
        threshold,
        seeds,
        horizon,
        aborted_episodes: per_seed.iter().filter(|p| p.2).count() as u64,
        per_seed_max: per_seed.iter().map(|p| p.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CostConfig, InitialMean};
    use crate::costs::CostFamily;

    /// `E[prod_i Z_{k_i}]` for i.i.d. standard normals, by pairing counts:
    /// each coordinate appearing `p` times contributes `(p - 1)!!` (0 if odd).
    fn gaussian_moment(powers: &[u32]) -> f64 {
        powers
            .iter()
            .map(|&p| if p % 2 == 1 { 0.0 } else { (1..p).step_by(2).map(|v| v as f64).product::<f64>() })
            .product()
    }

    /// Exact `E|g~ - est|^2` for a linear cost `(g, x)`, where `x = mu + s Z`.
    /// The estimator is `w (x - mu)/s^2 = w Z / s` with `w` a polynomial in Z;
    /// expand `E|est|^2 = sum_i E[w^2 Z_i^2] / s^2` term by term.
    fn linear_noise_m2(g: &[f64], mu: &[f64], s: f64, mode: FeedbackMode) -> f64 {
        let n = g.len();
        // w = w0 + s (g, Z), w0 = (g, mu) for one-point and 0 for two-point
        let w0 = match mode {
            FeedbackMode::OnePoint => g.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>(),
            FeedbackMode::TwoPoint => 0.0,
        };
        let mut e_est2 = 0.0;
        for i in 0..n {
            // E[(w0 + s sum_j g_j Z_j)^2 Z_i^2] / s^2
            let mut powers = vec![0u32; n];
            powers[i] = 2;
            let mut term = w0 * w0 * gaussian_moment(&powers);
            for j in 0..n {
                for k in 0..n {
                    let mut p = powers.clone();
                    p[j] += 1;
                    p[k] += 1;
                    term += s * s * g[j] * g[k] * gaussian_moment(&p);
                }
                let mut p = powers.clone();
                p[j] += 1;
                term += 2.0 * w0 * s * g[j] * gaussian_moment(&p);
            }
            e_est2 += term / (s * s);
        }
        // E|g - est|^2 = E|est|^2 - |g|^2 since the estimator is unbiased
        e_est2 - g.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn moment_oracle_closed_forms() {
        let g2 = [0.6, 0.8];
        assert!((linear_noise_m2(&g2, &[0.3, -1.0], 0.7, FeedbackMode::TwoPoint) - 3.0).abs() < 1e-12);
        assert!((linear_noise_m2(&[1.0], &[1.0], 0.5, FeedbackMode::OnePoint) - 6.0).abs() < 1e-12);
        // two-point: (n + 1)|g|^2 in every dimension
        for n in [2usize, 8, 32] {
            let g: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
            let v = linear_noise_m2(&g, &vec![0.0; n], 0.3, FeedbackMode::TwoPoint);
            assert!((v - (n as f64 + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_two_point_matches_oracle() {
        let g = ActionVector::new(vec![0.6, 0.8]).unwrap();
        let c = CostInstance::linear(g);
        let mu = ActionVector::new(vec![0.3, -1.0]).unwrap();
        let r = estimate_noise_moments(&c, &mu, 0.7, FeedbackMode::TwoPoint, 200_000, 1).unwrap();
        assert!(r.m2_z(3.0) < 4.0, "{r:?}");
        assert!(r.ordering().holds);
    }

    #[test]
    fn linear_one_point_matches_oracle() {
        let c = CostInstance::linear(ActionVector::new(vec![1.0]).unwrap());
        let mu = ActionVector::new(vec![1.0]).unwrap();
        let r = estimate_noise_moments(&c, &mu, 0.5, FeedbackMode::OnePoint, 200_000, 2).unwrap();
        assert!(r.m2_z(6.0) < 4.0, "{r:?}");
    }

    #[test]
    fn constant_two_point_is_noiseless() {
        let c = CostInstance::constant(2.5, 3);
        let mu = ActionVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let r = estimate_noise_moments(&c, &mu, 0.4, FeedbackMode::TwoPoint, 10_000, 0).unwrap();
        assert_eq!((r.m2, r.m3, r.m4), (0.0, 0.0, 0.0));
        assert!(r.ordering().holds);
    }

    #[test]
    fn budget_and_reproducibility() {
        let c = CostInstance::pseudo_huber(ActionVector::zeros(2));
        let mu = ActionVector::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            estimate_noise_moments(&c, &mu, 0.3, FeedbackMode::OnePoint, 9_999, 0),
            Err(DiagnosticsError::BudgetTooSmall(9_999))
        ));
        let a = estimate_noise_moments(&c, &mu, 0.3, FeedbackMode::OnePoint, 50_000, 4).unwrap();
        let b = estimate_noise_moments(&c, &mu, 0.3, FeedbackMode::OnePoint, 50_000, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_power_law_slope() {
        let sigmas = [0.5, 0.25, 0.125, 0.0625];
        let m2: Vec<f64> = sigmas.iter().map(|s: &f64| 3.0 * s.powi(-2)).collect();
        let fit = scaling_slope(&sigmas, &m2).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!(scaling_slope(&sigmas[..3], &m2[..3]).is_err());
        assert!(scaling_slope(&[0.5, 0.4, 0.3, 0.2], &m2).is_err());
        assert!(scaling_slope(&[2.0, 0.25, 0.125, 0.0625], &m2).is_err());
    }

    #[test]
    fn one_point_noise_grows_with_mean_norm() {
        let c = CostInstance::pseudo_huber(ActionVector::zeros(2));
        let near = ActionVector::new(vec![1.0, 0.0]).unwrap();
        let far = ActionVector::new(vec![4.0, 0.0]).unwrap();
        let a = estimate_noise_moments(&c, &near, 0.3, FeedbackMode::OnePoint, 100_000, 0).unwrap();
        let b = estimate_noise_moments(&c, &far, 0.3, FeedbackMode::OnePoint, 100_000, 0).unwrap();
        assert!(b.m2 > a.m2);
    }

    #[test]
    fn one_point_scaling_requires_far_mean() {
        let c = CostInstance::pseudo_huber(ActionVector::zeros(2));
        let mu = ActionVector::new(vec![0.5, 0.0]).unwrap();
        let r = fit_sigma_scaling(&c, &mu, FeedbackMode::OnePoint, &[0.5, 0.25, 0.125, 0.0625], 10_000, 0);
        assert!(matches!(r, Err(DiagnosticsError::DegenerateGrid(_))));
    }

    fn boundedness_config(mode: FeedbackMode, family: CostFamily) -> ExperimentConfig {
        let (a, b) = match mode {
            FeedbackMode::OnePoint => (0.7, 0.1),
            FeedbackMode::TwoPoint => (0.5, 0.25),
        };
        ExperimentConfig::new(mode, 2, a, b, 10, CostConfig::new(family))
    }

    #[test]
    fn constant_cost_freezes_two_point_iterates() {
        let mut c = boundedness_config(FeedbackMode::TwoPoint, CostFamily::Constant);
        c.cost.value = Some(3.0);
        c.mu0 = InitialMean::Explicit(ActionVector::new(vec![3.0, 4.0]).unwrap());
        let r = monitor_boundedness(&c, 500, 3).unwrap();
        assert_eq!(r.max_norm, 5.0);
        assert_eq!(r.threshold, 50.0);
        assert!(r.passed());
    }

    #[test]
    fn invalid_schedule_is_rejected_before_running() {
        let mut c = boundedness_config(FeedbackMode::OnePoint, CostFamily::PseudoHuber);
        c.a = 0.4;
        c.b = 0.3;
        assert!(matches!(
            monitor_boundedness(&c, 100, 1),
            Err(DiagnosticsError::Harness(HarnessError::Config(ConfigError::Schedule(_))))
        ));
    }

    #[test]
    fn pseudo_huber_stays_bounded() {
        let mut c = boundedness_config(FeedbackMode::OnePoint, CostFamily::PseudoHuber);
        c.cost.center_bound = 0.0;
        let r = monitor_boundedness(&c, 20_000, 4).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.per_seed_max.len(), 4);
    }
}
