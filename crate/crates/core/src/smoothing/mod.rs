//! Numerical oracle for the Gaussian-smoothed cost
//! `c~(mu) = E[c(mu + sigma Z)]`, `Z ~ N(0, I_n)`, and its gradient
//! `grad c~(mu) = E[grad c(mu + sigma Z)]`.
//!
//! Two methods are available: tensor-product Gauss–Hermite quadrature (for
//! `n <= 6`) and plain Monte Carlo. Every result carries an error estimate:
//! for quadrature the discrepancy against the rule with half as many nodes
//! per axis, for Monte Carlo three standard errors. Bound checks always
//! compare against `bound + error_estimate`.
//!
//! The oracle is for verification only. The learner never calls it.

pub mod hermite;

use rand_distr::{Distribution, StandardNormal};

use crate::action::{ActionError, ActionVector};
use crate::costs::{CostFunction, CostInstance, CostShape};
use crate::optimizer::{one_point_raw, two_point_raw};
use crate::rng;
use crate::schedule::FeedbackMode;

pub use hermite::HermiteRule;

/// Largest dimension handled by tensor-product quadrature.
pub const MAX_QUADRATURE_DIM: usize = 6;

/// Minimum Monte Carlo budget for [`verify_unbiasedness`].
pub const MIN_UNBIASEDNESS_SAMPLES: usize = 10_000;

/// Monte Carlo budget used by the default oracle above [`MAX_QUADRATURE_DIM`].
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

/// Floor on reported quadrature errors, relative to the result magnitude.
const ROUNDING_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SmoothingError {
    #[error("sample budget {0} is too small")]
    BudgetTooSmall(usize),
    #[error("tensor-product quadrature supports n <= {MAX_QUADRATURE_DIM}, got n = {0}")]
    DimensionTooLarge(usize),
    #[error("sigma must be positive and finite, got {0}")]
    NonPositiveSigma(f64),
    #[error(transparent)]
    Dimension(#[from] ActionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingMethod {
    GaussHermiteQuadrature,
    MonteCarlo { seed: u64 },
}

/// A request for `c~` or `grad c~` at `mu` with smoothing scale `sigma`.
///
/// `sample_budget` is the number of nodes per axis (quadrature) or the
/// number of draws (Monte Carlo).
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedQuery {
    pub mu: ActionVector,
    pub sigma: f64,
    pub method: SmoothingMethod,
    pub sample_budget: usize,
}

impl SmoothedQuery {
    pub fn quadrature(mu: ActionVector, sigma: f64, nodes: usize) -> Self {
        Self { mu, sigma, method: SmoothingMethod::GaussHermiteQuadrature, sample_budget: nodes }
    }

    pub fn monte_carlo(mu: ActionVector, sigma: f64, samples: usize, seed: u64) -> Self {
        Self { mu, sigma, method: SmoothingMethod::MonteCarlo { seed }, sample_budget: samples }
    }

    /// 64 nodes per axis for `n <= 2`, 16 for `n <= 6`, Monte Carlo beyond.
    pub fn default_for(mu: ActionVector, sigma: f64) -> Self {
        match mu.dim() {
            n if n <= 2 => Self::quadrature(mu, sigma, 64),
            n if n <= MAX_QUADRATURE_DIM => Self::quadrature(mu, sigma, 16),
            _ => Self::monte_carlo(mu, sigma, DEFAULT_MC_SAMPLES, 0),
        }
    }

    fn validate(&self, n: usize) -> Result<(), SmoothingError> {
        self.mu.check_dim(n)?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(SmoothingError::NonPositiveSigma(self.sigma));
        }
        if self.sample_budget < 2 {
            return Err(SmoothingError::BudgetTooSmall(self.sample_budget));
        }
        if self.method == SmoothingMethod::GaussHermiteQuadrature && n > MAX_QUADRATURE_DIM {
            return Err(SmoothingError::DimensionTooLarge(n));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedValue {
    pub value: f64,
    pub error_estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedGradient {
    pub vector: ActionVector,
    pub error_estimate: f64,
}

/// Tensor-product expectation of a vector-valued integrand of width `width`.
fn tensor_expectation(
    rule: &HermiteRule,
    mu: &[f64],
    sigma: f64,
    width: usize,
    f: &mut dyn FnMut(&[f64], &mut [f64]),
) -> Vec<f64> {
    let n = mu.len();
    let m = rule.len();
    let mut idx = vec![0usize; n];
    let mut x: Vec<f64> = mu.iter().map(|c| c + sigma * rule.nodes[0]).collect();
    let mut acc = vec![0.0; width];
    let mut val = vec![0.0; width];
    loop {
        let w: f64 = idx.iter().map(|&i| rule.weights[i]).product();
        f(&x, &mut val);
        for (a, v) in acc.iter_mut().zip(&val) {
            *a += w * v;
        }
        // odometer increment
        let mut axis = 0;
        loop {
            if axis == n {
                return acc;
            }
            idx[axis] += 1;
            if idx[axis] < m {
                x[axis] = mu[axis] + sigma * rule.nodes[idx[axis]];
                break;
            }
            idx[axis] = 0;
            x[axis] = mu[axis] + sigma * rule.nodes[0];
            axis += 1;
        }
    }
}

fn quadrature_with_error(
    q: &SmoothedQuery,
    width: usize,
    f: &mut dyn FnMut(&[f64], &mut [f64]),
) -> (Vec<f64>, f64) {
    let fine = HermiteRule::new(q.sample_budget);
    let coarse = HermiteRule::new((q.sample_budget / 2).max(1));
    let mu = q.mu.as_slice();
    let hi = tensor_expectation(&fine, mu, q.sigma, width, f);
    let lo = tensor_expectation(&coarse, mu, q.sigma, width, f);
    let diff = hi.iter().zip(&lo).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let mag = hi.iter().map(|v| v * v).sum::<f64>().sqrt();
    (hi, diff + ROUNDING_FLOOR * (1.0 + mag))
}

fn monte_carlo_with_error(
    q: &SmoothedQuery,
    seed: u64,
    width: usize,
    f: &mut dyn FnMut(&[f64], &mut [f64]),
) -> (Vec<f64>, f64) {
    let mut r = rng::stream(seed, rng::SMOOTHING_STREAM);
    let mu = q.mu.as_slice();
    let mut x = vec![0.0; mu.len()];
    let mut val = vec![0.0; width];
    let mut sum = vec![0.0; width];
    let mut sum_sq = vec![0.0; width];
    for _ in 0..q.sample_budget {
        for (xi, m) in x.iter_mut().zip(mu) {
            let z: f64 = StandardNormal.sample(&mut r);
            *xi = m + q.sigma * z;
        }
        f(&x, &mut val);
        for k in 0..width {
            sum[k] += val[k];
            sum_sq[k] += val[k] * val[k];
        }
    }
    let nf = q.sample_budget as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let se2: f64 = (0..width)
        .map(|k| ((sum_sq[k] / nf - mean[k] * mean[k]).max(0.0)) / (nf - 1.0))
        .sum();
    (mean, 3.0 * se2.sqrt())
}

fn integrate<C: CostFunction + ?Sized>(
    q: &SmoothedQuery,
    width: usize,
    f: &mut dyn FnMut(&[f64], &mut [f64]),
    c: &C,
) -> Result<(Vec<f64>, f64), SmoothingError> {
    q.validate(c.dim())?;
    Ok(match q.method {
        SmoothingMethod::GaussHermiteQuadrature => quadrature_with_error(q, width, f),
        SmoothingMethod::MonteCarlo { seed } => monte_carlo_with_error(q, seed, width, f),
    })
}

/// `c~(mu)` by the query's method.
pub fn smoothed_cost<C: CostFunction + ?Sized>(c: &C, q: &SmoothedQuery) -> Result<SmoothedValue, SmoothingError> {
    let mut f = |x: &[f64], out: &mut [f64]| out[0] = c.value(x);
    let (v, err) = integrate(q, 1, &mut f, c)?;
    Ok(SmoothedValue { value: v[0], error_estimate: err })
}

/// `grad c~(mu)` as the Gaussian average of the true gradient.
pub fn smoothed_gradient<C: CostFunction + ?Sized>(
    c: &C,
    q: &SmoothedQuery,
) -> Result<SmoothedGradient, SmoothingError> {
    let mut f = |x: &[f64], out: &mut [f64]| out.copy_from_slice(&c.gradient(x));
    let (v, err) = integrate(q, c.dim(), &mut f, c)?;
    Ok(SmoothedGradient { vector: ActionVector::new(v)?, error_estimate: err })
}

/// Exact `(c~(mu), grad c~(mu))` for the test families that have one.
pub fn closed_form(c: &CostInstance, mu: &ActionVector, sigma: f64) -> Option<(f64, ActionVector)> {
    let z: Vec<f64> = mu.as_slice().iter().zip(c.center.as_slice()).map(|(a, b)| a - b).collect();
    let n = z.len() as f64;
    match &c.shape {
        CostShape::Constant { value } => Some((*value, ActionVector::zeros(z.len()))),
        CostShape::Linear { gradient } => {
            let v = gradient.as_slice().iter().zip(&z).map(|(g, zi)| g * zi).sum();
            Some((v, gradient.clone()))
        }
        CostShape::Quadratic => {
            let r2: f64 = z.iter().map(|v| v * v).sum();
            let g = z.iter().map(|v| v / c.scale).collect();
            Some(((r2 + n * sigma * sigma) / (2.0 * c.scale), ActionVector::from_vec_unchecked(g)))
        }
        _ => None,
    }
}

/// Reference `c~(mu)`: closed form where available, otherwise the default oracle.
pub fn reference_cost(c: &CostInstance, mu: &ActionVector, sigma: f64) -> Result<SmoothedValue, SmoothingError> {
    mu.check_dim(c.center.dim())?;
    match closed_form(c, mu, sigma) {
        Some((value, _)) => Ok(SmoothedValue { value, error_estimate: 0.0 }),
        None => smoothed_cost(c, &SmoothedQuery::default_for(mu.clone(), sigma)),
    }
}

/// Reference `grad c~(mu)`: closed form where available, otherwise the default oracle.
pub fn reference_gradient(
    c: &CostInstance,
    mu: &ActionVector,
    sigma: f64,
) -> Result<SmoothedGradient, SmoothingError> {
    mu.check_dim(c.center.dim())?;
    match closed_form(c, mu, sigma) {
        Some((_, vector)) => Ok(SmoothedGradient { vector, error_estimate: 0.0 }),
        None => smoothed_gradient(c, &SmoothedQuery::default_for(mu.clone(), sigma)),
    }
}

/// Outcome of the smoothing-gap check `|c(mu) - c~(mu)| <= n L sigma^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingGap {
    pub gap: f64,
    pub bound: f64,
    pub error_estimate: f64,
    pub ok: bool,
}

/// Compares `c(mu)` with the numerically smoothed cost (never the closed form).
pub fn verify_smoothing_gap(
    c: &CostInstance,
    mu: &ActionVector,
    sigma: f64,
    lipschitz: f64,
) -> Result<SmoothingGap, SmoothingError> {
    mu.check_dim(c.dim())?;
    let exact = c.value(mu.as_slice());
    let smoothed = smoothed_cost(c, &SmoothedQuery::default_for(mu.clone(), sigma))?;
    let n = mu.dim() as f64;
    let gap = (exact - smoothed.value).abs();
    let bound = n * lipschitz * sigma * sigma / 2.0;
    Ok(SmoothingGap {
        gap,
        bound,
        error_estimate: smoothed.error_estimate,
        ok: gap <= bound + smoothed.error_estimate,
    })
}

/// Monte Carlo mean of a gradient estimator against the oracle gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasednessReport {
    pub mode: FeedbackMode,
    pub samples: usize,
    pub mc_mean: ActionVector,
    pub standard_errors: Vec<f64>,
    pub oracle_grad: ActionVector,
    pub oracle_error: f64,
    pub z_scores: Vec<f64>,
}

impl UnbiasednessReport {
    /// Passing threshold on every `|z|`.
    pub const Z_LIMIT: f64 = 4.0;

    pub fn passed(&self) -> bool {
        self.z_scores.iter().all(|z| z.abs() < Self::Z_LIMIT)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.z_scores.iter().fold(0.0, |m, z| m.max(z.abs()))
    }
}

pub(crate) fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Draws `x ~ N(mu, sigma^2 I)` `mc_samples` times, averages the one- or
/// two-point estimator, and z-scores each coordinate against `grad c~(mu)`.
pub fn verify_unbiasedness(
    c: &CostInstance,
    mu: &ActionVector,
    sigma: f64,
    mode: FeedbackMode,
    mc_samples: usize,
    seed: u64,
) -> Result<UnbiasednessReport, SmoothingError> {
    if mc_samples < MIN_UNBIASEDNESS_SAMPLES {
        return Err(SmoothingError::BudgetTooSmall(mc_samples));
    }
    let oracle = reference_gradient(c, mu, sigma)?;
    let n = mu.dim();
    let m = mu.as_slice();
    let at_mean = c.value(m);
    let mut r = rng::stream(seed, rng::SMOOTHING_STREAM);
    let mut x = vec![0.0; n];
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for _ in 0..mc_samples {
        for (xi, mi) in x.iter_mut().zip(m) {
            let z: f64 = StandardNormal.sample(&mut r);
            *xi = mi + sigma * z;
        }
        let cx = c.value(&x);
        let est = match mode {
            FeedbackMode::OnePoint => one_point_raw(cx, &x, m, sigma),
            FeedbackMode::TwoPoint => two_point_raw(cx, at_mean, &x, m, sigma),
        };
        for k in 0..n {
            sum[k] += est[k];
            sum_sq[k] += est[k] * est[k];
        }
    }
    let nf = mc_samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let se: Vec<f64> = (0..n)
        .map(|k| ((sum_sq[k] / nf - mean[k] * mean[k]).max(0.0) / (nf - 1.0)).sqrt())
        .collect();
    let z = (0..n).map(|k| z_score(mean[k] - oracle.vector[k], se[k])).collect();
    Ok(UnbiasednessReport {
        mode,
        samples: mc_samples,
        mc_mean: ActionVector::new(mean)?,
        standard_errors: se,
        oracle_grad: oracle.vector,
        oracle_error: oracle.error_estimate,
        z_scores: z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{constants, CostSequenceSpec, Drift};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn av(v: &[f64]) -> ActionVector {
        ActionVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn linear_and_quadratic_are_exact_under_quadrature() {
        let g = av(&[0.5, -1.5, 2.0]);
        let lin = CostInstance::linear(g.clone());
        let mu = av(&[1.0, 2.0, -0.5]);
        let q = SmoothedQuery::quadrature(mu.clone(), 0.7, 16);
        let v = smoothed_cost(&lin, &q).unwrap();
        assert!((v.value - g.dot(&mu)).abs() <= v.error_estimate);
        let gr = smoothed_gradient(&lin, &q).unwrap();
        for i in 0..3 {
            assert!((gr.vector[i] - g[i]).abs() <= gr.error_estimate);
        }

        let quad = CostInstance::quadratic(ActionVector::zeros(3));
        let v = smoothed_cost(&quad, &q).unwrap();
        let want = 0.5 * mu.dot(&mu) + 3.0 * 0.49 / 2.0;
        assert!((v.value - want).abs() <= v.error_estimate);
        assert!(v.error_estimate < 1e-10);
    }

    #[test]
    fn pseudo_huber_quadrature_agrees_with_monte_carlo() {
        let c = CostInstance::pseudo_huber(av(&[0.0]));
        let mu = av(&[0.0]);
        let q = smoothed_cost(&c, &SmoothedQuery::quadrature(mu.clone(), 0.5, 64)).unwrap();
        let mc = smoothed_cost(&c, &SmoothedQuery::monte_carlo(mu, 0.5, 10_000_000, 4)).unwrap();
        assert!((q.value - mc.value).abs() <= q.error_estimate + mc.error_estimate);
        assert!(q.error_estimate < 1e-10);
    }

    #[test]
    fn symmetric_gradient_vanishes_at_center() {
        let c = CostInstance::pseudo_huber(av(&[0.4, -1.0]));
        let g = smoothed_gradient(&c, &SmoothedQuery::default_for(av(&[0.4, -1.0]), 0.8)).unwrap();
        assert!(g.vector.norm() <= g.error_estimate);
    }

    #[test]
    fn gradient_matches_finite_difference_of_cost() {
        let c = CostInstance::pseudo_huber(av(&[0.0, 0.0]));
        let mu = [1.0, 0.0];
        let sigma = 0.3;
        let g = smoothed_gradient(&c, &SmoothedQuery::default_for(av(&mu), sigma)).unwrap();
        let h = 1e-4;
        for i in 0..2 {
            let mut p = mu;
            let mut m = mu;
            p[i] += h;
            m[i] -= h;
            let fp = smoothed_cost(&c, &SmoothedQuery::default_for(av(&p), sigma)).unwrap().value;
            let fm = smoothed_cost(&c, &SmoothedQuery::default_for(av(&m), sigma)).unwrap().value;
            assert!(((fp - fm) / (2.0 * h) - g.vector[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn gradient_matches_finite_difference_random_points() {
        let mut r = ChaCha8Rng::seed_from_u64(12);
        let h = 1e-4;
        for k in 0..100 {
            let n = 1 + k % 3;
            let spec = CostSequenceSpec::new(
                [CostShape::PseudoHuber, CostShape::SoftAbs, CostShape::LinearSaturating][k % 3].clone(),
                n,
                1.0,
                Drift::RotatingDeterministic,
                0,
            )
            .unwrap();
            let c = crate::costs::generate_round(&spec, k as u64 + 1);
            let mu: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
            let sigma = r.random_range(0.1..1.0);
            let nodes = if n <= 2 { 48 } else { 16 };
            let g = smoothed_gradient(&c, &SmoothedQuery::quadrature(av(&mu), sigma, nodes)).unwrap();
            for i in 0..n {
                let mut p = mu.clone();
                let mut m = mu.clone();
                p[i] += h;
                m[i] -= h;
                let fp = smoothed_cost(&c, &SmoothedQuery::quadrature(av(&p), sigma, nodes)).unwrap().value;
                let fm = smoothed_cost(&c, &SmoothedQuery::quadrature(av(&m), sigma, nodes)).unwrap().value;
                assert!(((fp - fm) / (2.0 * h) - g.vector[i]).abs() < 1e-5, "k={k} i={i}");
            }
        }
    }

    #[test]
    fn query_validation() {
        let c = CostInstance::pseudo_huber(ActionVector::zeros(7));
        let q = SmoothedQuery::quadrature(ActionVector::zeros(7), 0.5, 8);
        assert_eq!(smoothed_cost(&c, &q), Err(SmoothingError::DimensionTooLarge(7)));
        let c1 = CostInstance::pseudo_huber(ActionVector::zeros(1));
        let q = SmoothedQuery::quadrature(ActionVector::zeros(1), 0.5, 1);
        assert_eq!(smoothed_cost(&c1, &q), Err(SmoothingError::BudgetTooSmall(1)));
        let q = SmoothedQuery::quadrature(ActionVector::zeros(1), 0.0, 8);
        assert_eq!(smoothed_cost(&c1, &q), Err(SmoothingError::NonPositiveSigma(0.0)));
        let q = SmoothedQuery::quadrature(ActionVector::zeros(2), 0.5, 8);
        assert!(matches!(smoothed_cost(&c1, &q), Err(SmoothingError::Dimension(_))));
        assert!(verify_unbiasedness(&c1, &ActionVector::zeros(1), 0.5, FeedbackMode::OnePoint, 100, 0).is_err());
    }

    #[test]
    fn smoothing_gap_examples() {
        let quad = CostInstance::quadratic(ActionVector::zeros(3));
        let gap = verify_smoothing_gap(&quad, &av(&[0.3, -1.0, 2.0]), 0.5, 1.0).unwrap();
        assert!((gap.gap - 0.375).abs() < 1e-10);
        assert_eq!(gap.bound, 0.375);
        assert!(gap.ok);

        let lin = CostInstance::linear(av(&[1.0, 2.0]));
        let gap = verify_smoothing_gap(&lin, &av(&[0.5, 0.5]), 0.8, 0.0).unwrap();
        assert!(gap.gap < 1e-12 && gap.ok);

        let ph = CostInstance::pseudo_huber(ActionVector::zeros(2));
        let gap = verify_smoothing_gap(&ph, &av(&[1.0, 1.0]), 0.4, 1.0).unwrap();
        assert!((gap.bound - 0.16).abs() < 1e-15);
        assert!(gap.gap <= 0.16 && gap.ok);
    }

    #[test]
    fn unbiasedness_examples() {
        let constant = CostInstance::constant(5.0, 2);
        let rep = verify_unbiasedness(&constant, &av(&[1.0, -1.0]), 0.3, FeedbackMode::TwoPoint, 10_000, 1).unwrap();
        assert_eq!(rep.mc_mean.as_slice(), &[0.0, 0.0]);
        assert_eq!(rep.z_scores, vec![0.0, 0.0]);
        assert!(rep.passed());

        let lin = CostInstance::linear(av(&[0.8, -0.6]));
        let rep = verify_unbiasedness(&lin, &av(&[2.0, 1.0]), 0.5, FeedbackMode::OnePoint, 1_000_000, 2).unwrap();
        assert_eq!(rep.oracle_grad.as_slice(), &[0.8, -0.6]);
        assert!(rep.passed(), "{:?}", rep.z_scores);

        let ph = CostInstance::pseudo_huber(ActionVector::zeros(2));
        let rep = verify_unbiasedness(&ph, &av(&[1.0, 0.0]), 0.3, FeedbackMode::OnePoint, 1_000_000, 3).unwrap();
        assert!(rep.passed(), "{:?}", rep.z_scores);
    }

    #[test]
    fn smoothed_cost_is_convex() {
        let mut r = ChaCha8Rng::seed_from_u64(31);
        let c = CostInstance::pseudo_huber(av(&[0.5, -0.5]));
        for _ in 0..1000 {
            let a: Vec<f64> = (0..2).map(|_| r.random_range(-4.0..4.0)).collect();
            let b: Vec<f64> = (0..2).map(|_| r.random_range(-4.0..4.0)).collect();
            let lam: f64 = r.random();
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
            let s = 0.6;
            let fa = smoothed_cost(&c, &SmoothedQuery::quadrature(av(&a), s, 24)).unwrap();
            let fb = smoothed_cost(&c, &SmoothedQuery::quadrature(av(&b), s, 24)).unwrap();
            let fm = smoothed_cost(&c, &SmoothedQuery::quadrature(av(&m), s, 24)).unwrap();
            let slack = fa.error_estimate + fb.error_estimate + fm.error_estimate;
            assert!(fm.value <= lam * fa.value + (1.0 - lam) * fb.value + slack);
        }
    }

    #[test]
    fn smoothed_gradient_is_bounded() {
        let mut r = ChaCha8Rng::seed_from_u64(32);
        let spec = CostSequenceSpec::new(CostShape::PseudoHuber, 2, 1.0, Drift::Fixed, 0).unwrap();
        let l = constants(&spec).unwrap().l;
        let c = crate::costs::generate_round(&spec, 1);
        for _ in 0..1000 {
            let dir: Vec<f64> = (0..2).map(|_| r.random_range(-1.0..1.0)).collect();
            let rad = 100.0 * r.random::<f64>();
            let nd = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            let mu = av(&[dir[0] / nd * rad, dir[1] / nd * rad]);
            let g = smoothed_gradient(&c, &SmoothedQuery::quadrature(mu, r.random_range(0.05..1.0), 24)).unwrap();
            assert!(g.vector.norm() <= l + g.error_estimate);
        }
    }

    #[test]
    fn smoothed_radial_condition_outside_four_k() {
        let mut r = ChaCha8Rng::seed_from_u64(33);
        let spec = CostSequenceSpec::new(CostShape::PseudoHuber, 2, 1.5, Drift::RotatingDeterministic, 0).unwrap();
        let k = constants(&spec).unwrap().k;
        for i in 0..1000u64 {
            let c = crate::costs::generate_round(&spec, i + 1);
            let angle: f64 = r.random_range(0.0..std::f64::consts::TAU);
            let rad = (k * r.random_range(4.0..100.0) * (1.0 + 1e-9)).sqrt();
            let mu = av(&[rad * angle.cos(), rad * angle.sin()]);
            let sigma = r.random_range(0.01..1.0);
            let g = smoothed_gradient(&c, &SmoothedQuery::quadrature(mu.clone(), sigma, 24)).unwrap();
            assert!(mu.dot(&g.vector) > 0.0);
        }
    }
}
