//! Time-varying convex cost functions with certified regularity constants.
//!
//! Admissible families (convex, differentiable, gradient bounded by `l`,
//! gradient `L`-Lipschitz, radially outward gradient for `|x|^2 > K`):
//!
//! | family             | `c(x)` with `z = x - theta`, scale `s`    | `l`   | `L`   | `K`                     |
//! |--------------------|-------------------------------------------|-------|-------|-------------------------|
//! | `PseudoHuber`      | `sqrt(s^2 + |z|^2) - s`                   | 1     | 1/s   | `R^2`                   |
//! | `SoftAbs`          | `sum_i sqrt(s^2 + z_i^2) - s`             | √n    | 1/s   | `(2 √n R + n s)^2`      |
//! | `LinearSaturating` | `s ln cosh(|z| / s)`                      | 1     | 1/s   | `R^2`                   |
//! | `Mixture`          | convex combination of the three above     | Σ w l | Σ w L | max K over used members |
//!
//! `R` bounds the centers of the sequence. `Quadratic`, `Linear` and
//! `Constant` are test functions for the smoothing and moment checks; they
//! violate the bounded-gradient or radial assumptions and [`constants`]
//! refuses them.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::action::{dot, ActionError, ActionVector};
use crate::rng::{self, StreamRng};

/// Reported `K` when the certified value would be zero (`K > 0` is required).
pub const K_FLOOR: f64 = 1e-6;

/// Angular speed of the rotating drift.
pub const ROTATION_SPEED: f64 = 0.1;

/// Per-round step of the seeded random walk, relative to the center bound.
const WALK_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error(transparent)]
    Dimension(#[from] ActionError),
    #[error("{0} is a test function and does not satisfy the regret assumptions")]
    Inadmissible(CostFamily),
    #[error("invalid cost parameters: {0}")]
    InvalidParameters(String),
}

/// Family tag, used in configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostFamily {
    PseudoHuber,
    SoftAbs,
    LinearSaturating,
    Mixture,
    Quadratic,
    Linear,
    Constant,
}

impl CostFamily {
    pub fn is_admissible(self) -> bool {
        matches!(
            self,
            CostFamily::PseudoHuber | CostFamily::SoftAbs | CostFamily::LinearSaturating | CostFamily::Mixture
        )
    }
}

impl fmt::Display for CostFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

/// Concrete functional form, with any family-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CostShape {
    PseudoHuber,
    SoftAbs,
    LinearSaturating,
    /// Weights over `[PseudoHuber, SoftAbs, LinearSaturating]`.
    Mixture { weights: [f64; 3] },
    /// `|z|^2 / (2 s)`.
    Quadratic,
    /// `(g, z)`.
    Linear { gradient: ActionVector },
    Constant { value: f64 },
}

impl CostShape {
    pub fn family(&self) -> CostFamily {
        match self {
            CostShape::PseudoHuber => CostFamily::PseudoHuber,
            CostShape::SoftAbs => CostFamily::SoftAbs,
            CostShape::LinearSaturating => CostFamily::LinearSaturating,
            CostShape::Mixture { .. } => CostFamily::Mixture,
            CostShape::Quadratic => CostFamily::Quadratic,
            CostShape::Linear { .. } => CostFamily::Linear,
            CostShape::Constant { .. } => CostFamily::Constant,
        }
    }

    pub fn equal_mixture() -> Self {
        CostShape::Mixture { weights: [1.0 / 3.0; 3] }
    }

    fn validate(&self, n: usize) -> Result<(), CostError> {
        match self {
            CostShape::Mixture { weights } => {
                let sum: f64 = weights.iter().sum();
                if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(CostError::InvalidParameters(format!(
                        "mixture weights must be non-negative and sum to 1, got {weights:?}"
                    )));
                }
                Ok(())
            }
            CostShape::Linear { gradient } => Ok(gradient.check_dim(n)?),
            CostShape::Constant { value } if !value.is_finite() => {
                Err(CostError::InvalidParameters("constant value must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Value and gradient access to a single round's cost.
///
/// The learner never sees this trait; it only receives cost values through
/// [`crate::optimizer::RoundFeedback`].
pub trait CostFunction {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// One round's cost `c_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostInstance {
    pub shape: CostShape,
    pub center: ActionVector,
    pub scale: f64,
    pub round: u64,
}

impl CostInstance {
    pub fn new(shape: CostShape, center: ActionVector, scale: f64, round: u64) -> Result<Self, CostError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CostError::InvalidParameters(format!("scale must be positive, got {scale}")));
        }
        shape.validate(center.dim())?;
        Ok(Self { shape, center, scale, round })
    }

    pub fn pseudo_huber(center: ActionVector) -> Self {
        Self::new(CostShape::PseudoHuber, center, 1.0, 1).expect("unit scale is valid")
    }

    pub fn quadratic(center: ActionVector) -> Self {
        Self::new(CostShape::Quadratic, center, 1.0, 1).expect("unit scale is valid")
    }

    pub fn linear(gradient: ActionVector) -> Self {
        let n = gradient.dim();
        Self::new(CostShape::Linear { gradient }, ActionVector::zeros(n), 1.0, 1).expect("dims agree")
    }

    pub fn constant(value: f64, n: usize) -> Self {
        Self::new(CostShape::Constant { value }, ActionVector::zeros(n), 1.0, 1).expect("finite constant")
    }

    pub fn family(&self) -> CostFamily {
        self.shape.family()
    }

    /// `c_t(x)`.
    pub fn evaluate(&self, x: &ActionVector) -> Result<f64, CostError> {
        x.check_dim(self.dim())?;
        Ok(self.value(x.as_slice()))
    }

    /// Exact `grad c_t(x)`. Harness and oracle use only.
    pub fn true_gradient(&self, x: &ActionVector) -> Result<ActionVector, CostError> {
        x.check_dim(self.dim())?;
        Ok(ActionVector::from_vec_unchecked(self.gradient(x.as_slice())))
    }
}

impl CostFunction for CostInstance {
    fn dim(&self) -> usize {
        self.center.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(self.center.as_slice()).map(|(a, b)| a - b).collect();
        shape_value(&self.shape, &z, self.scale)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x.iter().zip(self.center.as_slice()).map(|(a, b)| a - b).collect();
        shape_gradient(&self.shape, &z, self.scale)
    }
}

fn pseudo_huber_value(z: &[f64], s: f64) -> f64 {
    let r2 = dot(z, z);
    // sqrt(s^2 + r^2) - s without cancellation near the center
    r2 / ((s * s + r2).sqrt() + s)
}

fn soft_abs_value(z: &[f64], s: f64) -> f64 {
    z.iter().map(|zi| zi * zi / ((s * s + zi * zi).sqrt() + s)).sum()
}

fn ln_cosh(y: f64) -> f64 {
    let y = y.abs();
    if y < 20.0 {
        let h = (0.5 * y).sinh();
        (2.0 * h * h).ln_1p()
    } else {
        y - std::f64::consts::LN_2 + (-2.0 * y).exp().ln_1p()
    }
}

fn linear_saturating_value(z: &[f64], s: f64) -> f64 {
    s * ln_cosh(dot(z, z).sqrt() / s)
}

fn shape_value(shape: &CostShape, z: &[f64], s: f64) -> f64 {
    match shape {
        CostShape::PseudoHuber => pseudo_huber_value(z, s),
        CostShape::SoftAbs => soft_abs_value(z, s),
        CostShape::LinearSaturating => linear_saturating_value(z, s),
        CostShape::Mixture { weights } => {
            weights[0] * pseudo_huber_value(z, s)
                + weights[1] * soft_abs_value(z, s)
                + weights[2] * linear_saturating_value(z, s)
        }
        CostShape::Quadratic => 0.5 * dot(z, z) / s,
        CostShape::Linear { gradient } => dot(gradient.as_slice(), z),
        CostShape::Constant { value } => *value,
    }
}

fn add_scaled(out: &mut [f64], w: f64, g: &[f64]) {
    for (o, gi) in out.iter_mut().zip(g) {
        *o += w * gi;
    }
}

fn pseudo_huber_gradient(z: &[f64], s: f64) -> Vec<f64> {
    let d = (s * s + dot(z, z)).sqrt();
    z.iter().map(|zi| zi / d).collect()
}

fn soft_abs_gradient(z: &[f64], s: f64) -> Vec<f64> {
    z.iter().map(|zi| zi / (s * s + zi * zi).sqrt()).collect()
}

fn linear_saturating_gradient(z: &[f64], s: f64) -> Vec<f64> {
    let r = dot(z, z).sqrt();
    if r == 0.0 {
        return vec![0.0; z.len()];
    }
    let k = (r / s).tanh() / r;
    z.iter().map(|zi| k * zi).collect()
}

fn shape_gradient(shape: &CostShape, z: &[f64], s: f64) -> Vec<f64> {
    match shape {
        CostShape::PseudoHuber => pseudo_huber_gradient(z, s),
        CostShape::SoftAbs => soft_abs_gradient(z, s),
        CostShape::LinearSaturating => linear_saturating_gradient(z, s),
        CostShape::Mixture { weights } => {
            let mut out = vec![0.0; z.len()];
            add_scaled(&mut out, weights[0], &pseudo_huber_gradient(z, s));
            add_scaled(&mut out, weights[1], &soft_abs_gradient(z, s));
            add_scaled(&mut out, weights[2], &linear_saturating_gradient(z, s));
            out
        }
        CostShape::Quadratic => z.iter().map(|zi| zi / s).collect(),
        CostShape::Linear { gradient } => gradient.as_slice().to_vec(),
        CostShape::Constant { .. } => vec![0.0; z.len()],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drift {
    /// `theta_t = R (1, ..., 1) / sqrt(n)` for every round.
    Fixed,
    /// `theta_t = R (cos wt, sin wt, 0, ...)`, `w = 0.1`.
    RotatingDeterministic,
    /// Gaussian random walk projected onto the ball of radius `R`, starting at the origin.
    SeededRandomWalk,
}

/// An oblivious cost sequence `c_1, c_2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSequenceSpec {
    pub shape: CostShape,
    pub dimension: usize,
    pub center_bound: f64,
    pub drift: Drift,
    pub seed: u64,
    pub scale: f64,
}

/// Certified uniform constants `(l, L, K)` of an admissible sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConstants {
    /// Uniform gradient-norm bound.
    pub l: f64,
    /// Uniform Lipschitz constant of the gradient.
    #[serde(rename = "L")]
    pub lipschitz: f64,
    /// Radius-squared beyond which `(x, grad c_t(x)) > 0`.
    #[serde(rename = "K")]
    pub k: f64,
}

impl CostSequenceSpec {
    pub fn new(
        shape: CostShape,
        dimension: usize,
        center_bound: f64,
        drift: Drift,
        seed: u64,
    ) -> Result<Self, CostError> {
        let spec = Self { shape, dimension, center_bound, drift, seed, scale: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self, CostError> {
        self.scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.dimension == 0 {
            return Err(CostError::InvalidParameters("dimension must be at least 1".into()));
        }
        if !(self.center_bound >= 0.0 && self.center_bound.is_finite()) {
            return Err(CostError::InvalidParameters(format!(
                "center bound must be finite and non-negative, got {}",
                self.center_bound
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(CostError::InvalidParameters(format!("scale must be positive, got {}", self.scale)));
        }
        self.shape.validate(self.dimension)
    }

    pub fn family(&self) -> CostFamily {
        self.shape.family()
    }

    /// True when every round has the same cost function.
    pub fn is_stationary(&self) -> bool {
        self.drift == Drift::Fixed || self.center_bound == 0.0
    }

    fn fixed_center(&self) -> Vec<f64> {
        let c = self.center_bound / (self.dimension as f64).sqrt();
        vec![c; self.dimension]
    }

    fn instance(&self, center: Vec<f64>, round: u64) -> CostInstance {
        CostInstance {
            shape: self.shape.clone(),
            center: ActionVector::from_vec_unchecked(center),
            scale: self.scale,
            round,
        }
    }
}

fn family_constants(family: CostFamily, n: usize, r: f64, s: f64) -> Option<(f64, f64, f64)> {
    match family {
        CostFamily::PseudoHuber | CostFamily::LinearSaturating => Some((1.0, 1.0 / s, r * r)),
        CostFamily::SoftAbs => {
            let nf = n as f64;
            let radius = 2.0 * nf.sqrt() * r + nf * s;
            Some((nf.sqrt(), 1.0 / s, radius * radius))
        }
        _ => None,
    }
}

/// Certified `(l, L, K)` holding uniformly over the whole sequence.
pub fn constants(spec: &CostSequenceSpec) -> Result<CostConstants, CostError> {
    let (n, r, s) = (spec.dimension, spec.center_bound, spec.scale);
    let (l, lipschitz, k) = match &spec.shape {
        CostShape::Mixture { weights } => {
            let members = [CostFamily::PseudoHuber, CostFamily::SoftAbs, CostFamily::LinearSaturating];
            let mut acc = (0.0, 0.0, 0.0f64);
            for (w, fam) in weights.iter().zip(members) {
                if *w > 0.0 {
                    let (l, lc, k) = family_constants(fam, n, r, s).expect("admissible member");
                    acc = (acc.0 + w * l, acc.1 + w * lc, acc.2.max(k));
                }
            }
            acc
        }
        shape => family_constants(shape.family(), n, r, s).ok_or(CostError::Inadmissible(shape.family()))?,
    };
    Ok(CostConstants { l, lipschitz, k: if k > 0.0 { k } else { K_FLOOR } })
}

/// Generates `c_t` from scratch. Deterministic in `(spec, t)`; the random
/// walk costs `O(t)` here, so sequential consumers should use [`CostSequence`].
///
/// # Panics
///
/// If `t == 0`.
pub fn generate_round(spec: &CostSequenceSpec, t: u64) -> CostInstance {
    assert!(t >= 1, "rounds are 1-indexed");
    match spec.drift {
        Drift::SeededRandomWalk => {
            let mut seq = CostSequence::new(spec.clone());
            let mut last = None;
            while seq.next_round <= t {
                last = Some(seq.next_instance());
            }
            last.expect("t >= 1")
        }
        _ => spec.instance(deterministic_center(spec, t), t),
    }
}

fn deterministic_center(spec: &CostSequenceSpec, t: u64) -> Vec<f64> {
    match spec.drift {
        Drift::Fixed => spec.fixed_center(),
        Drift::RotatingDeterministic => {
            let angle = ROTATION_SPEED * t as f64;
            let mut c = vec![0.0; spec.dimension];
            c[0] = spec.center_bound * angle.cos();
            if spec.dimension > 1 {
                c[1] = spec.center_bound * angle.sin();
            }
            c
        }
        Drift::SeededRandomWalk => unreachable!("random walk is sequential"),
    }
}

/// Sequential generator producing `c_1, c_2, ...` in O(1) per round.
#[derive(Debug, Clone)]
pub struct CostSequence {
    spec: CostSequenceSpec,
    next_round: u64,
    walk: Option<(Vec<f64>, StreamRng)>,
}

impl CostSequence {
    pub fn new(spec: CostSequenceSpec) -> Self {
        let walk = (spec.drift == Drift::SeededRandomWalk)
            .then(|| (vec![0.0; spec.dimension], rng::stream(spec.seed, rng::COST_DRIFT_STREAM)));
        Self { spec, next_round: 1, walk }
    }

    pub fn spec(&self) -> &CostSequenceSpec {
        &self.spec
    }

    pub fn next_instance(&mut self) -> CostInstance {
        let t = self.next_round;
        self.next_round += 1;
        let center = match &mut self.walk {
            Some((pos, rng)) => {
                let r = self.spec.center_bound;
                let step = WALK_STEP * r / (self.spec.dimension as f64).sqrt();
                for p in pos.iter_mut() {
                    let g: f64 = StandardNormal.sample(rng);
                    *p += step * g;
                }
                let norm = dot(pos, pos).sqrt();
                if norm > r {
                    let k = r / norm;
                    pos.iter_mut().for_each(|p| *p *= k);
                }
                pos.clone()
            }
            None => deterministic_center(&self.spec, t),
        };
        self.spec.instance(center, t)
    }
}

impl Iterator for CostSequence {
    type Item = CostInstance;
    fn next(&mut self) -> Option<CostInstance> {
        Some(self.next_instance())
    }
}
