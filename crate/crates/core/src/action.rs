//! Points of the unconstrained action space `R^n`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Index;

use crate::schedule::FeedbackMode;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActionError {
    #[error("action vector must have at least one coordinate")]
    Empty,
    #[error("coordinate {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// A finite point in `R^n`, `n >= 1`.
///
/// Holds query points `x_t`, mean iterates `mu_t` and comparators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionVector(Vec<f64>);

impl ActionVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, ActionError> {
        if coords.is_empty() {
            return Err(ActionError::Empty);
        }
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ActionError::NonFinite { index, value });
        }
        Ok(Self(coords))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "dimension must be positive");
        Self(vec![0.0; n])
    }

    /// Builds a vector without the finiteness check. Callers that may produce
    /// non-finite values must go through [`ActionVector::new`].
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty());
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &ActionVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn check_dim(&self, expected: usize) -> Result<(), ActionError> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(ActionError::DimensionMismatch { expected, actual: self.dim() })
        }
    }
}

impl Index<usize> for ActionVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ActionVector {
    type Error = ActionError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ActionVector> for Vec<f64> {
    fn from(v: ActionVector) -> Self {
        v.0
    }
}

impl fmt::Display for ActionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A realized estimator-noise sample (`xi_t` for one-point, `zeta_t` for two-point).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorNoise {
    pub vector: ActionVector,
    pub mode: FeedbackMode,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
