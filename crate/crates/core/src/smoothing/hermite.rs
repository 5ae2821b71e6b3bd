//! Gauss–Hermite rules for expectations under the standard normal.
//!
//! Nodes come from Newton iteration on the orthonormal Hermite recurrence
//! (physicists' weight `exp(-x^2)`), then get rescaled so that
//! `E[f(Z)] ≈ Σ w_i f(z_i)` for `Z ~ N(0, 1)`.

use std::f64::consts::PI;

const PI_M4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
const NEWTON_TOL: f64 = 3e-14;
const MAX_NEWTON: usize = 100;

/// Standard-normal quadrature rule with `nodes.len()` points.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    /// # Panics
    ///
    /// If `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "a quadrature rule needs at least one node");
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            for _ in 0..MAX_NEWTON {
                let (p1, p2) = orthonormal_hermite(n, z);
                let z1 = z;
                z = z1 - p1 / ((2.0 * nf).sqrt() * p2);
                if (z - z1).abs() <= NEWTON_TOL {
                    break;
                }
            }
            let (_, p2) = orthonormal_hermite(n, z);
            let pp = (2.0 * nf).sqrt() * p2;
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[m - 1] = 0.0;
        }
        let sqrt_pi = PI.sqrt();
        Self {
            nodes: x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v / sqrt_pi).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(*z)).sum()
    }
}

/// Returns `(h_n(z), h_{n-1}(z))` of the orthonormal Hermite functions without
/// the Gaussian factor.
fn orthonormal_hermite(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI_M4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, p2)
}
