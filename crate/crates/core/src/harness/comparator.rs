use crate::action::ActionVector;
use crate::costs::{self, CostFamily, CostFunction, CostSequenceSpec};

use super::{HarnessError, RoundTable};

pub const COMPARATOR_GRAD_TOL: f64 = 1e-8;
pub const COMPARATOR_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorFit {
    pub point: ActionVector,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// Gradient Lipschitz constant used for the `1/L` step.
pub(crate) fn step_hint(spec: &CostSequenceSpec) -> f64 {
    match costs::constants(spec) {
        Ok(c) => c.lipschitz,
        Err(_) if spec.family() == CostFamily::Quadratic => 1.0 / spec.scale,
        Err(_) => 1.0,
    }
}

fn average_gradient(table: &RoundTable, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut slot = table.instance();
    let rounds = if table.is_stationary() { 1 } else { table.horizon() };
    for t in 1..=rounds {
        table.load(t, &mut slot);
        for (o, g) in out.iter_mut().zip(slot.gradient(x)) {
            *o += g;
        }
    }
    let k = rounds as f64;
    out.iter_mut().for_each(|v| *v /= k);
}

/// Minimizes `(1/T) sum_t c_t` by gradient descent with step `1/lipschitz`,
/// starting from the mean of the round centers.
pub fn fit_comparator(table: &RoundTable, lipschitz: f64) -> Result<ComparatorFit, HarnessError> {
    let n = table.dim();
    let rounds = if table.is_stationary() { 1 } else { table.horizon() };
    let mut x = vec![0.0; n];
    let mut slot = table.instance();
    for t in 1..=rounds {
        table.load(t, &mut slot);
        for (xi, ci) in x.iter_mut().zip(slot.center.as_slice()) {
            *xi += ci / rounds as f64;
        }
    }
    let step = 1.0 / lipschitz;
    let mut g = vec![0.0; n];
    let mut norm = f64::INFINITY;
    for iter in 0..=COMPARATOR_MAX_ITERS {
        average_gradient(table, &x, &mut g);
        norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= COMPARATOR_GRAD_TOL {
            return Ok(ComparatorFit { point: ActionVector::new(x).map_err(HarnessError::from_action)?, gradient_norm: norm, iterations: iter });
        }
        if !norm.is_finite() {
            break;
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
    }
    Err(HarnessError::ComparatorNotConverged { gradient_norm: norm, iterations: COMPARATOR_MAX_ITERS })
}

/// Approximate static minimizer of the average cost over rounds `1..=T`.
pub fn compute_comparator(spec: &CostSequenceSpec, horizon: u64) -> Result<ActionVector, HarnessError> {
    spec.validate()?;
    let table = RoundTable::generate(spec, horizon);
    Ok(fit_comparator(&table, step_hint(spec))?.point)
}

impl HarnessError {
    fn from_action(e: crate::action::ActionError) -> Self {
        HarnessError::Cost(e.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{CostInstance, CostShape, Drift};
    use rand::{Rng, SeedableRng};

    #[test]
    fn fixed_drift_returns_center() {
        let spec = CostSequenceSpec::new(CostShape::PseudoHuber, 3, 2.0, Drift::Fixed, 0).unwrap();
        let x = compute_comparator(&spec, 1000).unwrap();
        let c = 2.0 / 3f64.sqrt();
        for v in x.as_slice() {
            assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn rotating_full_period_is_origin() {
        // one full turn takes 2 pi / 0.1 ~ 63 rounds; use many turns
        let spec = CostSequenceSpec::new(CostShape::PseudoHuber, 2, 1.0, Drift::RotatingDeterministic, 0).unwrap();
        let horizon = 6283;
        let x = compute_comparator(&spec, horizon).unwrap();
        assert!(x.norm() < 1e-3, "{x}");
        // grid search cross-check
        let table = RoundTable::generate(&spec, horizon);
        let f0 = table.average_value(x.as_slice());
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in -20..=20 {
            for j in -20..=20 {
                let p = [i as f64 * 0.005, j as f64 * 0.005];
                let v = table.average_value(&p);
                if v < best.0 {
                    best = (v, p);
                }
            }
        }
        assert!(f0 <= best.0 + 1e-12);
        assert!((best.1[0] - x[0]).abs() <= 0.005 && (best.1[1] - x[1]).abs() <= 0.005);
    }

    #[test]
    fn rotating_exact_periods_is_origin_to_1e6() {
        // centers at angles 0.1 t; with the sum over full turns not closing
        // exactly, compare against the symmetric finite set instead
        let k = 64;
        let rounds: Vec<CostInstance> = (0..k)
            .map(|i| {
                let ang = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                CostInstance::pseudo_huber(ActionVector::new(vec![ang.cos(), ang.sin()]).unwrap())
            })
            .collect();
        let table = RoundTable::from_instances(&rounds).unwrap();
        let fit = fit_comparator(&table, 1.0).unwrap();
        assert!(fit.point.norm() < 1e-6);
    }

    #[test]
    fn two_symmetric_rounds() {
        let rounds = vec![
            CostInstance::pseudo_huber(ActionVector::new(vec![-1.0]).unwrap()),
            CostInstance::pseudo_huber(ActionVector::new(vec![1.0]).unwrap()),
        ];
        let fit = fit_comparator(&RoundTable::from_instances(&rounds).unwrap(), 1.0).unwrap();
        assert!(fit.point[0].abs() < 1e-9);
    }

    #[test]
    fn comparator_is_locally_optimal() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (drift, shape) in [
            (Drift::SeededRandomWalk, CostShape::PseudoHuber),
            (Drift::RotatingDeterministic, CostShape::SoftAbs),
            (Drift::SeededRandomWalk, CostShape::LinearSaturating),
        ] {
            let spec = CostSequenceSpec::new(shape, 3, 1.5, drift, 11).unwrap();
            let table = RoundTable::generate(&spec, 2000);
            let x = compute_comparator(&spec, 2000).unwrap();
            let f = table.average_value(x.as_slice());
            for _ in 0..100 {
                let d: Vec<f64> = (0..3).map(|_| r.random::<f64>() - 0.5).collect();
                let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                let p: Vec<f64> = x.as_slice().iter().zip(&d).map(|(xi, di)| xi + 0.01 * di / dn).collect();
                assert!(table.average_value(&p) >= f - 1e-6);
            }
        }
    }

    #[test]
    fn unbounded_cost_reports_gradient_norm() {
        let spec = CostSequenceSpec::new(
            CostShape::Linear { gradient: ActionVector::new(vec![1.0]).unwrap() },
            1,
            0.0,
            Drift::Fixed,
            0,
        )
        .unwrap();
        match compute_comparator(&spec, 10) {
            Err(HarnessError::ComparatorNotConverged { gradient_norm, .. }) => assert_eq!(gradient_norm, 1.0),
            other => panic!("{other:?}"),
        }
    }
}
