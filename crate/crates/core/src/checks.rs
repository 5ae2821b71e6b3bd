//! Built-in verification suites run by `gauss-bandit check`.
//!
//! Budgets are fixed so that a run takes seconds in a release build and is
//! reproducible for a given seed:
//!
//! | suite       | check                                  | budget                         |
//! |-------------|----------------------------------------|--------------------------------|
//! | smoothing   | linear smoothing exact                 | 64-node quadrature, n = 3      |
//! | smoothing   | quadratic gap tight                    | 64-node quadrature, n = 2      |
//! | smoothing   | smoothing gap bound                    | 10 random points, n = 1..3     |
//! | smoothing   | one-/two-point estimator unbiased      | 200 000 samples, n = 2         |
//! | moments     | linear second moments (3 and 6)        | 200 000 samples                |
//! | moments     | moment ordering                        | 100 000 samples, both modes    |
//! | moments     | sigma scaling (one- and two-point)     | 100 000 samples per sigma      |
//! | moments     | two-point dimension scaling            | 100 000 samples, n = 2, 8, 32  |
//! | boundedness | both modes, near and far start         | T = 20 000, 5 seeds            |

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::action::ActionVector;
use crate::config::{CostConfig, ExperimentConfig, InitialMean};
use crate::costs::{CostFamily, CostFunction, CostInstance};
use crate::diagnostics::{estimate_noise_moments, fit_sigma_scaling, monitor_boundedness};
use crate::rng::StreamRng;
use crate::schedule::FeedbackMode;
use crate::smoothing::{smoothed_cost, smoothed_gradient, verify_smoothing_gap, verify_unbiasedness, SmoothedQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CheckScope {
    Smoothing,
    Moments,
    Boundedness,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub suite: String,
    pub property: String,
    pub detail: String,
    pub passed: bool,
}

impl CheckRow {
    fn new(suite: &str, property: &str, passed: bool, detail: String) -> Self {
        Self { suite: suite.into(), property: property.into(), detail, passed }
    }

    fn error(suite: &str, property: &str, e: impl std::fmt::Display) -> Self {
        Self::new(suite, property, false, format!("error: {e}"))
    }
}

const UNBIASED_SAMPLES: usize = 200_000;
const MOMENT_SAMPLES: usize = 100_000;
const SIGMA_GRID: [f64; 4] = [0.5, 0.25, 0.125, 0.0625];
const BOUNDED_HORIZON: u64 = 20_000;
const BOUNDED_SEEDS: u64 = 5;

/// Valid schedules used by the boundedness suite.
pub const BOUNDED_ONE_POINT: (f64, f64) = (0.9, 0.05);
pub const BOUNDED_TWO_POINT: (f64, f64) = (0.5, 0.25);

fn vector(v: Vec<f64>) -> ActionVector {
    ActionVector::new(v).expect("finite coordinates")
}

fn random_point(r: &mut StreamRng, n: usize, radius: f64) -> ActionVector {
    vector((0..n).map(|_| radius * (2.0 * r.random::<f64>() - 1.0)).collect())
}

fn smoothing_suite(seed: u64) -> Vec<CheckRow> {
    const S: &str = "smoothing";
    let mut rows = Vec::new();
    let mut r = StreamRng::seed_from_u64(seed);

    let lin = CostInstance::linear(vector(vec![0.3, -1.2, 0.5]));
    let mu = vector(vec![0.7, 0.1, -2.0]);
    let q = SmoothedQuery::quadrature(mu.clone(), 0.6, 64);
    rows.push(match (smoothed_cost(&lin, &q), smoothed_gradient(&lin, &q)) {
        (Ok(v), Ok(g)) => {
            let dv = (v.value - lin.value(mu.as_slice())).abs();
            let dg = g.vector.as_slice().iter().zip([0.3, -1.2, 0.5]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            CheckRow::new(S, "linear smoothing exact", dv < 1e-12 && dg < 1e-12, format!("|dc|={dv:.1e} |dg|={dg:.1e}"))
        }
        (Err(e), _) | (_, Err(e)) => CheckRow::error(S, "linear smoothing exact", e),
    });

    let quad = CostInstance::quadratic(vector(vec![0.5, -0.5]));
    let sigma = 0.4;
    rows.push(match verify_smoothing_gap(&quad, &vector(vec![1.0, 2.0]), sigma, 1.0) {
        Ok(g) => {
            let want = 2.0 * sigma * sigma / 2.0;
            let err = (g.gap - want).abs();
            CheckRow::new(S, "quadratic gap tight", err < 1e-10, format!("gap={:.12} bound={want:.12}", g.gap))
        }
        Err(e) => CheckRow::error(S, "quadratic gap tight", e),
    });

    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..10 {
        let n = 1 + i % 3;
        let c = CostInstance::pseudo_huber(random_point(&mut r, n, 1.0));
        let mu = random_point(&mut r, n, 2.0);
        let sigma = 0.1 + 0.9 * r.random::<f64>();
        match verify_smoothing_gap(&c, &mu, sigma, 1.0) {
            Ok(g) => {
                ok &= g.ok;
                worst = worst.max(g.gap / g.bound);
            }
            Err(_) => ok = false,
        }
    }
    rows.push(CheckRow::new(S, "smoothing gap bound", ok, format!("max gap/bound={worst:.4}")));

    for mode in [FeedbackMode::OnePoint, FeedbackMode::TwoPoint] {
        let property = match mode {
            FeedbackMode::OnePoint => "one-point estimator unbiased",
            FeedbackMode::TwoPoint => "two-point estimator unbiased",
        };
        let c = CostInstance::pseudo_huber(random_point(&mut r, 2, 1.0));
        let mu = random_point(&mut r, 2, 1.5);
        let sigma = 0.1 + 0.9 * r.random::<f64>();
        rows.push(match verify_unbiasedness(&c, &mu, sigma, mode, UNBIASED_SAMPLES, seed) {
            Ok(rep) => CheckRow::new(S, property, rep.passed(), format!("max|z|={:.3}", rep.max_abs_z())),
            Err(e) => CheckRow::error(S, property, e),
        });
    }
    rows
}

fn moments_suite(seed: u64) -> Vec<CheckRow> {
    const S: &str = "moments";
    let mut rows = Vec::new();

    let cases = [
        ("linear two-point second moment", CostInstance::linear(vector(vec![0.6, 0.8])), vector(vec![0.3, -1.0]), 0.7, FeedbackMode::TwoPoint, 3.0),
        ("linear one-point second moment", CostInstance::linear(vector(vec![1.0])), vector(vec![1.0]), 0.5, FeedbackMode::OnePoint, 6.0),
    ];
    for (property, c, mu, sigma, mode, want) in cases {
        rows.push(match estimate_noise_moments(&c, &mu, sigma, mode, 2 * MOMENT_SAMPLES, seed) {
            Ok(rep) => {
                let z = rep.m2_z(want);
                CheckRow::new(S, property, z < 4.0, format!("m2={:.4} want={want} |z|={z:.2}", rep.m2))
            }
            Err(e) => CheckRow::error(S, property, e),
        });
    }

    let ph = CostInstance::pseudo_huber(ActionVector::zeros(2));
    let far = vector(vec![2.0f64.sqrt(), 2.0f64.sqrt()]);
    let mut ok = true;
    let mut detail = Vec::new();
    for mode in [FeedbackMode::OnePoint, FeedbackMode::TwoPoint] {
        match estimate_noise_moments(&ph, &far, 0.3, mode, MOMENT_SAMPLES, seed) {
            Ok(rep) => {
                let o = rep.ordering();
                ok &= o.holds;
                detail.push(format!("{mode}: {:.3}<={:.3}<={:.3}", o.roots[0], o.roots[1], o.roots[2]));
            }
            Err(e) => {
                ok = false;
                detail.push(e.to_string());
            }
        }
    }
    rows.push(CheckRow::new(S, "moment ordering", ok, detail.join("; ")));

    for (mode, lo, hi) in [(FeedbackMode::OnePoint, -2.2, -1.8), (FeedbackMode::TwoPoint, -0.2, 0.2)] {
        let property = match mode {
            FeedbackMode::OnePoint => "one-point sigma scaling",
            FeedbackMode::TwoPoint => "two-point sigma scaling",
        };
        rows.push(match fit_sigma_scaling(&ph, &far, mode, &SIGMA_GRID, MOMENT_SAMPLES, seed) {
            Ok(f) => CheckRow::new(S, property, f.slope >= lo && f.slope <= hi, format!("slope={:.3} in [{lo}, {hi}]", f.slope)),
            Err(e) => CheckRow::error(S, property, e),
        });
    }

    let mut per_dim = Vec::new();
    for n in [2usize, 8, 32] {
        let mut g = vec![0.0; n];
        g[0] = 1.0;
        let c = CostInstance::linear(vector(g));
        match estimate_noise_moments(&c, &ActionVector::zeros(n), 0.5, FeedbackMode::TwoPoint, MOMENT_SAMPLES, seed) {
            Ok(rep) => per_dim.push(rep.m2 / n as f64),
            Err(e) => {
                rows.push(CheckRow::error(S, "two-point dimension scaling", e));
                return rows;
            }
        }
    }
    let ratio = per_dim.iter().cloned().fold(0.0, f64::max) / per_dim.iter().cloned().fold(f64::INFINITY, f64::min);
    rows.push(CheckRow::new(
        S,
        "two-point dimension scaling",
        ratio <= 3.0,
        format!("m2/n = {:.3}, {:.3}, {:.3}; ratio {ratio:.3}", per_dim[0], per_dim[1], per_dim[2]),
    ));
    rows
}

/// PseudoHuber config with center radius 1 used by the boundedness checks.
pub fn boundedness_config(mode: FeedbackMode, far_start: bool) -> ExperimentConfig {
    let (a, b) = match mode {
        FeedbackMode::OnePoint => BOUNDED_ONE_POINT,
        FeedbackMode::TwoPoint => BOUNDED_TWO_POINT,
    };
    let n = 2;
    let mut c = ExperimentConfig::new(mode, n, a, b, BOUNDED_HORIZON, CostConfig::new(CostFamily::PseudoHuber));
    if far_start {
        // 10 sqrt(K) with K = R^2 = 1
        c.mu0 = InitialMean::Explicit(vector(vec![10.0 / (n as f64).sqrt(); n]));
    }
    c
}

fn boundedness_suite(seed: u64) -> Vec<CheckRow> {
    const S: &str = "boundedness";
    let mut rows = Vec::new();
    for mode in [FeedbackMode::OnePoint, FeedbackMode::TwoPoint] {
        for far in [false, true] {
            let property = format!("{mode} iterates bounded ({} start)", if far { "far" } else { "near" });
            let mut c = boundedness_config(mode, far);
            c.seed = seed;
            rows.push(match monitor_boundedness(&c, BOUNDED_HORIZON, BOUNDED_SEEDS) {
                Ok(r) => CheckRow::new(
                    S,
                    &property,
                    r.passed(),
                    format!("max|mu|={:.3} threshold={} aborts={}", r.max_norm, r.threshold, r.aborted_episodes),
                ),
                Err(e) => CheckRow::error(S, &property, e),
            });
        }
    }
    rows
}

pub fn run_checks(scope: CheckScope, seed: u64) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    if matches!(scope, CheckScope::Smoothing | CheckScope::All) {
        rows.extend(smoothing_suite(seed));
    }
    if matches!(scope, CheckScope::Moments | CheckScope::All) {
        rows.extend(moments_suite(seed));
    }
    if matches!(scope, CheckScope::Boundedness | CheckScope::All) {
        rows.extend(boundedness_suite(seed));
    }
    rows
}

pub fn format_table(rows: &[CheckRow]) -> String {
    let w_suite = rows.iter().map(|r| r.suite.len()).max().unwrap_or(0).max(5);
    let w_prop = rows.iter().map(|r| r.property.len()).max().unwrap_or(0).max(8);
    let mut out = format!("{:<w_suite$}  {:<w_prop$}  {:<6}  detail\n", "suite", "property", "result");
    for r in rows {
        let verdict = if r.passed { "pass" } else { "FAIL" };
        out.push_str(&format!("{:<w_suite$}  {:<w_prop$}  {:<6}  {}\n", r.suite, r.property, verdict, r.detail));
    }
    out
}
