//! Simulators and independent brute-force oracles shared by the unit tests,
//! the acceptance suite, and the `selftest` CLI command. Oracles deliberately
//! avoid the estimation code paths they are checking.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::models::{cox, weibull};

/// Exponential survival times with hazard multiplier `exp(beta * x)` and
/// uniform sub-censoring.
pub fn simulate_cox(
    n: usize,
    beta: f64,
    censor_frac: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut time = Vec::new();
    let mut event = Vec::new();
    let mut x = Vec::new();
    for _ in 0..n {
        let xi = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let u: f64 = rng.random();
        let t = -u.ln() / (beta * xi).exp();
        let censored = rng.random::<f64>() < censor_frac;
        time.push(if censored { t * rng.random::<f64>() } else { t });
        event.push(if censored { 0.0 } else { 1.0 });
        x.push(xi);
    }
    (time, event, x)
}

/// Independent bisection solve of the Cox partial-score equation.
pub fn cox_bisection_oracle(time: &[f64], event: &[f64], x: &[f64]) -> f64 {
    let score = |b: f64| cox::partial_loglik(time, event, x, b).1;
    let (mut lo, mut hi) = (-20.0, 20.0);
    assert!(score(lo) > 0.0 && score(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Weibull AFT times via the inverse minimum-extreme-value CDF, with uniform
/// sub-censoring.
pub fn simulate_weibull(
    n: usize,
    a1: f64,
    b: f64,
    a2: f64,
    censor_frac: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let u: f64 = rng.random();
        let w = (-(1.0 - u).ln()).ln();
        let t = (a1 + b * xi + a2 * w).exp();
        let censored = rng.random::<f64>() < censor_frac;
        let obs = if censored { t * rng.random::<f64>() } else { t };
        time.push(obs.max(1e-9));
        event.push(if censored { 0.0 } else { 1.0 });
        x.push(xi);
    }
    (time, event, x)
}

/// 3-D grid-refinement maximizer of the summed Weibull log-likelihood,
/// independent of the Newton path.
pub fn weibull_grid_oracle(time: &[f64], event: &[f64], x: &[f64]) -> [f64; 3] {
    let total = |a1: f64, b: f64, a2: f64| -> f64 {
        time.iter()
            .zip(event)
            .zip(x)
            .map(|((&t, &d), &xi)| weibull::row_loglik(t, d, xi, &[a1, b, a2]))
            .sum()
    };
    let mut center = [0.0_f64, 0.0, 1.0];
    let mut half = [3.0_f64, 3.0, 2.0];
    for _ in 0..40 {
        let mut best = (f64::NEG_INFINITY, center);
        let m = 7;
        for ia in 0..m {
            for ib in 0..m {
                for ic in 0..m {
                    let a1 = center[0] - half[0] + 2.0 * half[0] * ia as f64 / (m - 1) as f64;
                    let b = center[1] - half[1] + 2.0 * half[1] * ib as f64 / (m - 1) as f64;
                    let la2 = center[2] - half[2] + 2.0 * half[2] * ic as f64 / (m - 1) as f64;
                    let v = total(a1, b, la2.exp());
                    if v > best.0 {
                        best = (v, [a1, b, la2]);
                    }
                }
            }
        }
        center = best.1;
        for h in half.iter_mut() {
            *h *= 0.45;
        }
    }
    [center[0], center[1], center[2].exp()]
}
