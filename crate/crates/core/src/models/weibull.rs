//! Weibull accelerated failure time model for right-censored survival times:
//! `P(Y <= y | x) = F((log y - alpha1 - beta * x) / alpha2)` with
//! `F(z) = 1 - exp(-exp(z))` (minimum extreme value CDF). Both alpha1 and the
//! scale alpha2 form the intercept block because together they define the
//! shape of the baseline hazard. Fitted internally in `(alpha1, beta,
//! log alpha2)` for stability.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{require_both_arms, ModelFit};
use crate::numerics::{newton_maximize, ObjectiveBundle, DEFAULT_TOL};

/// Per-row log-likelihood at `(alpha1, beta, alpha2)`.
pub fn row_loglik(t: f64, event: f64, x: f64, theta: &[f64]) -> f64 {
    let (a1, b, a2) = (theta[0], theta[1], theta[2]);
    if a2 <= 0.0 || t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = (t.ln() - a1 - b * x) / a2;
    let w = z.exp();
    if event > 0.5 {
        -a2.ln() - t.ln() + z - w
    } else {
        -w
    }
}

/// Per-row score in the original `(alpha1, beta, alpha2)` parametrization.
fn row_score(t: f64, event: f64, x: f64, a1: f64, b: f64, a2: f64) -> [f64; 3] {
    let z = (t.ln() - a1 - b * x) / a2;
    let w = z.exp();
    let u = w - event;
    [u / a2, x * u / a2, (z * u - event) / a2]
}

pub fn fit(time: &[f64], event: &[f64], x: &[f64]) -> Result<ModelFit> {
    let n = time.len();
    if n != event.len() || n != x.len() {
        return Err(Error::Degenerate("input length mismatch".into()));
    }
    require_both_arms(x)?;
    let n_events = event.iter().filter(|&&d| d > 0.5).count();
    if n_events == 0 {
        return Err(Error::Inestimable("no events observed".into()));
    }
    if time.iter().any(|&t| t <= 0.0) {
        return Err(Error::Degenerate("nonpositive survival time".into()));
    }

    // internal parametrization (a1, b, s = log alpha2)
    let bundle = |theta: &DVector<f64>| {
        let (a1, b, s) = (theta[0], theta[1], theta[2]);
        let a2 = s.exp();
        let mut value = 0.0;
        let mut g = DVector::zeros(3);
        let mut h = DMatrix::zeros(3, 3);
        for i in 0..n {
            let d = event[i];
            let z = (time[i].ln() - a1 - b * x[i]) / a2;
            let w = z.exp();
            let u = w - d;
            value += if d > 0.5 {
                -s - time[i].ln() + z - w
            } else {
                -w
            };
            g[0] += u / a2;
            g[1] += x[i] * u / a2;
            g[2] += z * u - d;
            let a2sq = a2 * a2;
            h[(0, 0)] -= w / a2sq;
            h[(0, 1)] -= w * x[i] / a2sq;
            h[(1, 1)] -= w * x[i] * x[i] / a2sq;
            let mix = (w * z + u) / a2;
            h[(0, 2)] -= mix;
            h[(1, 2)] -= x[i] * mix;
            h[(2, 2)] -= z * u + z * z * w;
        }
        h[(1, 0)] = h[(0, 1)];
        h[(2, 0)] = h[(0, 2)];
        h[(2, 1)] = h[(1, 2)];
        ObjectiveBundle {
            value,
            gradient: g,
            hessian: h,
        }
    };

    let log_t: Vec<f64> = time.iter().map(|t| t.ln()).collect();
    let mean_lt = log_t.iter().sum::<f64>() / n as f64;
    let sd_lt = (log_t.iter().map(|l| (l - mean_lt).powi(2)).sum::<f64>() / n as f64)
        .sqrt()
        .max(0.1);
    let init = DVector::from_vec(vec![mean_lt, 0.0, sd_lt.ln()]);
    let opt = newton_maximize(bundle, &init, DEFAULT_TOL, 200)?;
    let (a1, b, s) = (opt.theta_hat[0], opt.theta_hat[1], opt.theta_hat[2]);
    let a2 = s.exp();

    let theta = vec![
        ("alpha1".to_string(), a1),
        ("beta".to_string(), b),
        ("alpha2".to_string(), a2),
    ];
    let mut score = DMatrix::zeros(n, 3);
    let mut objective = 0.0;
    for i in 0..n {
        let sc = row_score(time[i], event[i], x[i], a1, b, a2);
        for j in 0..3 {
            score[(i, j)] = sc[j];
        }
        objective += row_loglik(time[i], event[i], x[i], &[a1, b, a2]);
    }

    // delta method from the internal information: d(orig)/d(internal) = diag(1, 1, a2)
    let final_bundle = bundle(&opt.theta_hat);
    let info_int = -final_bundle.hessian;
    let vcov = match info_int.clone().cholesky() {
        Some(ch) => {
            let vi = ch.inverse();
            let jac = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, a2]));
            &jac * vi * jac.transpose()
        }
        None => DMatrix::zeros(3, 3),
    };

    Ok(ModelFit {
        theta,
        score_matrix: score,
        score_names: vec!["alpha1".into(), "beta".into(), "alpha2".into()],
        alpha_cols: vec![0, 2],
        beta_cols: vec![1],
        vcov,
        objective,
        converged: opt.converged,
        ensemble: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{simulate_weibull as simulate, weibull_grid_oracle as grid_oracle};

    #[test]
    fn matches_grid_oracle() {
        let (t, d, x) = simulate(50, 1.0, -0.4, 0.8, 0.0, 42);
        let f = fit(&t, &d, &x).unwrap();
        assert!(f.converged);
        let oracle = grid_oracle(&t, &d, &x);
        assert!((f.param("alpha1").unwrap() - oracle[0]).abs() <= 1e-4);
        assert!((f.param("beta").unwrap() - oracle[1]).abs() <= 1e-4);
        assert!((f.param("alpha2").unwrap() - oracle[2]).abs() <= 1e-4);
    }

    #[test]
    fn identical_arms_beta_within_three_se() {
        let (t, d, x) = simulate(200, 1.5, 0.0, 1.0, 0.2, 7);
        let f = fit(&t, &d, &x).unwrap();
        let beta = f.param("beta").unwrap();
        let se = f.se("beta").unwrap();
        assert!(beta.abs() <= 3.0 * se, "beta {beta} se {se}");
    }

    #[test]
    fn scores_match_finite_differences_under_censoring() {
        use crate::numerics::finite_diff_gradient;
        let (t, d, x) = simulate(100, 0.5, 0.3, 0.7, 0.3, 3);
        let f = fit(&t, &d, &x).unwrap();
        let th: Vec<f64> = f.theta.iter().map(|(_, v)| *v).collect();
        for i in (0..100).step_by(9) {
            let g = finite_diff_gradient(
                |p: &DVector<f64>| row_loglik(t[i], d[i], x[i], &[p[0], p[1], p[2]]),
                &DVector::from_vec(th.clone()),
                1e-5,
            )
            .unwrap();
            for j in 0..3 {
                let a = f.score_matrix[(i, j)];
                let rel = (a - g[j]).abs() / a.abs().max(g[j].abs()).max(1.0);
                assert!(rel <= 1e-6, "row {i} col {j}: {a} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn zero_events_rejected() {
        let t = vec![1.0, 2.0, 3.0, 4.0];
        let d = vec![0.0; 4];
        let x = vec![0.0, 1.0, 0.0, 1.0];
        assert!(fit(&t, &d, &x).is_err());
    }
}
