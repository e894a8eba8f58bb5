//! Gaussian GLM with log link and a fixed log-scale offset:
//! `E(Y | x) = exp(offset + alpha + beta * x)` with homoscedastic normal
//! errors, fitted by maximum likelihood. The error variance is a nuisance
//! parameter excluded from both score blocks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{require_both_arms, ModelFit};
use crate::numerics::{newton_maximize, ObjectiveBundle, DEFAULT_TOL};

pub fn fit(y: &[f64], offset_log: &[f64], x: &[f64]) -> Result<ModelFit> {
    let n = y.len();
    if n != offset_log.len() || n != x.len() {
        return Err(Error::Degenerate("input length mismatch".into()));
    }
    require_both_arms(x)?;
    if n < 4 {
        return Err(Error::Degenerate("too few rows".into()));
    }

    // (alpha, beta) minimize the residual sum of squares regardless of sigma2
    let rss_bundle = |theta: &DVector<f64>| {
        let (a, b) = (theta[0], theta[1]);
        let mut value = 0.0;
        let mut g = DVector::zeros(2);
        let mut h = DMatrix::zeros(2, 2);
        for i in 0..n {
            let mu = (offset_log[i] + a + b * x[i]).exp();
            let r = y[i] - mu;
            value -= 0.5 * r * r;
            let w = mu * (y[i] - 2.0 * mu);
            g[0] += r * mu;
            g[1] += r * mu * x[i];
            h[(0, 0)] += w;
            h[(0, 1)] += w * x[i];
            h[(1, 1)] += w * x[i] * x[i];
        }
        h[(1, 0)] = h[(0, 1)];
        ObjectiveBundle {
            value,
            gradient: g,
            hessian: h,
        }
    };
    let alpha0 = {
        let sy: f64 = y.iter().sum();
        let se: f64 = offset_log.iter().map(|o| o.exp()).sum();
        if sy > 0.0 && se > 0.0 {
            (sy / se).ln()
        } else {
            0.0
        }
    };
    let init = DVector::from_vec(vec![alpha0, 0.0]);
    let opt = newton_maximize(rss_bundle, &init, DEFAULT_TOL, 200)?;
    let (a, b) = (opt.theta_hat[0], opt.theta_hat[1]);

    let mu: Vec<f64> = (0..n).map(|i| (offset_log[i] + a + b * x[i]).exp()).collect();
    let rss: f64 = (0..n).map(|i| (y[i] - mu[i]).powi(2)).sum();
    let sigma2 = rss / n as f64;
    let theta = vec![
        ("alpha".to_string(), a),
        ("beta".to_string(), b),
        ("sigma2".to_string(), sigma2),
    ];

    let mut score = DMatrix::zeros(n, 2);
    let mut vcov = DMatrix::zeros(3, 3);
    let mut objective = 0.0;
    if sigma2 > 0.0 {
        for i in 0..n {
            let psi_a = (y[i] - mu[i]) * mu[i] / sigma2;
            score[(i, 0)] = psi_a;
            score[(i, 1)] = psi_a * x[i];
            objective += row_loglik(y[i], offset_log[i], x[i], &[a, b, sigma2]);
        }
        // observed information of (alpha, beta) at theta_hat
        let mut info = DMatrix::zeros(2, 2);
        for i in 0..n {
            let w = (mu[i] * mu[i] - (y[i] - mu[i]) * mu[i]) / sigma2;
            info[(0, 0)] += w;
            info[(0, 1)] += w * x[i];
            info[(1, 1)] += w * x[i] * x[i];
        }
        info[(1, 0)] = info[(0, 1)];
        if let Some(ch) = info.clone().cholesky() {
            vcov.view_mut((0, 0), (2, 2)).copy_from(&ch.inverse());
        }
        vcov[(2, 2)] = 2.0 * sigma2 * sigma2 / n as f64;
    }
    // perfect fit: zero residuals, zero scores, no sampling variability

    Ok(ModelFit {
        theta,
        score_matrix: score,
        score_names: vec!["alpha".into(), "beta".into()],
        alpha_cols: vec![0],
        beta_cols: vec![1],
        vcov,
        objective,
        converged: opt.converged,
        ensemble: None,
    })
}

/// Per-row log-likelihood at parameters `(alpha, beta, sigma2)`.
pub fn row_loglik(y: f64, offset_log: f64, x: f64, theta: &[f64]) -> f64 {
    let mu = (offset_log + theta[0] + theta[1] * x).exp();
    let sigma2 = theta[2];
    let r = y - mu;
    -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - r * r / (2.0 * sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_distr::StandardNormal;

    #[test]
    fn perfect_fit_gives_zero_scores() {
        let offset: Vec<f64> = vec![0.1, 0.5, -0.2, 0.8, 0.3, -0.1];
        let x = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let y: Vec<f64> = offset.iter().map(|o| o.exp()).collect();
        let f = fit(&y, &offset, &x).unwrap();
        assert_relative_eq!(f.param("alpha").unwrap(), 0.0, epsilon = 1e-8);
        assert_relative_eq!(f.param("beta").unwrap(), 0.0, epsilon = 1e-8);
        assert!(f.score_matrix.amax() <= 1e-8);
    }

    #[test]
    fn one_armed_node_is_inestimable() {
        let offset = vec![0.0; 6];
        let x = vec![0.0; 6];
        let y = vec![1.0, 1.2, 0.9, 1.1, 1.3, 0.8];
        assert!(fit(&y, &offset, &x).is_err());
    }

    #[test]
    fn analytic_scores_match_finite_differences() {
        use crate::numerics::finite_diff_gradient;
        use nalgebra::DVector;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 50;
        let x: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let offset: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 + 1.0).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let mu = (offset[i] + 0.1 - 0.2 * x[i]).exp();
                let e: f64 = rng.sample(StandardNormal);
                mu + 0.3 * e
            })
            .collect();
        let f = fit(&y, &offset, &x).unwrap();
        let th: Vec<f64> = f.theta.iter().map(|(_, v)| *v).collect();
        for i in 0..n {
            let g = finite_diff_gradient(
                |t: &DVector<f64>| row_loglik(y[i], offset[i], x[i], &[t[0], t[1], th[2]]),
                &DVector::from_vec(vec![th[0], th[1]]),
                1e-5,
            )
            .unwrap();
            for j in 0..2 {
                let a = f.score_matrix[(i, j)];
                let rel = (a - g[j]).abs() / a.abs().max(g[j].abs()).max(1.0);
                assert!(rel <= 1e-6, "row {i} col {j}: {a} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn scale_equivariance_of_mean_structure() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let offset: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1.0).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| (offset[i] + 0.2 + 0.1 * x[i]).exp() + 0.2 * (rng.random::<f64>() - 0.5))
            .collect();
        let f1 = fit(&y, &offset, &x).unwrap();
        // doubling responses and exp-offsets jointly leaves (alpha, beta) unchanged
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let off2: Vec<f64> = offset.iter().map(|o| o + 2.0_f64.ln()).collect();
        let f2 = fit(&y2, &off2, &x).unwrap();
        assert_relative_eq!(
            f1.param("alpha").unwrap(),
            f2.param("alpha").unwrap(),
            epsilon = 1e-6
        );
        assert_relative_eq!(
            f1.param("beta").unwrap(),
            f2.param("beta").unwrap(),
            epsilon = 1e-6
        );
    }
}
