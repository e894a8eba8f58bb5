//! Linear model with a binary treatment contrast and optional stratum
//! covariates. OLS and ML coincide; the intercept score is the residual
//! scaled by the error variance and the treatment score is the residual
//! times the treatment contrast.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{require_both_arms, ModelFit};

pub fn fit(y: &[f64], x: &[f64], strata: &[Vec<f64>]) -> Result<ModelFit> {
    let n = y.len();
    if n != x.len() || strata.iter().any(|s| s.len() != n) {
        return Err(Error::Degenerate("input length mismatch".into()));
    }
    require_both_arms(x)?;
    let p = 2 + strata.len();
    if n < p {
        return Err(Error::Degenerate(format!(
            "{n} rows cannot identify {p} coefficients"
        )));
    }
    let design = DMatrix::from_fn(n, p, |i, j| match j {
        0 => 1.0,
        1 => x[i],
        _ => strata[j - 2][i],
    });
    let yv = DVector::from_column_slice(y);
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * &yv;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("collinear design".into()))?;
    let coef = chol.solve(&xty);
    let resid = &yv - &design * &coef;
    let sigma2 = resid.norm_squared() / n as f64; // ML estimate
    if sigma2 <= 0.0 {
        return Err(Error::Degenerate("zero residual variance".into()));
    }

    let mut theta = vec![
        ("alpha".to_string(), coef[0]),
        ("beta".to_string(), coef[1]),
    ];
    for (k, _) in strata.iter().enumerate() {
        theta.push((format!("gamma{}", k + 1), coef[2 + k]));
    }
    theta.push(("sigma2".to_string(), sigma2));

    let mut score = DMatrix::zeros(n, 2);
    for i in 0..n {
        score[(i, 0)] = resid[i] / sigma2;
        score[(i, 1)] = resid[i] * x[i] / sigma2;
    }

    let coef_cov = chol.inverse() * sigma2;
    let pt = theta.len();
    let mut vcov = DMatrix::zeros(pt, pt);
    vcov.view_mut((0, 0), (p, p)).copy_from(&coef_cov);
    vcov[(pt - 1, pt - 1)] = 2.0 * sigma2 * sigma2 / n as f64;

    let objective: f64 = (0..n)
        .map(|i| row_loglik(y[i], x[i], strata.iter().map(|s| s[i]).collect::<Vec<_>>().as_slice(), &theta_values(&theta)))
        .sum();

    Ok(ModelFit {
        theta,
        score_matrix: score,
        score_names: vec!["alpha".into(), "beta".into()],
        alpha_cols: vec![0],
        beta_cols: vec![1],
        vcov,
        objective,
        converged: true,
        ensemble: None,
    })
}

fn theta_values(theta: &[(String, f64)]) -> Vec<f64> {
    theta.iter().map(|(_, v)| v).copied().collect()
}

/// Per-row Gaussian log-likelihood at parameters
/// `(alpha, beta, gamma.., sigma2)`.
pub fn row_loglik(y: f64, x: f64, strata: &[f64], theta: &[f64]) -> f64 {
    let sigma2 = theta[theta.len() - 1];
    let mut mu = theta[0] + theta[1] * x;
    for (k, &s) in strata.iter().enumerate() {
        mu += theta[2 + k] * s;
    }
    let r = y - mu;
    -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - r * r / (2.0 * sigma2)
}
