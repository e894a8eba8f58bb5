//! Proportional-odds model for one ordinal item:
//! `P(Y <= r | x) = 1 / (1 + exp(-(alpha_r - beta * x)))`, so a positive
//! treatment effect shifts probability mass to higher categories. Intercept
//! monotonicity is enforced by fitting `(alpha_0, log-increments)` internally;
//! parameters and scores are reported in the original parametrization.
//!
//! Categories unobserved in the fitting rows are collapsed away; intercepts
//! are indexed by position on the collapsed scale.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{require_both_arms, ModelFit};
use crate::numerics::{newton_maximize, pseudo_inverse, ObjectiveBundle, DEFAULT_RANK_TOL, DEFAULT_TOL};

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Collapse raw level indices to consecutive observed categories.
/// Returns (collapsed y, number of observed categories).
fn collapse(y: &[usize], n_levels: usize) -> Result<(Vec<usize>, usize)> {
    let mut seen = vec![false; n_levels];
    for &v in y {
        if v >= n_levels {
            return Err(Error::InvalidValue {
                column: "item".into(),
                row: 0,
                message: format!("level index {v} out of range"),
            });
        }
        seen[v] = true;
    }
    let mut map = vec![usize::MAX; n_levels];
    let mut k = 0;
    for (lvl, &s) in seen.iter().enumerate() {
        if s {
            map[lvl] = k;
            k += 1;
        }
    }
    Ok((y.iter().map(|&v| map[v]).collect(), k))
}

fn alphas_from_internal(z: &DVector<f64>, n_alpha: usize) -> Vec<f64> {
    let mut alphas = Vec::with_capacity(n_alpha);
    let mut a = z[0];
    alphas.push(a);
    for r in 1..n_alpha {
        a += z[r].exp();
        alphas.push(a);
    }
    alphas
}

/// Per-row gradient and Hessian contribution in the original
/// `(alpha_0..alpha_{K-2}, beta)` parametrization.
struct RowDerivs {
    loglik: f64,
    grad: Vec<f64>,
    hess: DMatrix<f64>,
}

fn row_derivs(y: usize, x: f64, alphas: &[f64], beta: f64) -> RowDerivs {
    let k = alphas.len() + 1; // categories
    let p = alphas.len() + 1; // parameters
    let bi = p - 1; // beta index
    let (a_cdf, fa) = if y < k - 1 {
        let f = logistic(alphas[y] - beta * x);
        (f, f * (1.0 - f))
    } else {
        (1.0, 0.0)
    };
    let (b_cdf, fb) = if y > 0 {
        let f = logistic(alphas[y - 1] - beta * x);
        (f, f * (1.0 - f))
    } else {
        (0.0, 0.0)
    };
    let l = a_cdf - b_cdf;
    let mut grad = vec![0.0; p];
    let mut hess = DMatrix::zeros(p, p);
    if l <= 0.0 || !l.is_finite() {
        return RowDerivs {
            loglik: f64::NEG_INFINITY,
            grad,
            hess,
        };
    }
    let fap = fa * (1.0 - 2.0 * a_cdf);
    let fbp = fb * (1.0 - 2.0 * b_cdf);
    let d2aa = fap / l - (fa / l) * (fa / l);
    let d2bb = -fbp / l - (fb / l) * (fb / l);
    let d2ab = fa * fb / (l * l);
    // eta_a = alpha_y - beta*x, eta_b = alpha_{y-1} - beta*x
    if y < k - 1 {
        grad[y] += fa / l;
        hess[(y, y)] += d2aa;
        hess[(y, bi)] += -x * (d2aa + d2ab);
        hess[(bi, y)] = hess[(y, bi)];
    }
    if y > 0 {
        grad[y - 1] -= fb / l;
        hess[(y - 1, y - 1)] += d2bb;
        hess[(y - 1, bi)] += -x * (d2bb + d2ab);
        hess[(bi, y - 1)] = hess[(y - 1, bi)];
    }
    if y > 0 && y < k - 1 {
        hess[(y, y - 1)] += d2ab;
        hess[(y - 1, y)] += d2ab;
    }
    grad[bi] += -x * (fa - fb) / l;
    hess[(bi, bi)] += x * x * (d2aa + 2.0 * d2ab + d2bb);
    RowDerivs {
        loglik: l.ln(),
        grad,
        hess,
    }
}

/// Per-row log-likelihood at `(alphas, beta)` for a collapsed category.
pub fn row_loglik(y: usize, x: f64, alphas: &[f64], beta: f64) -> f64 {
    let k = alphas.len() + 1;
    let a = if y < k - 1 {
        logistic(alphas[y] - beta * x)
    } else {
        1.0
    };
    let b = if y > 0 {
        logistic(alphas[y - 1] - beta * x)
    } else {
        0.0
    };
    (a - b).ln()
}

pub fn fit(y: &[usize], n_levels: usize, x: &[f64]) -> Result<ModelFit> {
    let n = y.len();
    if n != x.len() {
        return Err(Error::Degenerate("input length mismatch".into()));
    }
    require_both_arms(x)?;
    let (yc, k) = collapse(y, n_levels)?;
    if k < 2 {
        return Err(Error::Inestimable(
            "all observations in a single category".into(),
        ));
    }
    let n_alpha = k - 1;
    let p = n_alpha + 1;

    // internal parametrization: (alpha_0, log-increments, beta)
    let bundle = |z: &DVector<f64>| {
        let alphas = alphas_from_internal(z, n_alpha);
        let beta = z[p - 1];
        let mut value = 0.0;
        let mut g_orig = DVector::zeros(p);
        let mut h_orig = DMatrix::zeros(p, p);
        for i in 0..n {
            let d = row_derivs(yc[i], x[i], &alphas, beta);
            value += d.loglik;
            for j in 0..p {
                g_orig[j] += d.grad[j];
            }
            h_orig += d.hess;
        }
        // chain rule to internal parameters
        let mut jac = DMatrix::zeros(p, p);
        for r in 0..n_alpha {
            jac[(r, 0)] = 1.0;
            for s in 1..=r {
                jac[(r, s)] = z[s].exp();
            }
        }
        jac[(p - 1, p - 1)] = 1.0;
        let g_int = jac.transpose() * &g_orig;
        let mut h_int = jac.transpose() * &h_orig * &jac;
        for s in 1..n_alpha {
            let tail: f64 = (s..n_alpha).map(|r| g_orig[r]).sum();
            h_int[(s, s)] += z[s].exp() * tail;
        }
        ObjectiveBundle {
            value,
            gradient: g_int,
            hessian: h_int,
        }
    };

    // empirical cumulative logits as starting values
    let mut counts = vec![0usize; k];
    for &c in &yc {
        counts[c] += 1;
    }
    let mut init = DVector::zeros(p);
    let mut cum = 0usize;
    let mut prev = 0.0;
    for r in 0..n_alpha {
        cum += counts[r];
        let pr = (cum as f64 + 0.5) / (n as f64 + 1.0);
        let a = (pr / (1.0 - pr)).ln();
        if r == 0 {
            init[0] = a;
        } else {
            init[r] = (a - prev).max(1e-3).ln();
        }
        prev = a;
    }
    let opt = newton_maximize(bundle, &init, DEFAULT_TOL, 200)?;
    let alphas = alphas_from_internal(&opt.theta_hat, n_alpha);
    let beta = opt.theta_hat[p - 1];

    let mut theta: Vec<(String, f64)> = alphas
        .iter()
        .enumerate()
        .map(|(r, &a)| (format!("alpha_{r}"), a))
        .collect();
    theta.push(("beta".to_string(), beta));

    let mut score = DMatrix::zeros(n, p);
    let mut info = DMatrix::zeros(p, p);
    let mut objective = 0.0;
    for i in 0..n {
        let d = row_derivs(yc[i], x[i], &alphas, beta);
        objective += d.loglik;
        for j in 0..p {
            score[(i, j)] = d.grad[j];
        }
        info -= d.hess;
    }
    let vcov = match info.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => pseudo_inverse(&info, DEFAULT_RANK_TOL).0,
    };

    let mut score_names: Vec<String> = (0..n_alpha).map(|r| format!("alpha_{r}")).collect();
    score_names.push("beta".into());

    Ok(ModelFit {
        theta,
        score_matrix: score,
        score_names,
        alpha_cols: (0..n_alpha).collect(),
        beta_cols: vec![n_alpha],
        vcov,
        objective,
        converged: opt.converged,
        ensemble: None,
    })
}
