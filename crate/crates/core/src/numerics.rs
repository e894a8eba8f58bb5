//! Shared numerical kernels: Newton-type maximization with step halving,
//! eigendecomposition-based pseudo-inverse with rank detection, and central
//! finite differences used as the gradient oracle in tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Objective value, gradient and Hessian at one parameter point.
#[derive(Debug, Clone)]
pub struct ObjectiveBundle {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub theta_hat: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
/// |theta_k| beyond this triggers the divergence guard (separation etc.).
pub const DIVERGENCE_GUARD: f64 = 30.0;
const MAX_HALVINGS: usize = 30;
const REL_OBJ_TOL: f64 = 1e-12;

/// Maximize an objective by Newton steps with step-halving line search.
///
/// A singular Hessian falls back to a plain gradient step. Convergence is
/// declared when the gradient max-norm drops below `tol` or the relative
/// objective change drops below 1e-12. Non-convergence is reported through
/// `converged = false`, not an error.
pub fn newton_maximize<F>(
    mut bundle_fn: F,
    init: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<OptimResult>
where
    F: FnMut(&DVector<f64>) -> ObjectiveBundle,
{
    let mut theta = init.clone();
    let mut bundle = bundle_fn(&theta);
    if !bundle.value.is_finite() {
        return Err(Error::NonFinite(format!(
            "objective not finite at initial point {:?}",
            init.as_slice()
        )));
    }
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let grad_norm = bundle.gradient.amax();
        if grad_norm <= tol {
            return Ok(OptimResult {
                theta_hat: theta,
                converged: true,
                iterations,
                grad_norm,
            });
        }
        // ascent direction: solve -H d = g on the symmetrized Hessian
        let h = symmetrize(&bundle.hessian);
        let neg_h = -h;
        let dir = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&bundle.gradient),
            None => match neg_h.lu().solve(&bundle.gradient) {
                Some(d) if d.iter().all(|x| x.is_finite()) && d.dot(&bundle.gradient) > 0.0 => d,
                _ => bundle.gradient.clone(),
            },
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &theta + &dir * step;
            if cand.amax() > DIVERGENCE_GUARD {
                step *= 0.5;
                continue;
            }
            let cb = bundle_fn(&cand);
            if cb.value.is_finite() && cb.value > bundle.value {
                accepted = Some((cand, cb));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, cb)) => {
                let rel = (cb.value - bundle.value).abs() / (1.0 + bundle.value.abs());
                theta = cand;
                bundle = cb;
                if rel <= REL_OBJ_TOL {
                    let grad_norm = bundle.gradient.amax();
                    return Ok(OptimResult {
                        theta_hat: theta,
                        converged: grad_norm <= tol.max(1e-6),
                        iterations,
                        grad_norm,
                    });
                }
            }
            None => {
                // no improving step found
                let grad_norm = bundle.gradient.amax();
                return Ok(OptimResult {
                    theta_hat: theta,
                    converged: grad_norm <= tol.max(1e-6),
                    iterations,
                    grad_norm,
                });
            }
        }
    }
    let grad_norm = bundle.gradient.amax();
    Ok(OptimResult {
        theta_hat: theta,
        converged: false,
        iterations,
        grad_norm,
    })
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via its
/// eigendecomposition. Eigenvalues at or below `rank_tol * lambda_max` count
/// as zero; the zero matrix maps to the zero matrix with rank 0.
pub fn pseudo_inverse(m: &DMatrix<f64>, rank_tol: f64) -> (DMatrix<f64>, usize) {
    let p = m.nrows();
    if p == 0 {
        return (m.clone(), 0);
    }
    let eig = symmetrize(m).symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if lambda_max <= 0.0 {
        return (DMatrix::zeros(p, p), 0);
    }
    let cut = rank_tol * lambda_max;
    let mut inv_vals = DVector::zeros(p);
    let mut rank = 0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cut {
            inv_vals[i] = 1.0 / l;
            rank += 1;
        }
    }
    let mplus = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    (mplus, rank)
}

/// Central finite differences with component-wise step `h * max(1, |x_k|)`.
pub fn finite_diff_gradient<F>(mut f: F, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let mut grad = DVector::zeros(x.len());
    for k in 0..x.len() {
        let step = h * x[k].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += step;
        xm[k] -= step;
        let (fp, fm) = (f(&xp), f(&xm));
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite difference evaluation at component {k}"
            )));
        }
        grad[k] = (fp - fm) / (2.0 * step);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad_bundle(theta: &DVector<f64>) -> ObjectiveBundle {
        // -(x - 3)^2
        let x = theta[0];
        ObjectiveBundle {
            value: -(x - 3.0) * (x - 3.0),
            gradient: DVector::from_vec(vec![-2.0 * (x - 3.0)]),
            hessian: DMatrix::from_vec(1, 1, vec![-2.0]),
        }
    }

    #[test]
    fn newton_exact_on_quadratic() {
        let res = newton_maximize(quad_bundle, &DVector::zeros(1), 1e-8, 50).unwrap();
        assert!(res.converged);
        assert_relative_eq!(res.theta_hat[0], 3.0, max_relative = 1e-12);
        assert!(res.iterations <= 2);
    }

    #[test]
    fn newton_deterministic() {
        let a = newton_maximize(quad_bundle, &DVector::from_vec(vec![0.7]), 1e-8, 50).unwrap();
        let b = newton_maximize(quad_bundle, &DVector::from_vec(vec![0.7]), 1e-8, 50).unwrap();
        assert_eq!(a.theta_hat[0].to_bits(), b.theta_hat[0].to_bits());
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn separated_logistic_hits_guard() {
        // perfectly separated: x in {-1, 1}, y = 1(x > 0)
        let xs = [-1.0, -1.0, 1.0, 1.0];
        let ys = [0.0, 0.0, 1.0, 1.0];
        let bundle = |theta: &DVector<f64>| {
            let b = theta[0];
            let mut v = 0.0;
            let mut g = 0.0;
            let mut h = 0.0;
            for (&x, &y) in xs.iter().zip(&ys) {
                let eta = b * x;
                let p = 1.0 / (1.0 + (-eta).exp());
                v += y * eta - (1.0 + eta.exp()).ln();
                g += (y - p) * x;
                h -= p * (1.0 - p) * x * x;
            }
            ObjectiveBundle {
                value: v,
                gradient: DVector::from_vec(vec![g]),
                hessian: DMatrix::from_vec(1, 1, vec![h]),
            }
        };
        let res = newton_maximize(bundle, &DVector::zeros(1), 1e-8, 200).unwrap();
        // the likelihood increases monotonically in |beta|: the optimizer
        // must run far out (flat-gradient stop) or be blocked by the guard
        assert!(res.theta_hat[0] >= 15.0, "beta {}", res.theta_hat[0]);
        assert!(res.theta_hat[0].abs() <= DIVERGENCE_GUARD);
    }

    #[test]
    fn pinv_identity() {
        let (inv, rank) = pseudo_inverse(&DMatrix::identity(3, 3), DEFAULT_RANK_TOL);
        assert_eq!(rank, 3);
        assert_relative_eq!(inv, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn pinv_rank_one_outer_product() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let m = &v * v.transpose();
        let (inv, rank) = pseudo_inverse(&m, DEFAULT_RANK_TOL);
        assert_eq!(rank, 1);
        let n4 = v.norm_squared() * v.norm_squared();
        let expected = &v * v.transpose() / n4;
        assert_relative_eq!(inv, expected, epsilon = 1e-12);
    }

    #[test]
    fn pinv_zero_matrix() {
        let (inv, rank) = pseudo_inverse(&DMatrix::zeros(4, 4), DEFAULT_RANK_TOL);
        assert_eq!(rank, 0);
        assert_eq!(inv, DMatrix::zeros(4, 4));
    }

    #[test]
    fn pinv_penrose_identity_random_psd() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = DMatrix::from_fn(6, 4, |_, _| rng.random::<f64>() - 0.5);
            let m = &a * a.transpose(); // PSD, rank <= 4
            let (mp, rank) = pseudo_inverse(&m, DEFAULT_RANK_TOL);
            assert_eq!(rank, 4);
            let back = &m * &mp * &m;
            assert_relative_eq!(back, m, epsilon = 1e-10);
            // remaining Penrose identities
            assert_relative_eq!(&mp * &m * &mp, mp.clone(), epsilon = 1e-10);
            assert_relative_eq!((&m * &mp).transpose(), &m * &mp, epsilon = 1e-10);
            assert_relative_eq!((&mp * &m).transpose(), &mp * &m, epsilon = 1e-10);
        }
    }

    #[test]
    fn finite_diff_product() {
        let f = |x: &DVector<f64>| x[0] * x[1];
        let g = finite_diff_gradient(f, &DVector::from_vec(vec![2.0, 3.0]), 1e-6).unwrap();
        assert_relative_eq!(g[0], 3.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn finite_diff_constant() {
        let g = finite_diff_gradient(|_| 4.2, &DVector::from_vec(vec![1.0, -1.0]), 1e-5).unwrap();
        assert_eq!(g, DVector::zeros(2));
    }
}
