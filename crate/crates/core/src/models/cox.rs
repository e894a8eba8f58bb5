//! Cox proportional hazards model `lambda(y | x) = lambda0(y) exp(beta * x)`
//! with Breslow tie handling. The baseline hazard is an infinite-dimensional
//! nuisance, so martingale residuals stand in for the intercept score and
//! score residuals for the treatment score.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::models::{require_both_arms, ModelFit};

/// Breslow-ties partial log-likelihood, score and information at `beta`.
pub(crate) fn partial_loglik(time: &[f64], event: &[f64], x: &[f64], beta: f64) -> (f64, f64, f64) {
    let n = time.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].partial_cmp(&time[a]).unwrap());
    let mut value = 0.0;
    let mut score = 0.0;
    let mut info = 0.0;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut pos = 0;
    while pos < order.len() {
        let t = time[order[pos]];
        // extend the risk set with all rows tied at this time
        let start = pos;
        while pos < order.len() && time[order[pos]] == t {
            let i = order[pos];
            let e = (beta * x[i]).exp();
            s0 += e;
            s1 += e * x[i];
            s2 += e * x[i] * x[i];
            pos += 1;
        }
        for &i in &order[start..pos] {
            if event[i] > 0.5 {
                value += beta * x[i] - s0.ln();
                let xbar = s1 / s0;
                score += x[i] - xbar;
                info += s2 / s0 - xbar * xbar;
            }
        }
    }
    (value, score, info)
}

/// Breslow cumulative baseline hazard evaluated at each observation's time,
/// plus per-distinct-event-time summaries used by the score residuals.
struct BreslowParts {
    /// Lambda0(t_i) per row.
    cum_hazard: Vec<f64>,
    /// sum over event times s <= t_i of xbar(s) * d_s / S0(s), per row.
    cum_xbar_hazard: Vec<f64>,
    /// xbar at each row's own time when it is an event time (else 0).
    xbar_at: Vec<f64>,
}

fn breslow_parts(time: &[f64], event: &[f64], x: &[f64], beta: f64) -> BreslowParts {
    let n = time.len();
    let mut desc: Vec<usize> = (0..n).collect();
    desc.sort_by(|&a, &b| time[b].partial_cmp(&time[a]).unwrap());
    // distinct event times ascending with (d/S0, xbar * d/S0, xbar)
    let mut steps: Vec<(f64, f64, f64, f64)> = Vec::new(); // (time, dLambda, xbar*dLambda, xbar)
    let (mut s0, mut s1) = (0.0, 0.0);
    let mut pos = 0;
    while pos < n {
        let t = time[desc[pos]];
        let start = pos;
        while pos < n && time[desc[pos]] == t {
            let i = desc[pos];
            let e = (beta * x[i]).exp();
            s0 += e;
            s1 += e * x[i];
            pos += 1;
        }
        let deaths = desc[start..pos]
            .iter()
            .filter(|&&i| event[i] > 0.5)
            .count() as f64;
        if deaths > 0.0 {
            let dl = deaths / s0;
            let xbar = s1 / s0;
            steps.push((t, dl, xbar * dl, xbar));
        }
    }
    steps.reverse(); // ascending in time
    let mut cum_hazard = vec![0.0; n];
    let mut cum_xbar_hazard = vec![0.0; n];
    let mut xbar_at = vec![0.0; n];
    let mut asc: Vec<usize> = (0..n).collect();
    asc.sort_by(|&a, &b| time[a].partial_cmp(&time[b]).unwrap());
    let (mut ch, mut cxh) = (0.0, 0.0);
    let mut si = 0;
    for &i in &asc {
        while si < steps.len() && steps[si].0 <= time[i] {
            ch += steps[si].1;
            cxh += steps[si].2;
            si += 1;
        }
        cum_hazard[i] = ch;
        cum_xbar_hazard[i] = cxh;
        if let Some(step) = steps.iter().find(|s| s.0 == time[i]) {
            xbar_at[i] = step.3;
        }
    }
    BreslowParts {
        cum_hazard,
        cum_xbar_hazard,
        xbar_at,
    }
}

pub fn fit(time: &[f64], event: &[f64], x: &[f64]) -> Result<ModelFit> {
    let n = time.len();
    if n != event.len() || n != x.len() {
        return Err(Error::Degenerate("input length mismatch".into()));
    }
    require_both_arms(x)?;
    if !event.iter().any(|&d| d > 0.5) {
        return Err(Error::Inestimable("no events observed".into()));
    }

    // 1-D Newton on the partial likelihood with a divergence guard
    let mut beta = 0.0;
    let mut converged = false;
    let mut last = partial_loglik(time, event, x, beta);
    for _ in 0..100 {
        let (_, score, info) = last;
        if score.abs() <= 1e-10 {
            converged = true;
            break;
        }
        if info <= 0.0 {
            break;
        }
        let mut step = score / info;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = beta + step;
            if cand.abs() <= crate::numerics::DIVERGENCE_GUARD {
                let lb = partial_loglik(time, event, x, cand);
                if lb.0.is_finite() && lb.0 >= last.0 {
                    beta = cand;
                    last = lb;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (objective, _, info) = last;

    let parts = breslow_parts(time, event, x, beta);
    let mut score_matrix = DMatrix::zeros(n, 2);
    for i in 0..n {
        let ebx = (beta * x[i]).exp();
        let mart = event[i] - parts.cum_hazard[i] * ebx;
        let resid_score = if event[i] > 0.5 {
            x[i] - parts.xbar_at[i]
        } else {
            0.0
        } - ebx * (x[i] * parts.cum_hazard[i] - parts.cum_xbar_hazard[i]);
        score_matrix[(i, 0)] = mart;
        score_matrix[(i, 1)] = resid_score;
    }

    let mut vcov = DMatrix::zeros(1, 1);
    if info > 0.0 {
        vcov[(0, 0)] = 1.0 / info;
    }

    Ok(ModelFit {
        theta: vec![("beta".to_string(), beta)],
        score_matrix,
        score_names: vec!["martingale".into(), "score_beta".into()],
        alpha_cols: vec![0],
        beta_cols: vec![1],
        vcov,
        objective,
        converged,
        ensemble: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{cox_bisection_oracle as bisection_oracle, simulate_cox as simulate};

    #[test]
    fn residual_sums_vanish_at_mle() {
        let (t, d, x) = simulate(60, 0.5, 0.25, 17);
        let f = fit(&t, &d, &x).unwrap();
        assert!(f.converged);
        let mart_sum: f64 = f.score_matrix.column(0).sum();
        let score_sum: f64 = f.score_matrix.column(1).sum();
        assert!(mart_sum.abs() <= 1e-8, "martingale sum {mart_sum}");
        assert!(score_sum.abs() <= 1e-8, "score sum {score_sum}");
    }

    #[test]
    fn matches_bisection_oracle_no_ties() {
        let (t, d, x) = simulate(20, 0.8, 0.0, 5);
        let f = fit(&t, &d, &x).unwrap();
        let oracle = bisection_oracle(&t, &d, &x);
        assert!(
            (f.param("beta").unwrap() - oracle).abs() <= 1e-8,
            "{} vs {}",
            f.param("beta").unwrap(),
            oracle
        );
    }

    #[test]
    fn paired_duplicate_arms_give_zero_beta() {
        // identical event histories in both arms
        let base_t = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let base_d = [1.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let mut t = Vec::new();
        let mut d = Vec::new();
        let mut x = Vec::new();
        for i in 0..base_t.len() {
            for arm in [0.0, 1.0] {
                t.push(base_t[i]);
                d.push(base_d[i]);
                x.push(arm);
            }
        }
        let f = fit(&t, &d, &x).unwrap();
        assert_eq!(f.param("beta").unwrap(), 0.0);
    }

    #[test]
    fn no_events_rejected() {
        let t = vec![1.0, 2.0];
        let d = vec![0.0, 0.0];
        let x = vec![0.0, 1.0];
        assert!(fit(&t, &d, &x).is_err());
    }
}
