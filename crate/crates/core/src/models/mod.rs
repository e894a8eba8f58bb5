//! Model families. Each family fits its parameters on a row subset and
//! returns per-observation partial scores split into an intercept block
//! (`alpha_cols`) and a treatment block (`beta_cols`). Nuisance parameters
//! (error variances, stratum effects) are estimated but excluded from both
//! blocks so splits are never driven by them.

pub mod cox;
pub mod ensemble;
pub mod gaussian_log;
pub mod linear;
pub mod prop_odds;
pub mod weibull;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Dataset, EndpointSpec, RoleMap, RowSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    GaussianLog,
    Linear,
    Polr,
    PolrStratified,
    Weibull,
    Cox,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::GaussianLog => "gaussian-log",
            Family::Linear => "linear",
            Family::Polr => "polr",
            Family::PolrStratified => "polr-stratified",
            Family::Weibull => "weibull",
            Family::Cox => "cox",
        }
    }
}

/// Per-item bookkeeping for the baseline-stratified proportional-odds
/// ensemble: which score columns belong to the item and the baseline stratum
/// of every node row (for the stratified permutation test).
#[derive(Debug, Clone)]
pub struct ItemGroup {
    pub name: String,
    pub alpha_cols: Vec<usize>,
    pub beta_cols: Vec<usize>,
    /// Baseline stratum label per node row.
    pub strata: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct EnsembleInfo {
    pub items: Vec<ItemGroup>,
    /// Cross-classification of all items' baselines, one label per node row;
    /// permutations are drawn within these cells.
    pub cross_strata: Vec<usize>,
}

/// A fitted base model on one node's rows.
#[derive(Debug, Clone)]
pub struct ModelFit {
    /// Named parameter estimates.
    pub theta: Vec<(String, f64)>,
    /// One row per fitting observation, one column per score component.
    pub score_matrix: DMatrix<f64>,
    pub score_names: Vec<String>,
    pub alpha_cols: Vec<usize>,
    pub beta_cols: Vec<usize>,
    /// Covariance of `theta` (inverse observed information; robust analogue
    /// for Cox). Entries for pure nuisance components may be zero.
    pub vcov: DMatrix<f64>,
    /// Maximized log-objective (log-likelihood, or partial log-likelihood for
    /// Cox).
    pub objective: f64,
    pub converged: bool,
    pub ensemble: Option<EnsembleInfo>,
}

impl ModelFit {
    pub fn n_rows(&self) -> usize {
        self.score_matrix.nrows()
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.theta
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Inestimable(format!("no parameter named `{name}`")))
    }

    pub fn param(&self, name: &str) -> Result<f64> {
        Ok(self.theta[self.param_index(name)?].1)
    }

    pub fn se(&self, name: &str) -> Result<f64> {
        let k = self.param_index(name)?;
        let v = self.vcov[(k, k)];
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Inestimable(format!(
                "non-positive variance for `{name}`"
            )));
        }
        Ok(v.sqrt())
    }

    /// Names of the treatment parameters, in theta order.
    pub fn treatment_params(&self) -> Vec<String> {
        self.theta
            .iter()
            .map(|(n, _)| n.clone())
            .filter(|n| n == "beta" || n.contains(".beta"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectLabel {
    Positive,
    Negative,
    None,
}

/// CI-sign classification of a treatment effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectClass {
    pub label: EffectLabel,
    pub ci: (f64, f64),
    pub level: f64,
}

pub fn wald_ci_from(estimate: f64, se: f64, level: f64) -> (f64, f64) {
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    (estimate - z * se, estimate + z * se)
}

pub fn wald_ci(fit: &ModelFit, param: &str, level: f64) -> Result<(f64, f64)> {
    Ok(wald_ci_from(fit.param(param)?, fit.se(param)?, level))
}

pub fn classify_from(estimate: f64, se: f64, level: f64) -> EffectClass {
    let ci = wald_ci_from(estimate, se, level);
    let label = if ci.0 > 0.0 {
        EffectLabel::Positive
    } else if ci.1 < 0.0 {
        EffectLabel::Negative
    } else {
        EffectLabel::None
    };
    EffectClass { label, ci, level }
}

pub fn classify_effect(fit: &ModelFit, param: &str, level: f64) -> Result<EffectClass> {
    Ok(classify_from(fit.param(param)?, fit.se(param)?, level))
}

fn gather(data: &Dataset, name: &str, rows: &RowSet) -> Result<Vec<f64>> {
    let col = data.column(name)?;
    Ok(rows.indices().iter().map(|&i| col.values[i]).collect())
}

/// Fit the configured family on a node's rows. Endpoint and treatment values
/// are assumed complete over `rows` (enforced at analysis start).
pub fn fit(family: Family, data: &Dataset, roles: &RoleMap, rows: &RowSet) -> Result<ModelFit> {
    let contrast = roles.treatment_contrast(data)?;
    let x: Vec<f64> = rows.indices().iter().map(|&i| contrast[i]).collect();
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::Roles(
            "missing treatment value inside analysis rows".into(),
        ));
    }
    match (family, &roles.endpoint) {
        (Family::GaussianLog, EndpointSpec::GaussianLog { response, offset }) => {
            let y = gather(data, response, rows)?;
            let off: Vec<f64> = gather(data, offset, rows)?.iter().map(|v| v.ln()).collect();
            gaussian_log::fit(&y, &off, &x)
        }
        (Family::Linear, EndpointSpec::Linear { response, strata }) => {
            let y = gather(data, response, rows)?;
            let s: Vec<Vec<f64>> = strata
                .iter()
                .map(|c| gather(data, c, rows))
                .collect::<Result<_>>()?;
            linear::fit(&y, &x, &s)
        }
        (Family::Polr, EndpointSpec::OrdinalItem { item }) => {
            let col = data.column(item)?;
            let n_levels = col
                .kind
                .levels()
                .ok_or_else(|| Error::Roles(format!("column `{item}` is not ordinal")))?
                .len();
            let yv: Vec<usize> = rows
                .indices()
                .iter()
                .map(|&i| col.values[i] as usize)
                .collect();
            prop_odds::fit(&yv, n_levels, &x)
        }
        (Family::PolrStratified, EndpointSpec::OrdinalEnsemble { pairs }) => {
            let mut items = Vec::new();
            for (item6, item0) in pairs {
                let c6 = data.column(item6)?;
                let c0 = data.column(item0)?;
                let k6 = c6
                    .kind
                    .levels()
                    .ok_or_else(|| Error::Roles(format!("column `{item6}` is not ordinal")))?
                    .len();
                let y6: Vec<usize> = rows
                    .indices()
                    .iter()
                    .map(|&i| c6.values[i] as usize)
                    .collect();
                let y0: Vec<usize> = rows
                    .indices()
                    .iter()
                    .map(|&i| c0.values[i] as usize)
                    .collect();
                items.push(ensemble::ItemData {
                    name: item6.clone(),
                    y6,
                    y0,
                    n_levels: k6,
                });
            }
            ensemble::fit(&items, &x)
        }
        (Family::Weibull, EndpointSpec::Survival { time, event }) => {
            let t = gather(data, time, rows)?;
            let d = gather(data, event, rows)?;
            weibull::fit(&t, &d, &x)
        }
        (Family::Cox, EndpointSpec::Survival { time, event }) => {
            let t = gather(data, time, rows)?;
            let d = gather(data, event, rows)?;
            cox::fit(&t, &d, &x)
        }
        _ => Err(Error::Config(format!(
            "endpoint specification does not match family `{}`",
            family.name()
        ))),
    }
}

/// Require both treatment arms among the fitting rows.
pub(crate) fn require_both_arms(x: &[f64]) -> Result<()> {
    let n1 = x.iter().filter(|&&v| v == 1.0).count();
    let n0 = x.len() - n1;
    if n0 < 1 || n1 < 1 {
        return Err(Error::Inestimable(
            "only one treatment arm present in node".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wald_ci_table_values() {
        // reported as 0.84 ( 0.08, 1.59): se backed out of the interval width
        let se = (1.59 - 0.08) / (2.0 * 1.959963984540054);
        let ci = wald_ci_from(0.84, se, 0.95);
        assert!((ci.0 - 0.08).abs() <= 0.01, "lower {}", ci.0);
        assert!((ci.1 - 1.59).abs() <= 0.01, "upper {}", ci.1);
        assert_eq!(classify_from(0.84, se, 0.95).label, EffectLabel::Positive);
    }

    #[test]
    fn classify_zero_estimate_is_none() {
        assert_eq!(classify_from(0.0, 0.5, 0.95).label, EffectLabel::None);
    }

    #[test]
    fn classify_negative_table_row() {
        // reported as -0.37 (-0.72, -0.03)
        let se = (-0.03 - -0.72) / (2.0 * 1.959963984540054);
        let c = classify_from(-0.37, se, 0.95);
        assert_eq!(c.label, EffectLabel::Negative);
        assert_relative_eq!(c.ci.0, -0.715, epsilon = 0.01);
        assert_relative_eq!(c.ci.1, -0.025, epsilon = 0.01);
    }
}
