//! Synthetic data-generating processes for subgroup-recovery studies, plus a
//! brute-force segmented-objective oracle used to validate cutpoint search.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, Dataset, EndpointSpec, RoleMap, RowSet};
use crate::engine::ControlParams;
use crate::error::{Error, Result};
use crate::models::{self, Family};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpName {
    /// Predictive + prognostic: effect jump 3.6 for z1 > 0, level shift 1.8
    /// for z1 < 0.
    Pred,
    /// Same, but effect jump and level shift both on z1 < 0.
    Pred2,
    /// Prognostic only: level shift for z1 > 0, constant treatment effect 2.
    Prog,
    /// Global null: no dependence on any partitioning variable.
    Null,
}

impl std::str::FromStr for DgpName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pred" => Ok(DgpName::Pred),
            "pred2" => Ok(DgpName::Pred2),
            "prog" => Ok(DgpName::Prog),
            "null" => Ok(DgpName::Null),
            other => Err(Error::Config(format!("unknown DGP `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DgpSpec {
    pub name: DgpName,
    pub n: usize,
    /// Extra independent N(0,1) partitioning variables beyond z1.
    pub j_noise: usize,
    pub seed: u64,
}

/// Columns: y (continuous), x_A (binary treatment), z1..z_{1+j_noise}.
/// The second argument of the N(mu, 0.7) error is read as a variance
/// (sigma = sqrt(0.7)); the null process uses unit variance.
pub fn generate(spec: &DgpSpec) -> Result<Dataset> {
    if spec.n < 4 {
        return Err(Error::Config("need n >= 4".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = match spec.name {
        DgpName::Null => 1.0,
        _ => 0.7_f64.sqrt(),
    };
    let nz = 1 + spec.j_noise;
    let mut y = Vec::with_capacity(spec.n);
    let mut x = Vec::with_capacity(spec.n);
    let mut z: Vec<Vec<f64>> = vec![Vec::with_capacity(spec.n); nz];
    for _ in 0..spec.n {
        let xi = if rng.random::<bool>() { 1.0 } else { 0.0 };
        for zc in z.iter_mut() {
            zc.push(rng.sample::<f64, _>(StandardNormal));
        }
        let z1 = *z[0].last().unwrap();
        let mean = match spec.name {
            DgpName::Pred => {
                1.9 + 0.2 * xi
                    + 1.8 * f64::from(z1 < 0.0)
                    + 3.6 * f64::from(z1 > 0.0) * xi
            }
            DgpName::Pred2 => {
                1.9 + 0.2 * xi
                    + 1.8 * f64::from(z1 < 0.0)
                    + 3.6 * f64::from(z1 < 0.0) * xi
            }
            DgpName::Prog => 2.0 * xi + f64::from(z1 > 0.0),
            DgpName::Null => 1.0 + 0.5 * xi,
        };
        y.push(mean + sigma * rng.sample::<f64, _>(StandardNormal));
        x.push(xi);
    }
    let mut columns = vec![
        Column {
            name: "y".into(),
            kind: ColumnKind::Continuous,
            missing: vec![false; spec.n],
            values: y,
        },
        Column {
            name: "x_A".into(),
            kind: ColumnKind::Continuous,
            missing: vec![false; spec.n],
            values: x,
        },
    ];
    for (k, zc) in z.into_iter().enumerate() {
        columns.push(Column {
            name: format!("z{}", k + 1),
            kind: ColumnKind::Continuous,
            missing: vec![false; spec.n],
            values: zc,
        });
    }
    Dataset::new(columns)
}

/// Role map matching [`generate`]'s column layout.
pub fn roles(spec: &DgpSpec) -> RoleMap {
    RoleMap {
        endpoint: EndpointSpec::Linear {
            response: "y".into(),
            strata: vec![],
        },
        treatment: "x_A".into(),
        partitioning: (0..=spec.j_noise).map(|k| format!("z{}", k + 1)).collect(),
    }
}

/// Exhaustive segmented-objective oracle: for every admissible cutpoint on
/// `variable`, refit the family separately in both halves and total the
/// objectives. Returns (cutpoint, total objective) for the maximizing
/// cutpoint; ties resolve to the smallest cutpoint. A half where the fit
/// degenerates to zero residual variance counts as a perfect (infinite)
/// objective.
pub fn oracle_best_split(
    data: &Dataset,
    roles: &RoleMap,
    family: Family,
    variable: &str,
    control: &ControlParams,
) -> Result<(f64, f64)> {
    let col = data.column(variable)?;
    let rows: Vec<usize> = (0..data.nrows()).filter(|&i| !col.missing[i]).collect();
    let mut cuts: Vec<f64> = rows.iter().map(|&i| col.values[i]).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    cuts.pop();
    let half_objective = |idx: Vec<usize>| -> Option<f64> {
        let rs = RowSet::new(idx).ok()?;
        match models::fit(family, data, roles, &rs) {
            Ok(f) if f.converged => Some(f.objective),
            Err(Error::Degenerate(msg)) if msg.contains("zero residual") => Some(f64::INFINITY),
            _ => None,
        }
    };
    let mut best: Option<(f64, f64)> = None;
    for &mu in &cuts {
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| col.values[i] <= mu);
        if left.len() < control.minbucket || right.len() < control.minbucket {
            continue;
        }
        let total = match (half_objective(left), half_objective(right)) {
            (Some(a), Some(b)) => a + b,
            _ => continue,
        };
        if best.map(|(_, b)| total > b).unwrap_or(true) {
            best = Some((mu, total));
        }
    }
    best.ok_or_else(|| Error::Degenerate("no admissible cutpoint".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: DgpName, n: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            name,
            n,
            j_noise: 1,
            seed,
        }
    }

    #[test]
    fn same_seed_identical() {
        let s = spec(DgpName::Pred, 50, 11);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        for (ca, cb) in a.columns().iter().zip(b.columns()) {
            assert_eq!(ca.values, cb.values);
        }
    }

    #[test]
    fn pred_cell_mean() {
        let s = spec(DgpName::Pred, 2_000, 5);
        let d = generate(&s).unwrap();
        let y = &d.column("y").unwrap().values;
        let x = &d.column("x_A").unwrap().values;
        let z1 = &d.column("z1").unwrap().values;
        let cell: Vec<f64> = (0..y.len())
            .filter(|&i| x[i] == 1.0 && z1[i] > 0.0)
            .map(|i| y[i])
            .collect();
        let mean = cell.iter().sum::<f64>() / cell.len() as f64;
        let tol = 3.0 * 0.7_f64.sqrt() / (cell.len() as f64).sqrt();
        assert!((mean - 5.7).abs() <= tol, "cell mean {mean}");
    }

    #[test]
    fn prog_pooled_treatment_effect() {
        let s = spec(DgpName::Prog, 2_000, 8);
        let d = generate(&s).unwrap();
        let r = roles(&s);
        let fit = models::fit(Family::Linear, &d, &r, &RowSet::full(d.nrows()).unwrap()).unwrap();
        let beta = fit.param("beta").unwrap();
        let se = fit.se("beta").unwrap();
        assert!((beta - 2.0).abs() <= 3.0 * se, "beta {beta}");
    }

    #[test]
    fn score_sums_vanish_for_all_dgps() {
        for name in [DgpName::Pred, DgpName::Pred2, DgpName::Prog] {
            let s = spec(name, 300, 3);
            let d = generate(&s).unwrap();
            let r = roles(&s);
            let fit =
                models::fit(Family::Linear, &d, &r, &RowSet::full(d.nrows()).unwrap()).unwrap();
            for j in 0..fit.score_matrix.ncols() {
                let sum: f64 = fit.score_matrix.column(j).sum();
                assert!(sum.abs() <= 1e-6 * d.nrows() as f64);
            }
        }
    }

    #[test]
    fn oracle_step_shift_exact() {
        // exact mean shift at z = 0.5, with 0.5 an observed grid value
        let n = 41;
        let z: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let y: Vec<f64> = z
            .iter()
            .zip(&x)
            .enumerate()
            .map(|(i, (&zi, &xi))| {
                // tiny jitter (not collinear with x) keeps residual variance
                // positive in every half
                let jitter = 1e-3 * if i % 4 < 2 { 1.0 } else { -1.0 };
                if zi <= 0.5 {
                    xi + jitter
                } else {
                    5.0 + xi + jitter
                }
            })
            .collect();
        let mk = |name: &str, values: Vec<f64>| Column {
            name: name.into(),
            kind: ColumnKind::Continuous,
            missing: vec![false; n],
            values,
        };
        let d = Dataset::new(vec![mk("y", y), mk("x_A", x), mk("z1", z)]).unwrap();
        let r = RoleMap {
            endpoint: EndpointSpec::Linear {
                response: "y".into(),
                strata: vec![],
            },
            treatment: "x_A".into(),
            partitioning: vec!["z1".into()],
        };
        let control = ControlParams {
            minbucket: 4,
            minfit: 8,
            ..ControlParams::default()
        };
        let (cut, _) = oracle_best_split(&d, &r, Family::Linear, "z1", &control).unwrap();
        assert!((cut - 0.5).abs() <= 1e-12, "cut {cut}");
    }

    #[test]
    fn oracle_constant_y_smallest_cutpoint() {
        let n = 20;
        let z: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let y = vec![1.0; n];
        let mk = |name: &str, values: Vec<f64>| Column {
            name: name.into(),
            kind: ColumnKind::Continuous,
            missing: vec![false; n],
            values,
        };
        let d = Dataset::new(vec![mk("y", y), mk("x_A", x), mk("z1", z)]).unwrap();
        let r = RoleMap {
            endpoint: EndpointSpec::Linear {
                response: "y".into(),
                strata: vec![],
            },
            treatment: "x_A".into(),
            partitioning: vec!["z1".into()],
        };
        let control = ControlParams {
            minbucket: 4,
            minfit: 8,
            ..ControlParams::default()
        };
        let (cut, obj) = oracle_best_split(&d, &r, Family::Linear, "z1", &control).unwrap();
        // all splits tie (perfect fit everywhere): smallest admissible wins
        assert_eq!(cut, 3.0);
        assert!(obj.is_infinite());
    }
}
