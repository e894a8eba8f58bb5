//! Baseline-stratified proportional-odds ensemble: one sub-model per
//! (item, baseline value) cell, `P(Y6 <= r | Y0 = k, x) =
//! 1 / (1 + exp(-(alpha_rk - beta_k * x)))`. Cells that cannot be estimated
//! (single arm, one category, too few rows, or a failed fit) are discarded.
//! The ensemble score matrix has one column group per estimable cell with
//! rows outside the cell's stratum set to zero, and carries the stratum
//! labels needed for the stratified permutation test.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::models::{prop_odds, EnsembleInfo, ItemGroup, ModelFit};

/// Minimum rows for a cell to be considered estimable.
pub const MIN_CELL_ROWS: usize = 8;

#[derive(Debug, Clone)]
pub struct ItemData {
    pub name: String,
    /// Item value at follow-up, level indices.
    pub y6: Vec<usize>,
    /// Matching baseline value, level indices.
    pub y0: Vec<usize>,
    pub n_levels: usize,
}

pub fn fit(items: &[ItemData], x: &[f64]) -> Result<ModelFit> {
    let n = x.len();
    for it in items {
        if it.y6.len() != n || it.y0.len() != n {
            return Err(Error::Degenerate("input length mismatch".into()));
        }
    }

    struct Cell {
        item: usize,
        rows: Vec<usize>,
        fit: ModelFit,
    }
    let mut cells: Vec<Cell> = Vec::new();
    for (ii, it) in items.iter().enumerate() {
        let max_k = it.y0.iter().copied().max().unwrap_or(0);
        for k in 0..=max_k {
            let rows: Vec<usize> = (0..n).filter(|&i| it.y0[i] == k).collect();
            if rows.len() < MIN_CELL_ROWS {
                continue;
            }
            let yk: Vec<usize> = rows.iter().map(|&i| it.y6[i]).collect();
            let xk: Vec<f64> = rows.iter().map(|&i| x[i]).collect();
            match prop_odds::fit(&yk, it.n_levels, &xk) {
                Ok(f) if f.converged => cells.push(Cell { item: ii, rows, fit: f }),
                _ => {} // inestimable cell, simply discarded
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Inestimable("no estimable (item, baseline) cells".into()));
    }

    let total_cols: usize = cells.iter().map(|c| c.fit.score_matrix.ncols()).sum();
    let mut theta = Vec::new();
    let mut score = DMatrix::zeros(n, total_cols);
    let mut score_names = Vec::with_capacity(total_cols);
    let mut alpha_cols = Vec::new();
    let mut beta_cols = Vec::new();
    let mut vcov = DMatrix::zeros(total_cols, total_cols);
    let mut objective = 0.0;
    let mut groups: Vec<ItemGroup> = items
        .iter()
        .map(|it| ItemGroup {
            name: it.name.clone(),
            alpha_cols: Vec::new(),
            beta_cols: Vec::new(),
            strata: it.y0.clone(),
        })
        .collect();

    let mut col = 0;
    for cell in &cells {
        let it = &items[cell.item];
        let k_label = it.y0[cell.rows[0]];
        let pc = cell.fit.score_matrix.ncols();
        for (j, (name, value)) in cell.fit.theta.iter().enumerate() {
            let full = format!("{}.k{}.{}", it.name, k_label, name);
            theta.push((full.clone(), *value));
            score_names.push(full);
            let gcol = col + j;
            if cell.fit.alpha_cols.contains(&j) {
                alpha_cols.push(gcol);
                groups[cell.item].alpha_cols.push(gcol);
            } else {
                beta_cols.push(gcol);
                groups[cell.item].beta_cols.push(gcol);
            }
            for (ri, &row) in cell.rows.iter().enumerate() {
                score[(row, gcol)] = cell.fit.score_matrix[(ri, j)];
            }
        }
        vcov.view_mut((col, col), (pc, pc)).copy_from(&cell.fit.vcov);
        objective += cell.fit.objective;
        col += pc;
    }

    // cross-classification of all items' baselines, relabelled consecutively
    let mut keys: Vec<Vec<usize>> = (0..n)
        .map(|i| items.iter().map(|it| it.y0[i]).collect())
        .collect();
    let mut uniq = keys.clone();
    uniq.sort();
    uniq.dedup();
    let cross_strata: Vec<usize> = keys
        .drain(..)
        .map(|k| uniq.binary_search(&k).unwrap())
        .collect();

    Ok(ModelFit {
        theta,
        score_matrix: score,
        score_names,
        alpha_cols,
        beta_cols,
        vcov,
        objective,
        converged: true,
        ensemble: Some(EnsembleInfo {
            items: groups,
            cross_strata,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn sim_item(n: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
        let y0: Vec<usize> = (0..n).map(|_| (rng.random::<f64>() * 5.0) as usize).collect();
        let y6: Vec<usize> = y0
            .iter()
            .map(|&k| {
                let drift = (rng.random::<f64>() * 3.0) as i64 - 1;
                ((k as i64 + drift).clamp(0, 4)) as usize
            })
            .collect();
        (y6, y0)
    }

    #[test]
    fn single_arm_cell_discarded() {
        let n = 40;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (mut y6, mut y0) = sim_item(n, &mut rng);
        let mut x: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        // force stratum k=4 to be single-armed
        for i in 0..n {
            if y0[i] == 4 {
                x[i] = 0.0;
            }
        }
        // make sure stratum 4 is populated enough to otherwise qualify
        for i in 0..MIN_CELL_ROWS {
            y0[i] = 4;
            y6[i] = (i % 5) as usize;
            x[i] = 0.0;
        }
        let items = vec![ItemData {
            name: "item1".into(),
            y6,
            y0,
            n_levels: 5,
        }];
        let f = fit(&items, &x).unwrap();
        assert!(f.theta.iter().all(|(n, _)| !n.starts_with("item1.k4.")));
    }

    #[test]
    fn single_item_single_baseline_reduces_to_prop_odds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let n = 60;
        let x: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let y6: Vec<usize> = x
            .iter()
            .map(|&xi| {
                let u: f64 = rng.random();
                (((u * 4.0) as usize) + if xi > 0.5 { 1 } else { 0 }).min(4)
            })
            .collect();
        let y0 = vec![2usize; n];
        let items = vec![ItemData {
            name: "it".into(),
            y6: y6.clone(),
            y0,
            n_levels: 5,
        }];
        let ens = fit(&items, &x).unwrap();
        let single = prop_odds::fit(&y6, 5, &x).unwrap();
        for ((_, a), (_, b)) in ens.theta.iter().zip(&single.theta) {
            assert!((a - b).abs() <= 1e-10);
        }
        assert_eq!(ens.score_matrix.ncols(), single.score_matrix.ncols());
    }

    #[test]
    fn full_design_yields_250_columns() {
        // 10 items x 5 baselines, all five levels observed in every cell
        let n_per_cell = 20;
        let mut y6_template = Vec::new();
        let mut x_template = Vec::new();
        for i in 0..n_per_cell {
            y6_template.push(i % 5);
            x_template.push((i % 2) as f64);
        }
        let n = n_per_cell * 5;
        let mut items = Vec::new();
        let mut y0 = Vec::new();
        let mut y6_one = Vec::new();
        let mut x = Vec::new();
        for k in 0..5 {
            for i in 0..n_per_cell {
                y0.push(k);
                y6_one.push(y6_template[i]);
                x.push(x_template[i]);
            }
        }
        for item in 0..10 {
            items.push(ItemData {
                name: format!("item{item}"),
                y6: y6_one.clone(),
                y0: y0.clone(),
                n_levels: 5,
            });
        }
        let f = fit(&items, &x).unwrap();
        assert_eq!(f.score_matrix.ncols(), 250);
        assert_eq!(f.theta.len(), 250);
        assert_eq!(f.alpha_cols.len(), 200);
        assert_eq!(f.beta_cols.len(), 50);
        assert_eq!(n, 100);
    }

    #[test]
    fn rows_outside_stratum_are_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let n = 100;
        let x: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let (y6, y0) = sim_item(n, &mut rng);
        let items = vec![ItemData {
            name: "a".into(),
            y6,
            y0: y0.clone(),
            n_levels: 5,
        }];
        let f = fit(&items, &x).unwrap();
        for (ci, (name, _)) in f.theta.iter().enumerate() {
            let k: usize = name
                .split(".k")
                .nth(1)
                .unwrap()
                .split('.')
                .next()
                .unwrap()
                .parse()
                .unwrap();
            for i in 0..n {
                if y0[i] != k {
                    assert_eq!(f.score_matrix[(i, ci)], 0.0);
                }
            }
        }
    }
}
