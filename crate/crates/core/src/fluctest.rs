//! Conditional-inference machinery: linear statistics of (transformed
//! partitioning variable) x (score block), closed-form conditional moments
//! under within-stratum permutation, the quadratic-form statistic, and Monte
//! Carlo / exhaustive permutation p-values with Bonferroni adjustment.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::numerics::{pseudo_inverse, DEFAULT_RANK_TOL};

/// Slack toward rejection when comparing permuted statistics to the observed
/// one.
const TIE_SLACK: f64 = 1e-12;

pub const DEFAULT_NPERM: usize = 9_999;
pub const DEFAULT_EXHAUSTIVE_THRESHOLD: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Montecarlo,
    Exhaustive,
    ChisqApprox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstabilityTestResult {
    pub statistic: f64,
    pub rank: usize,
    pub p_raw: f64,
    pub p_adj: f64,
    pub method: Method,
    /// Permutations drawn (Monte Carlo) or enumerated (exhaustive).
    pub permutations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// `t = vec(G^T H)`, stacked by score column: entry `k*p + j` is
/// `sum_i g_ij * h_ik`.
pub fn linear_statistic(g: &DMatrix<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    debug_assert_eq!(g.nrows(), h.nrows());
    let (p, q) = (g.ncols(), h.ncols());
    let gth = g.transpose() * h; // p x q
    let mut t = DVector::zeros(p * q);
    for k in 0..q {
        for j in 0..p {
            t[k * p + j] = gth[(j, k)];
        }
    }
    t
}

/// Closed-form mean and covariance of the linear statistic under uniformly
/// random permutation of the rows of `h` against `g`.
pub fn conditional_moments(g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = g.nrows();
    if m < 2 {
        return Err(Error::Degenerate("need at least 2 rows".into()));
    }
    let (p, q) = (g.ncols(), h.ncols());
    let gsum = g.row_sum().transpose(); // p
    let hbar = h.row_sum().transpose() / m as f64; // q
    let mut mu = DVector::zeros(p * q);
    for k in 0..q {
        for j in 0..p {
            mu[k * p + j] = gsum[j] * hbar[k];
        }
    }
    // V = (1/m) sum (h_i - hbar)(h_i - hbar)^T
    let mut v = DMatrix::zeros(q, q);
    for i in 0..m {
        let d = h.row(i).transpose() - &hbar;
        v += &d * d.transpose();
    }
    v /= m as f64;
    let ggt = g.transpose() * g; // sum g g^T
    let gs_gst = &gsum * gsum.transpose();
    let mf = m as f64;
    let c1 = mf / (mf - 1.0);
    let c2 = 1.0 / (mf - 1.0);
    let mut sigma = DMatrix::zeros(p * q, p * q);
    for k in 0..q {
        for kk in 0..q {
            for j in 0..p {
                for jj in 0..p {
                    sigma[(k * p + j, kk * p + jj)] =
                        c1 * v[(k, kk)] * ggt[(j, jj)] - c2 * v[(k, kk)] * gs_gst[(j, jj)];
                }
            }
        }
    }
    Ok((mu, sigma))
}

/// Stratified moments: sums of per-stratum moments (permutation acts within
/// blocks independently).
pub fn conditional_moments_strat(
    g: &DMatrix<f64>,
    h: &DMatrix<f64>,
    strata: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (p, q) = (g.ncols(), h.ncols());
    let mut mu = DVector::zeros(p * q);
    let mut sigma = DMatrix::zeros(p * q, p * q);
    for block in stratum_blocks(strata) {
        if block.len() < 2 {
            // singleton blocks contribute their fixed value to the mean
            let i = block[0];
            for k in 0..q {
                for j in 0..p {
                    mu[k * p + j] += g[(i, j)] * h[(i, k)];
                }
            }
            continue;
        }
        let gs = DMatrix::from_fn(block.len(), p, |r, c| g[(block[r], c)]);
        let hs = DMatrix::from_fn(block.len(), q, |r, c| h[(block[r], c)]);
        let (mus, sigmas) = conditional_moments(&gs, &hs)?;
        mu += mus;
        sigma += sigmas;
    }
    Ok((mu, sigma))
}

fn stratum_blocks(strata: &[usize]) -> Vec<Vec<usize>> {
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (i, &s) in strata.iter().enumerate() {
        match labels.iter().position(|&l| l == s) {
            Some(b) => blocks[b].push(i),
            None => {
                labels.push(s);
                blocks.push(vec![i]);
            }
        }
    }
    blocks
}

/// Quadratic-form statistic `(t - mu)^T Sigma^+ (t - mu)` with pseudo-rank.
pub fn quad_statistic(t: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> (f64, usize) {
    let (sp, rank) = pseudo_inverse(sigma, DEFAULT_RANK_TOL);
    let d = t - mu;
    let c = (d.transpose() * &sp * &d)[(0, 0)];
    (c.max(0.0), rank)
}

/// One score block (or one ensemble item's block) entering a combined test:
/// the influence columns and the stratum labels its moments are computed
/// under.
struct Component {
    h: DMatrix<f64>,
    mu: DVector<f64>,
    sigma_plus: DMatrix<f64>,
    rank: usize,
}

impl Component {
    fn new(g: &DMatrix<f64>, h: DMatrix<f64>, strata: Option<&[usize]>) -> Result<Self> {
        let (mu, sigma) = match strata {
            Some(s) => conditional_moments_strat(g, &h, s)?,
            None => conditional_moments(g, &h)?,
        };
        let (sigma_plus, rank) = pseudo_inverse(&sigma, DEFAULT_RANK_TOL);
        Ok(Component {
            h,
            mu,
            sigma_plus,
            rank,
        })
    }

    fn statistic(&self, g: &DMatrix<f64>, perm: Option<&[usize]>) -> f64 {
        let t = match perm {
            None => linear_statistic(g, &self.h),
            Some(sigma) => {
                let m = g.nrows();
                let (p, q) = (g.ncols(), self.h.ncols());
                let mut t = DVector::zeros(p * q);
                for i in 0..m {
                    let hi = sigma[i];
                    for k in 0..q {
                        let hv = self.h[(hi, k)];
                        for j in 0..p {
                            t[k * p + j] += g[(i, j)] * hv;
                        }
                    }
                }
                t
            }
        };
        let d = t - &self.mu;
        ((d.transpose() * &self.sigma_plus * &d)[(0, 0)]).max(0.0)
    }
}

/// Number of distinct within-block permutations, saturating at `cap + 1`.
fn total_permutations(blocks: &[Vec<usize>], cap: usize) -> usize {
    let mut total: usize = 1;
    for b in blocks {
        for k in 2..=b.len() {
            total = total.saturating_mul(k);
            if total > cap {
                return cap + 1;
            }
        }
    }
    total
}

fn permutation_within_blocks(blocks: &[Vec<usize>], n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for block in blocks {
        let mut shuffled = block.clone();
        shuffled.shuffle(rng);
        for (slot, &src) in block.iter().zip(&shuffled) {
            perm[*slot] = src;
        }
    }
    perm
}

/// All within-block permutations via an odometer over per-block permutation
/// lists. Only used when the total count is small.
fn enumerate_permutations(blocks: &[Vec<usize>], n: usize) -> Vec<Vec<usize>> {
    fn heaps(items: &[usize]) -> Vec<Vec<usize>> {
        let mut a = items.to_vec();
        let mut out = vec![a.clone()];
        let n = a.len();
        let mut c = vec![0usize; n];
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    a.swap(0, i);
                } else {
                    a.swap(c[i], i);
                }
                out.push(a.clone());
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        out
    }
    let per_block: Vec<Vec<Vec<usize>>> = blocks.iter().map(|b| heaps(b)).collect();
    let mut counters = vec![0usize; blocks.len()];
    let mut out = Vec::new();
    loop {
        let mut perm: Vec<usize> = (0..n).collect();
        for (bi, block) in blocks.iter().enumerate() {
            for (slot, &src) in block.iter().zip(&per_block[bi][counters[bi]]) {
                perm[*slot] = src;
            }
        }
        out.push(perm);
        // advance odometer
        let mut bi = 0;
        loop {
            if bi == blocks.len() {
                return out;
            }
            counters[bi] += 1;
            if counters[bi] < per_block[bi].len() {
                break;
            }
            counters[bi] = 0;
            bi += 1;
        }
    }
}

pub struct PermTestOptions {
    pub nperm: usize,
    pub exhaustive_threshold: usize,
    pub seed: u64,
}

impl Default for PermTestOptions {
    fn default() -> Self {
        PermTestOptions {
            nperm: DEFAULT_NPERM,
            exhaustive_threshold: DEFAULT_EXHAUSTIVE_THRESHOLD,
            seed: 0,
        }
    }
}

fn run_perm_test(
    g: &DMatrix<f64>,
    components: Vec<Component>,
    perm_strata: Option<&[usize]>,
    opts: &PermTestOptions,
) -> Result<InstabilityTestResult> {
    let m = g.nrows();
    if m < 2 {
        return Err(Error::Degenerate("need at least 2 rows".into()));
    }
    let c0: f64 = components.iter().map(|c| c.statistic(g, None)).sum();
    let rank: usize = components.iter().map(|c| c.rank).sum();

    let blocks = match perm_strata {
        Some(s) => stratum_blocks(s),
        None => vec![(0..m).collect()],
    };
    if blocks.iter().all(|b| b.len() < 2) {
        return Ok(InstabilityTestResult {
            statistic: c0,
            rank,
            p_raw: 1.0,
            p_adj: 1.0,
            method: Method::Exhaustive,
            permutations: 1,
            warning: Some("all permutation strata are singletons".into()),
        });
    }

    let total = total_permutations(&blocks, opts.exhaustive_threshold);
    if total <= opts.exhaustive_threshold {
        let perms = enumerate_permutations(&blocks, m);
        let count = perms
            .par_iter()
            .filter(|perm| {
                let c: f64 = components.iter().map(|cm| cm.statistic(g, Some(perm))).sum();
                c >= c0 - TIE_SLACK
            })
            .count();
        Ok(InstabilityTestResult {
            statistic: c0,
            rank,
            p_raw: count as f64 / perms.len() as f64,
            p_adj: f64::NAN,
            method: Method::Exhaustive,
            permutations: perms.len(),
            warning: None,
        })
    } else {
        let b = opts.nperm.max(1);
        // one counter-based stream per replication: identical results for any
        // worker count or execution order
        let count = (0..b)
            .into_par_iter()
            .filter(|&rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(rep as u64 + 1);
                let perm = permutation_within_blocks(&blocks, m, &mut rng);
                let c: f64 = components.iter().map(|cm| cm.statistic(g, Some(&perm))).sum();
                c >= c0 - TIE_SLACK
            })
            .count();
        Ok(InstabilityTestResult {
            statistic: c0,
            rank,
            p_raw: (1.0 + count as f64) / (b as f64 + 1.0),
            p_adj: f64::NAN,
            method: Method::Montecarlo,
            permutations: b,
            warning: None,
        })
    }
}

/// Permutation p-value for the quadratic-form statistic of `G` against `H`,
/// permuting rows of `H` within `strata` (one global stratum if none).
pub fn perm_pvalue(
    g: &DMatrix<f64>,
    h: &DMatrix<f64>,
    strata: Option<&[usize]>,
    opts: &PermTestOptions,
) -> Result<InstabilityTestResult> {
    let comp = Component::new(g, h.clone(), strata)?;
    run_perm_test(g, vec![comp], strata, opts)
}

/// Combined test for the stratified ensemble: per-item quadratic forms (each
/// with its own baseline strata) summed into one statistic, with permutations
/// drawn within the cross-classification of all items' baselines.
pub fn perm_pvalue_combined(
    g: &DMatrix<f64>,
    items: &[(DMatrix<f64>, Vec<usize>)],
    cross_strata: &[usize],
    opts: &PermTestOptions,
) -> Result<InstabilityTestResult> {
    let comps = items
        .iter()
        .map(|(h, s)| Component::new(g, h.clone(), Some(s)))
        .collect::<Result<Vec<_>>>()?;
    run_perm_test(g, comps, Some(cross_strata), opts)
}

/// Asymptotic chi-square approximation on the pseudo-rank; opt-in, flagged
/// approximate.
pub fn chisq_pvalue(statistic: f64, rank: usize) -> f64 {
    if rank == 0 {
        return 1.0;
    }
    let chi = ChiSquared::new(rank as f64).expect("positive dof");
    1.0 - chi.cdf(statistic)
}

/// Bonferroni over the tests actually performed: skipped tests do not
/// inflate the multiplier.
pub fn bonferroni_adjust(p_raws: &[f64]) -> Vec<f64> {
    let k = p_raws.len() as f64;
    p_raws.iter().map(|p| (p * k).min(1.0)).collect()
}

/// Observed quadratic-form statistic only (used for cutpoint search, where no
/// p-value is needed).
pub fn observed_statistic(
    g: &DMatrix<f64>,
    items: &[(DMatrix<f64>, Option<Vec<usize>>)],
) -> Result<f64> {
    let mut total = 0.0;
    for (h, strata) in items {
        let comp = Component::new(g, h.clone(), strata.as_deref())?;
        total += comp.statistic(g, None);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(rows: usize, cols: usize, v: Vec<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, &v)
    }

    #[test]
    fn linear_statistic_zero_for_centered_residuals() {
        let g = mat(4, 1, vec![1.0; 4]);
        let h = mat(4, 1, vec![1.0, -2.0, 0.5, 0.5]);
        let t = linear_statistic(&g, &h);
        assert_relative_eq!(t[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_statistic_group_sums() {
        // one-hot 2-level G: per-group score sums
        let g = mat(4, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let h = mat(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let t = linear_statistic(&g, &h);
        assert_eq!(t.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn linear_statistic_matches_double_loop() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let g = DMatrix::from_fn(6, 1, |_, _| rng.random::<f64>());
        let h = DMatrix::from_fn(6, 2, |_, _| rng.random::<f64>());
        let t = linear_statistic(&g, &h);
        for k in 0..2 {
            let mut s = 0.0;
            for i in 0..6 {
                s += g[(i, 0)] * h[(i, k)];
            }
            assert_relative_eq!(t[k], s, epsilon = 1e-12);
        }
    }

    #[test]
    fn moments_zero_variance_for_constant_h() {
        let g = mat(5, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let h = mat(5, 1, vec![2.0; 5]);
        let (_, sigma) = conditional_moments(&g, &h).unwrap();
        assert!(sigma.amax() <= 1e-12);
    }

    #[test]
    fn moments_zero_mean_for_centered_g() {
        let g = mat(4, 1, vec![-1.0, 1.0, -2.0, 2.0]);
        let h = mat(4, 1, vec![0.3, 0.7, -0.1, 0.2]);
        let (mu, _) = conditional_moments(&g, &h).unwrap();
        assert_relative_eq!(mu[0], 0.0, epsilon = 1e-12);
    }

    /// Empirical mean/covariance over all m! permutations.
    fn empirical_moments(g: &DMatrix<f64>, h: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let m = g.nrows();
        let perms = enumerate_permutations(&[(0..m).collect()], m);
        let dim = g.ncols() * h.ncols();
        let mut mean = DVector::zeros(dim);
        let mut ts = Vec::new();
        for perm in &perms {
            let hp = DMatrix::from_fn(m, h.ncols(), |i, k| h[(perm[i], k)]);
            let t = linear_statistic(g, &hp);
            mean += &t;
            ts.push(t);
        }
        mean /= perms.len() as f64;
        let mut cov = DMatrix::zeros(dim, dim);
        for t in &ts {
            let d = t - &mean;
            cov += &d * d.transpose();
        }
        cov /= perms.len() as f64;
        (mean, cov)
    }

    #[test]
    fn moments_match_exhaustive_enumeration() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for (p, q) in [(1, 1), (2, 1), (1, 2), (2, 3)] {
            let m = 5;
            let g = DMatrix::from_fn(m, p, |_, _| rng.random::<f64>() - 0.5);
            let h = DMatrix::from_fn(m, q, |_, _| rng.random::<f64>() - 0.5);
            let (mu, sigma) = conditional_moments(&g, &h).unwrap();
            let (emu, esigma) = empirical_moments(&g, &h);
            assert_relative_eq!(mu, emu, epsilon = 1e-10);
            assert_relative_eq!(sigma, esigma, epsilon = 1e-10);
        }
    }

    #[test]
    fn quad_statistic_zero_at_mean() {
        let t = DVector::from_vec(vec![1.0, 2.0]);
        let sigma = DMatrix::identity(2, 2);
        let (c, rank) = quad_statistic(&t, &t, &sigma);
        assert_eq!(c, 0.0);
        assert_eq!(rank, 2);
    }

    #[test]
    fn quad_statistic_scalar_case() {
        let t = DVector::from_vec(vec![3.0]);
        let mu = DVector::from_vec(vec![1.0]);
        let sigma = DMatrix::from_vec(1, 1, vec![4.0]);
        let (c, _) = quad_statistic(&t, &mu, &sigma);
        assert_relative_eq!(c, 1.0, epsilon = 1e-12); // ((3-1)/2)^2
    }

    #[test]
    fn quad_statistic_invariant_to_redundant_indicator() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let m = 12;
        let group: Vec<usize> = (0..m).map(|i| i % 3).collect();
        let h = DMatrix::from_fn(m, 1, |i, _| rng.random::<f64>() + group[i] as f64);
        let g_full = DMatrix::from_fn(m, 3, |i, j| if group[i] == j { 1.0 } else { 0.0 });
        let g_red = DMatrix::from_fn(m, 2, |i, j| if group[i] == j { 1.0 } else { 0.0 });
        let c_full = {
            let (mu, sigma) = conditional_moments(&g_full, &h).unwrap();
            quad_statistic(&linear_statistic(&g_full, &h), &mu, &sigma).0
        };
        let c_red = {
            let (mu, sigma) = conditional_moments(&g_red, &h).unwrap();
            quad_statistic(&linear_statistic(&g_red, &h), &mu, &sigma).0
        };
        assert_relative_eq!(c_full, c_red, epsilon = 1e-8);
    }

    #[test]
    fn pvalue_one_for_zero_scores() {
        let g = mat(6, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let h = DMatrix::zeros(6, 1);
        let r = perm_pvalue(&g, &h, None, &PermTestOptions::default()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_raw, 1.0);
    }

    #[test]
    fn monte_carlo_matches_exhaustive() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let m = 7;
        let g = DMatrix::from_fn(m, 1, |_, _| rng.random::<f64>());
        let h = DMatrix::from_fn(m, 1, |_, _| rng.random::<f64>());
        let exact = perm_pvalue(
            &g,
            &h,
            None,
            &PermTestOptions {
                nperm: 0,
                exhaustive_threshold: 10_000,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(exact.method, Method::Exhaustive);
        assert_eq!(exact.permutations, 5_040);
        let mc = perm_pvalue(
            &g,
            &h,
            None,
            &PermTestOptions {
                nperm: 50_000,
                exhaustive_threshold: 10,
                seed: 99,
            },
        )
        .unwrap();
        assert_eq!(mc.method, Method::Montecarlo);
        let p = exact.p_raw;
        let bound = 3.0 * (p * (1.0 - p) / 50_000.0).sqrt();
        assert!(
            (mc.p_raw - p).abs() <= bound + 1.0 / 50_001.0,
            "mc {} exact {} bound {}",
            mc.p_raw,
            p,
            bound
        );
    }

    #[test]
    fn monotone_association_minimal_pvalue() {
        // perfectly monotone association: observed statistic is the unique max
        let m = 10;
        let g = DMatrix::from_fn(m, 1, |i, _| i as f64);
        let h = DMatrix::from_fn(m, 1, |i, _| 2.0 * i as f64 + 1.0);
        let r = perm_pvalue(
            &g,
            &h,
            None,
            &PermTestOptions {
                nperm: 9_999,
                exhaustive_threshold: 10,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(r.p_raw, 1.0 / 10_000.0);
    }

    #[test]
    fn singleton_strata_degenerate() {
        let g = mat(3, 1, vec![1.0, 2.0, 3.0]);
        let h = mat(3, 1, vec![0.5, -0.5, 0.1]);
        let r = perm_pvalue(&g, &h, Some(&[0, 1, 2]), &PermTestOptions::default()).unwrap();
        assert_eq!(r.p_raw, 1.0);
        assert!(r.warning.is_some());
    }

    #[test]
    fn stratified_moments_match_enumeration() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let m = 6;
        let strata = vec![0, 0, 0, 1, 1, 1];
        let g = DMatrix::from_fn(m, 1, |_, _| rng.random::<f64>());
        let h = DMatrix::from_fn(m, 2, |_, _| rng.random::<f64>());
        let (mu, sigma) = conditional_moments_strat(&g, &h, &strata).unwrap();
        // enumerate within-block permutations and compare
        let blocks = stratum_blocks(&strata);
        let perms = enumerate_permutations(&blocks, m);
        assert_eq!(perms.len(), 36);
        let dim = 2;
        let mut mean = DVector::zeros(dim);
        let mut ts = Vec::new();
        for perm in &perms {
            let hp = DMatrix::from_fn(m, 2, |i, k| h[(perm[i], k)]);
            let t = linear_statistic(&g, &hp);
            mean += &t;
            ts.push(t);
        }
        mean /= perms.len() as f64;
        let mut cov = DMatrix::zeros(dim, dim);
        for t in &ts {
            let d = t - &mean;
            cov += &d * d.transpose();
        }
        cov /= perms.len() as f64;
        assert_relative_eq!(mu, mean, epsilon = 1e-10);
        assert_relative_eq!(sigma, cov, epsilon = 1e-10);
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni_adjust(&[0.02, 0.5]), vec![0.04, 1.0]);
        assert_eq!(bonferroni_adjust(&[0.3]), vec![0.3]);
        let ps = vec![0.004, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        assert_relative_eq!(bonferroni_adjust(&ps)[0], 0.04, epsilon = 1e-12);
    }

    #[test]
    fn exhaustive_invariant_under_joint_row_permutation() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(30);
        let m = 6;
        let g = DMatrix::from_fn(m, 1, |_, _| rng.random::<f64>());
        let h = DMatrix::from_fn(m, 1, |_, _| rng.random::<f64>());
        let opts = PermTestOptions {
            nperm: 0,
            exhaustive_threshold: 10_000,
            seed: 5,
        };
        let r1 = perm_pvalue(&g, &h, None, &opts).unwrap();
        let order = [3, 0, 5, 1, 4, 2];
        let gp = DMatrix::from_fn(m, 1, |i, j| g[(order[i], j)]);
        let hp = DMatrix::from_fn(m, 1, |i, j| h[(order[i], j)]);
        let r2 = perm_pvalue(&gp, &hp, None, &opts).unwrap();
        assert_eq!(r1.p_raw, r2.p_raw);
        assert_relative_eq!(r1.statistic, r2.statistic, epsilon = 1e-10);
    }

    #[test]
    fn affine_rescale_of_g_column_invariance() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(40);
        let m = 15;
        let g = DMatrix::from_fn(m, 1, |_, _| rng.random::<f64>());
        let h = DMatrix::from_fn(m, 1, |_, _| rng.random::<f64>());
        let c1 = {
            let (mu, sigma) = conditional_moments(&g, &h).unwrap();
            quad_statistic(&linear_statistic(&g, &h), &mu, &sigma)
        };
        let g2 = g.map(|v| 3.5 * v - 1.2);
        let c2 = {
            let (mu, sigma) = conditional_moments(&g2, &h).unwrap();
            quad_statistic(&linear_statistic(&g2, &h), &mu, &sigma)
        };
        assert_relative_eq!(c1.0, c2.0, epsilon = 1e-8);
        assert_eq!(c1.1, c2.1);
    }

    #[test]
    fn null_pvalues_super_uniform() {
        use rand::prelude::*;
        use rand_distr::StandardNormal;
        let nsim = 2_000;
        let hits: usize = (0..nsim)
            .into_par_iter()
            .filter(|&s| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1_000 + s as u64);
                let m = 25;
                let g = DMatrix::from_fn(m, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
                let h = DMatrix::from_fn(m, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
                let r = perm_pvalue(
                    &g,
                    &h,
                    None,
                    &PermTestOptions {
                        nperm: 199,
                        exhaustive_threshold: 10,
                        seed: s as u64,
                    },
                )
                .unwrap();
                r.p_raw <= 0.05
            })
            .count();
        let bound = 0.05 + 2.0 * (0.05_f64 * 0.95 / nsim as f64).sqrt();
        assert!(
            (hits as f64 / nsim as f64) <= bound,
            "rate {} bound {}",
            hits as f64 / nsim as f64,
            bound
        );
    }
}
