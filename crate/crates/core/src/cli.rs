//! Batch front door: `analyze` runs a partitioning analysis from a JSON
//! config, `simulate` writes synthetic datasets, `selftest` runs the built-in
//! oracle suites. Errors are reported as machine-readable JSON on stderr with
//! documented exit codes (0 ok, 2 config, 3 root fit, 4 I/O).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, write_csv, ColumnSchema, Dataset, RowSet};
use crate::engine::{grow_tree, select_variable, ControlParams, Tree};
use crate::error::{Error, Result};
use crate::fluctest::{perm_pvalue, PermTestOptions};
use crate::models::{self, Family};
use crate::numerics::{finite_diff_gradient, pseudo_inverse, DEFAULT_RANK_TOL};
use crate::report;
use crate::simgen::{self, DgpName, DgpSpec};
use crate::testkit;

#[derive(Debug, Parser)]
#[command(name = "mobpart", version, about = "Model-based recursive partitioning for treatment-subgroup identification")]
pub struct Cli {
    /// Cap on parallel worker threads (fallback: MOBPART_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an analysis described by a JSON config file.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's significance level.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        maxdepth: Option<usize>,
        #[arg(long)]
        minbucket: Option<usize>,
        /// Override the Monte Carlo permutation count.
        #[arg(long)]
        nperm: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output formats (comma separated): json, dot, text, csv.
        #[arg(long, value_delimiter = ',')]
        format: Option<Vec<String>>,
    },
    /// Generate a synthetic dataset (pred, pred2, prog, null) as CSV.
    Simulate {
        dgp: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Extra independent N(0,1) partitioning variables beyond z1.
        #[arg(long, default_value_t = 4)]
        noise_vars: usize,
        /// Output path (default <dgp>.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in oracle suite: gradients, permutation, penrose, type1.
    Selftest { suite: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub data: PathBuf,
    pub schema: Vec<ColumnSchema>,
    pub family: Family,
    pub roles: crate::data::RoleMap,
    #[serde(default)]
    pub control: ControlParams,
    pub output_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
}

fn default_formats() -> Vec<String> {
    vec!["json".into(), "dot".into(), "text".into(), "csv".into()]
}

fn default_ci_level() -> f64 {
    0.95
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 4,
        Error::RootFit(_) => 3,
        _ => 2,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io(_) => "io",
        Error::RootFit(_) => "root-fit",
        _ => "config",
    }
}

fn report_error(e: &Error) -> i32 {
    let payload = serde_json::json!({
        "error": { "kind": error_kind(e), "message": e.to_string() }
    });
    eprintln!("{payload}");
    exit_code(e)
}

fn init_threads(flag: Option<usize>) {
    let cap = flag.or_else(|| {
        std::env::var("MOBPART_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = cap {
        // a pool may already exist (e.g. under a test harness): ignore
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => report_error(&e),
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Analyze {
            config,
            alpha,
            maxdepth,
            minbucket,
            nperm,
            seed,
            format,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(v) = alpha {
                cfg.control.alpha = v;
            }
            if let Some(v) = maxdepth {
                cfg.control.maxdepth = v;
            }
            if let Some(v) = minbucket {
                cfg.control.minbucket = v;
            }
            if let Some(v) = nperm {
                cfg.control.nperm = v;
            }
            if let Some(v) = seed {
                cfg.control.seed = v;
            }
            if let Some(v) = format {
                cfg.formats = v;
            }
            run_analyze(&cfg)?;
            Ok(0)
        }
        Command::Simulate {
            dgp,
            n,
            seed,
            noise_vars,
            out,
        } => {
            let name: DgpName = dgp.parse()?;
            let spec = DgpSpec {
                name,
                n,
                j_noise: noise_vars,
                seed,
            };
            let path = out.unwrap_or_else(|| PathBuf::from(format!("{dgp}.csv")));
            run_simulate(&spec, &path)?;
            Ok(0)
        }
        Command::Selftest { suite } => {
            let ok = run_selftest(&suite)?;
            Ok(if ok { 0 } else { 1 })
        }
    }
}

pub fn load_config(path: &Path) -> Result<AnalysisConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: AnalysisConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    for f in &cfg.formats {
        if !matches!(f.as_str(), "json" | "dot" | "text" | "csv") {
            return Err(Error::Config(format!("unknown output format `{f}`")));
        }
    }
    if !(cfg.ci_level > 0.0 && cfg.ci_level < 1.0) {
        return Err(Error::Config("ci_level must be in (0,1)".into()));
    }
    cfg.control.validate()?;
    Ok(cfg)
}

pub fn run_analyze(cfg: &AnalysisConfig) -> Result<Tree> {
    let data = load_csv(&cfg.data, &cfg.schema)?;
    let tree = grow_tree(&data, &cfg.roles, cfg.family, &cfg.control)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_artifacts(&tree, &data, &cfg.output_dir, &cfg.formats, cfg.ci_level)?;
    Ok(tree)
}

pub fn write_artifacts(
    tree: &Tree,
    data: &Dataset,
    dir: &Path,
    formats: &[String],
    level: f64,
) -> Result<()> {
    for f in formats {
        match f.as_str() {
            "json" => {
                let json = report::render_json(&report::tree_to_json(tree, level));
                std::fs::write(dir.join("tree.json"), json)?;
            }
            "dot" => std::fs::write(dir.join("tree.dot"), report::render_dot(tree, data, level))?,
            "text" => {
                std::fs::write(dir.join("tree.txt"), report::render_text(tree, data, level))?
            }
            "csv" => {
                std::fs::write(
                    dir.join("subgroups.csv"),
                    report::subgroups_csv(tree, data, level),
                )?;
                std::fs::write(dir.join("membership.csv"), report::membership_csv(tree, data)?)?;
            }
            other => return Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
    Ok(())
}

pub fn run_simulate(spec: &DgpSpec, out: &Path) -> Result<()> {
    let data = simgen::generate(spec)?;
    write_csv(&data, out)
}

struct Check {
    name: String,
    measured: f64,
    threshold: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.measured <= self.threshold
    }
}

pub fn run_selftest(suite: &str) -> Result<bool> {
    let checks = match suite {
        "gradients" => selftest_gradients(),
        "permutation" => selftest_permutation(),
        "penrose" => selftest_penrose(),
        "type1" => selftest_type1(),
        other => return Err(Error::Config(format!("unknown selftest suite `{other}`"))),
    };
    let mut all = true;
    println!("{:<40} {:>14} {:>14} {:>6}", "check", "measured", "threshold", "status");
    for c in &checks {
        let ok = c.pass();
        all &= ok;
        println!(
            "{:<40} {:>14.3e} {:>14.3e} {:>6}",
            c.name,
            c.measured,
            c.threshold,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    Ok(all)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Worst relative error between analytic score rows and central finite
/// differences of the per-row log-likelihood, per family.
fn selftest_gradients() -> Vec<Check> {
    let thr = 1e-6;
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    // linear
    let n = 60;
    let x: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
    let y: Vec<f64> = x.iter().map(|&xi| 1.0 + 2.0 * xi + rng.random::<f64>() - 0.5).collect();
    let fit = models::linear::fit(&y, &x, &[]).unwrap();
    let th: Vec<f64> = fit.theta.iter().map(|(_, v)| *v).collect();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let g = finite_diff_gradient(
            |p: &DVector<f64>| models::linear::row_loglik(y[i], x[i], &[], &[p[0], p[1], th[2]]),
            &DVector::from_vec(vec![th[0], th[1]]),
            1e-6,
        )
        .unwrap();
        for j in 0..2 {
            worst = worst.max(rel_err(fit.score_matrix[(i, j)], g[j]));
        }
    }
    out.push(Check {
        name: "gradients/linear".into(),
        measured: worst,
        threshold: thr,
    });

    // gaussian log link with offset
    let off_log: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = x
        .iter()
        .zip(&off_log)
        .map(|(&xi, &o)| (o + 0.5 + 0.3 * xi).exp() + rng.random::<f64>() - 0.5)
        .collect();
    let fit = models::gaussian_log::fit(&y, &off_log, &x).unwrap();
    let th: Vec<f64> = fit.theta.iter().map(|(_, v)| *v).collect();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let g = finite_diff_gradient(
            |p: &DVector<f64>| models::gaussian_log::row_loglik(y[i], off_log[i], x[i], &[p[0], p[1], th[2]]),
            &DVector::from_vec(vec![th[0], th[1]]),
            1e-6,
        )
        .unwrap();
        for j in 0..2 {
            worst = worst.max(rel_err(fit.score_matrix[(i, j)], g[j]));
        }
    }
    out.push(Check {
        name: "gradients/gaussian-log".into(),
        measured: worst,
        threshold: thr,
    });

    // proportional odds (all categories observed)
    let k = 4;
    let yo: Vec<usize> = (0..n)
        .map(|i| ((i % k) + usize::from(x[i] > 0.5 && i % 3 == 0)).min(k - 1))
        .collect();
    let fit = models::prop_odds::fit(&yo, k, &x).unwrap();
    let th: Vec<f64> = fit.theta.iter().map(|(_, v)| *v).collect();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let g = finite_diff_gradient(
            |p: &DVector<f64>| {
                let alphas: Vec<f64> = p.iter().take(k - 1).copied().collect();
                models::prop_odds::row_loglik(yo[i], x[i], &alphas, p[k - 1])
            },
            &DVector::from_vec(th.clone()),
            1e-6,
        )
        .unwrap();
        for j in 0..k {
            worst = worst.max(rel_err(fit.score_matrix[(i, j)], g[j]));
        }
    }
    out.push(Check {
        name: "gradients/polr".into(),
        measured: worst,
        threshold: thr,
    });

    // weibull
    let (t, d, xs) = testkit::simulate_weibull(80, 0.5, 0.3, 0.8, 0.25, 7);
    let fit = models::weibull::fit(&t, &d, &xs).unwrap();
    let th: Vec<f64> = fit.theta.iter().map(|(_, v)| *v).collect();
    let mut worst: f64 = 0.0;
    for i in 0..80 {
        let g = finite_diff_gradient(
            |p: &DVector<f64>| models::weibull::row_loglik(t[i], d[i], xs[i], &[p[0], p[1], p[2]]),
            &DVector::from_vec(th.clone()),
            1e-5,
        )
        .unwrap();
        for j in 0..3 {
            worst = worst.max(rel_err(fit.score_matrix[(i, j)], g[j]));
        }
    }
    out.push(Check {
        name: "gradients/weibull".into(),
        measured: worst,
        threshold: thr,
    });

    // cox: residual-sum identities at the MLE
    let (t, d, xs) = testkit::simulate_cox(80, 0.6, 0.2, 11);
    let fit = models::cox::fit(&t, &d, &xs).unwrap();
    let mart: f64 = fit.score_matrix.column(0).sum();
    let score: f64 = fit.score_matrix.column(1).sum();
    out.push(Check {
        name: "gradients/cox-residual-sums".into(),
        measured: mart.abs().max(score.abs()),
        threshold: 1e-8,
    });
    out
}

/// Monte Carlo permutation p-values against exhaustive enumeration at m=7.
fn selftest_permutation() -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for case in 0..5 {
        let m = 7;
        let g = DMatrix::from_fn(m, 1, |_, _| rng.random::<f64>());
        let h = DMatrix::from_fn(m, 1, |_, _| rng.random::<f64>());
        let exact = perm_pvalue(
            &g,
            &h,
            None,
            &PermTestOptions {
                nperm: 0,
                exhaustive_threshold: 100_000,
                seed: 0,
            },
        )
        .unwrap();
        let b = 20_000;
        let mc = perm_pvalue(
            &g,
            &h,
            None,
            &PermTestOptions {
                nperm: b,
                exhaustive_threshold: 10,
                seed: 1000 + case,
            },
        )
        .unwrap();
        let p = exact.p_raw;
        let bound = 3.0 * (p * (1.0 - p) / b as f64).sqrt() + 1.0 / (b as f64 + 1.0);
        out.push(Check {
            name: format!("permutation/m7-case{case}"),
            measured: (mc.p_raw - p).abs(),
            threshold: bound,
        });
    }
    out
}

/// Moore-Penrose identities for the eigendecomposition pseudo-inverse.
fn selftest_penrose() -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..3 {
        let a = DMatrix::from_fn(6, 4, |_, _| rng.random::<f64>() - 0.5);
        let s = &a * a.transpose(); // PSD, rank <= 4
        let (sp, _) = pseudo_inverse(&s, DEFAULT_RANK_TOL);
        let e1 = (&s * &sp * &s - &s).amax();
        let e2 = (&sp * &s * &sp - &sp).amax();
        let e3 = ((&s * &sp).transpose() - &s * &sp).amax();
        let e4 = ((&sp * &s).transpose() - &sp * &s).amax();
        out.push(Check {
            name: format!("penrose/case{case}"),
            measured: e1.max(e2).max(e3).max(e4),
            threshold: 1e-8,
        });
    }
    out
}

/// Reduced type-I-error study: root-split frequency on the global-null
/// process must stay near the nominal level.
fn selftest_type1() -> Vec<Check> {
    let reps = 100usize;
    let alpha = 0.05;
    let hits: usize = (0..reps)
        .into_par_iter()
        .filter(|&r| {
            let spec = DgpSpec {
                name: DgpName::Null,
                n: 200,
                j_noise: 4,
                seed: 40_000 + r as u64,
            };
            let data = simgen::generate(&spec).unwrap();
            let roles = simgen::roles(&spec);
            let control = ControlParams {
                nperm: 199,
                seed: r as u64,
                ..ControlParams::default()
            };
            let rows = RowSet::full(data.nrows()).unwrap();
            let fit = models::fit(Family::Linear, &data, &roles, &rows).unwrap();
            let (_, winner) =
                select_variable(&data, &roles, &fit, &rows, &control, control.seed ^ 1).unwrap();
            winner.is_some()
        })
        .count();
    let freq = hits as f64 / reps as f64;
    vec![Check {
        name: "type1/null-split-frequency".into(),
        measured: freq,
        threshold: alpha + 2.0 * (alpha * (1.0 - alpha) / reps as f64).sqrt(),
    }]
}
