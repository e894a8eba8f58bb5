//! Recursive partitioning driver: per-node model fit, instability tests per
//! (variable, block), smallest-adjusted-p variable selection, cutpoint search
//! by a two-sample quadratic-form statistic, and subgroup extraction.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{complete_cases, Column, ColumnKind, Dataset, RoleMap, RowSet};
use crate::error::{Error, Result};
use crate::fluctest::{
    observed_statistic, perm_pvalue, perm_pvalue_combined, bonferroni_adjust,
    InstabilityTestResult, PermTestOptions, DEFAULT_EXHAUSTIVE_THRESHOLD, DEFAULT_NPERM,
};
use crate::models::{self, classify_from, EffectClass, Family, ModelFit};

/// Nominal variables with more levels than this get ordered threshold splits
/// instead of exhaustive binary partitions.
pub const MAX_EXHAUSTIVE_LEVELS: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlParams {
    pub alpha: f64,
    pub maxdepth: usize,
    pub minbucket: usize,
    /// Minimum rows to attempt splitting a node.
    pub minfit: usize,
    pub nperm: usize,
    pub seed: u64,
    pub exhaustive_threshold: usize,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            alpha: 0.05,
            maxdepth: 2,
            minbucket: 20,
            minfit: 40,
            nperm: DEFAULT_NPERM,
            seed: 0,
            exhaustive_threshold: DEFAULT_EXHAUSTIVE_THRESHOLD,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if self.minbucket < 1 {
            return Err(Error::Config("minbucket must be >= 1".into()));
        }
        if self.minfit < 2 * self.minbucket {
            return Err(Error::Config(format!(
                "minfit ({}) must be at least 2*minbucket ({})",
                self.minfit,
                2 * self.minbucket
            )));
        }
        Ok(())
    }

    fn perm_opts(&self, node_seed: u64) -> PermTestOptions {
        PermTestOptions {
            nperm: self.nperm,
            exhaustive_threshold: self.exhaustive_threshold,
            seed: node_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Alpha,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitKind {
    /// Left iff z <= mu (continuous/ordinal).
    Threshold { mu: f64 },
    /// Left iff z's level index is in the set (nominal).
    Categories { left_levels: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingRoute {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub variable: String,
    #[serde(flatten)]
    pub kind: SplitKind,
    pub missing_route: MissingRoute,
}

impl SplitSpec {
    /// true = left, None = missing.
    pub fn route_value(&self, value: f64, missing: bool) -> bool {
        if missing {
            return self.missing_route == MissingRoute::Left;
        }
        match &self.kind {
            SplitKind::Threshold { mu } => value <= *mu,
            SplitKind::Categories { left_levels } => left_levels.contains(&(value as usize)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableTest {
    pub variable: String,
    pub block: Block,
    #[serde(flatten)]
    pub result: InstabilityTestResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafReason {
    NoSignificantVariable,
    Maxdepth,
    Minfit,
    NoAdmissibleCutpoint,
    FitFailure,
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    /// Breadth-first id, root = 1.
    pub id: usize,
    pub depth: usize,
    pub rows: RowSet,
    /// None only when the fit failed (leaf_reason = FitFailure).
    pub fit: Option<ModelFit>,
    pub tests: Vec<VariableTest>,
    /// Winning (variable, block, p_adj), set whenever some test clears alpha.
    pub winner: Option<(String, Block, f64)>,
    pub split: Option<SplitSpec>,
    pub children: Option<(usize, usize)>,
    pub leaf_reason: Option<LeafReason>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Tree {
    /// Nodes in id order (index = id - 1).
    pub nodes: Vec<TreeNode>,
    pub family: Family,
    pub control: ControlParams,
}

impl Tree {
    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id - 1]
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf()).collect()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }
}

/// Transformation g(Z_j) over the node rows: continuous/ordinal use the value
/// itself (ordinal values are integer level scores), nominal uses full
/// indicator coding. Returns the node-row positions with non-missing Z and
/// the regressor matrix over those positions.
fn regressor(col: &Column, node_rows: &[usize]) -> (Vec<usize>, DMatrix<f64>) {
    let kept: Vec<usize> = (0..node_rows.len())
        .filter(|&p| !col.missing[node_rows[p]])
        .collect();
    let m = kept.len();
    let g = match &col.kind {
        ColumnKind::Nominal { levels } => DMatrix::from_fn(m, levels.len(), |r, c| {
            if col.values[node_rows[kept[r]]] as usize == c {
                1.0
            } else {
                0.0
            }
        }),
        _ => DMatrix::from_fn(m, 1, |r, _| col.values[node_rows[kept[r]]]),
    };
    (kept, g)
}

fn is_constant(col: &Column, node_rows: &[usize], kept: &[usize]) -> bool {
    let mut first = None;
    for &p in kept {
        let v = col.values[node_rows[p]];
        match first {
            None => first = Some(v),
            Some(f) if f != v => return false,
            _ => {}
        }
    }
    true
}

/// Score sub-matrix over the given node-row positions and columns.
fn score_block(fit: &ModelFit, kept: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(kept.len(), cols.len(), |r, c| {
        fit.score_matrix[(kept[r], cols[c])]
    })
}

fn block_test(
    fit: &ModelFit,
    kept: &[usize],
    g: &DMatrix<f64>,
    block: Block,
    opts: &PermTestOptions,
) -> Result<InstabilityTestResult> {
    let cols = match block {
        Block::Alpha => &fit.alpha_cols,
        Block::Beta => &fit.beta_cols,
    };
    if cols.is_empty() {
        return Err(Error::Degenerate("empty score block".into()));
    }
    match &fit.ensemble {
        None => perm_pvalue(g, &score_block(fit, kept, cols), None, opts),
        Some(info) => {
            let items: Vec<(DMatrix<f64>, Vec<usize>)> = info
                .items
                .iter()
                .filter_map(|it| {
                    let icols = match block {
                        Block::Alpha => &it.alpha_cols,
                        Block::Beta => &it.beta_cols,
                    };
                    if icols.is_empty() {
                        return None;
                    }
                    let strata: Vec<usize> = kept.iter().map(|&p| it.strata[p]).collect();
                    Some((score_block(fit, kept, icols), strata))
                })
                .collect();
            if items.is_empty() {
                return Err(Error::Degenerate("empty score block".into()));
            }
            let cross: Vec<usize> = kept.iter().map(|&p| info.cross_strata[p]).collect();
            perm_pvalue_combined(g, &items, &cross, opts)
        }
    }
}

/// Instability tests for every eligible (variable, block) pair, with
/// Bonferroni over the tests actually performed, and the winning pair if its
/// adjusted p clears alpha. Ties break toward the earlier test (variable
/// order, alpha before beta).
pub fn select_variable(
    data: &Dataset,
    roles: &RoleMap,
    fit: &ModelFit,
    rows: &RowSet,
    control: &ControlParams,
    node_seed: u64,
) -> Result<(Vec<VariableTest>, Option<(String, Block, f64)>)> {
    let node_rows = rows.indices();
    let opts = control.perm_opts(node_seed);
    let mut tests: Vec<VariableTest> = Vec::new();
    for name in &roles.partitioning {
        let col = data.column(name)?;
        let (kept, g) = regressor(col, node_rows);
        if kept.len() < control.minbucket.max(2) || is_constant(col, node_rows, &kept) {
            continue;
        }
        for block in [Block::Alpha, Block::Beta] {
            match block_test(fit, &kept, &g, block, &opts) {
                Ok(result) => tests.push(VariableTest {
                    variable: name.clone(),
                    block,
                    result,
                }),
                Err(_) => {} // inestimable test: skipped, does not inflate Bonferroni
            }
        }
    }
    let raws: Vec<f64> = tests.iter().map(|t| t.result.p_raw).collect();
    for (t, adj) in tests.iter_mut().zip(bonferroni_adjust(&raws)) {
        t.result.p_adj = adj;
    }
    // Monte Carlo p-values saturate at 1/(B+1), so several tests can tie at
    // the smallest attainable value; ties break by the larger standardized
    // statistic (Wilson-Hilferty, comparable across ranks), then test order.
    let winner = tests
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.result
                .p_adj
                .partial_cmp(&b.result.p_adj)
                .unwrap()
                .then(
                    wilson_hilferty(&b.result)
                        .partial_cmp(&wilson_hilferty(&a.result))
                        .unwrap(),
                )
                .then(ia.cmp(ib))
        })
        .filter(|(_, t)| t.result.p_adj <= control.alpha)
        .map(|(_, t)| (t.variable.clone(), t.block, t.result.p_adj));
    Ok((tests, winner))
}

/// Wilson-Hilferty normal score of a chi-square statistic: monotone in the
/// asymptotic evidence and comparable across ranks without underflow.
fn wilson_hilferty(result: &InstabilityTestResult) -> f64 {
    let r = result.rank as f64;
    if result.rank == 0 {
        return f64::NEG_INFINITY;
    }
    let v = 2.0 / (9.0 * r);
    ((result.statistic / r).powf(1.0 / 3.0) - 1.0 + v) / v.sqrt()
}

/// Score items for the cutpoint statistic: the concatenated
/// [psi_alpha | psi_beta] columns (per ensemble item with its baseline strata
/// when applicable).
fn cutpoint_items(fit: &ModelFit, kept: &[usize]) -> Vec<(DMatrix<f64>, Option<Vec<usize>>)> {
    match &fit.ensemble {
        None => {
            let cols: Vec<usize> = fit
                .alpha_cols
                .iter()
                .chain(&fit.beta_cols)
                .copied()
                .collect();
            vec![(score_block(fit, kept, &cols), None)]
        }
        Some(info) => info
            .items
            .iter()
            .filter_map(|it| {
                let cols: Vec<usize> =
                    it.alpha_cols.iter().chain(&it.beta_cols).copied().collect();
                if cols.is_empty() {
                    return None;
                }
                let strata: Vec<usize> = kept.iter().map(|&p| it.strata[p]).collect();
                Some((score_block(fit, kept, &cols), Some(strata)))
            })
            .collect(),
    }
}

/// Candidate left-side masks over the kept positions, in deterministic order
/// (so the first maximizer wins ties: smallest threshold / first partition).
fn candidate_splits(
    col: &Column,
    node_rows: &[usize],
    kept: &[usize],
    fit: &ModelFit,
) -> Vec<(SplitKind, Vec<bool>)> {
    let values: Vec<f64> = kept.iter().map(|&p| col.values[node_rows[p]]).collect();
    match &col.kind {
        ColumnKind::Nominal { .. } => {
            let mut observed: Vec<usize> = values.iter().map(|&v| v as usize).collect();
            observed.sort_unstable();
            observed.dedup();
            if observed.len() < 2 {
                return Vec::new();
            }
            let partitions: Vec<Vec<usize>> = if observed.len() <= MAX_EXHAUSTIVE_LEVELS {
                // all binary partitions, anchored on the first observed level
                // to avoid complements
                let rest = &observed[1..];
                let mut out = Vec::new();
                for mask in 0..(1usize << rest.len()) {
                    if mask == (1 << rest.len()) - 1 {
                        continue; // everything left: not a split
                    }
                    let mut s = vec![observed[0]];
                    for (i, &lvl) in rest.iter().enumerate() {
                        if mask & (1 << i) != 0 {
                            s.push(lvl);
                        }
                    }
                    out.push(s);
                }
                out
            } else {
                // too many levels: order by mean treatment score, threshold
                // splits along that ordering
                let beta_mean: Vec<f64> = observed
                    .iter()
                    .map(|&lvl| {
                        let mut s = 0.0;
                        let mut c = 0usize;
                        for (r, &p) in kept.iter().enumerate() {
                            if values[r] as usize == lvl {
                                for &bc in &fit.beta_cols {
                                    s += fit.score_matrix[(p, bc)];
                                }
                                c += 1;
                            }
                        }
                        s / c.max(1) as f64
                    })
                    .collect();
                let mut order: Vec<usize> = (0..observed.len()).collect();
                order.sort_by(|&a, &b| {
                    beta_mean[a]
                        .partial_cmp(&beta_mean[b])
                        .unwrap()
                        .then(observed[a].cmp(&observed[b]))
                });
                (1..observed.len())
                    .map(|k| order[..k].iter().map(|&i| observed[i]).collect())
                    .collect()
            };
            partitions
                .into_iter()
                .map(|left_levels| {
                    let mask: Vec<bool> = values
                        .iter()
                        .map(|&v| left_levels.contains(&(v as usize)))
                        .collect();
                    (SplitKind::Categories { left_levels }, mask)
                })
                .collect()
        }
        _ => {
            let mut uniq = values.clone();
            uniq.sort_by(|a, b| a.partial_cmp(b).unwrap());
            uniq.dedup();
            uniq.pop(); // threshold at the largest value sends nothing right
            uniq.into_iter()
                .map(|mu| {
                    let mask: Vec<bool> = values.iter().map(|&v| v <= mu).collect();
                    (SplitKind::Threshold { mu }, mask)
                })
                .collect()
        }
    }
}

/// Best admissible binary split on `variable` by the two-sample
/// quadratic-form statistic of the split indicator against the concatenated
/// score columns. None when every candidate violates minbucket.
pub fn select_cutpoint(
    data: &Dataset,
    fit: &ModelFit,
    rows: &RowSet,
    variable: &str,
    control: &ControlParams,
) -> Result<Option<SplitSpec>> {
    let node_rows = rows.indices();
    let col = data.column(variable)?;
    let kept: Vec<usize> = (0..node_rows.len())
        .filter(|&p| !col.missing[node_rows[p]])
        .collect();
    let items = cutpoint_items(fit, &kept);
    let mut best: Option<(f64, SplitKind, usize)> = None; // (stat, kind, left count)
    for (kind, mask) in candidate_splits(col, node_rows, &kept, fit) {
        let nl = mask.iter().filter(|&&b| b).count();
        let nr = mask.len() - nl;
        if nl < control.minbucket || nr < control.minbucket {
            continue;
        }
        let g = DMatrix::from_fn(mask.len(), 1, |r, _| if mask[r] { 1.0 } else { 0.0 });
        let stat = observed_statistic(&g, &items)?;
        if best.as_ref().map(|(s, _, _)| stat > *s).unwrap_or(true) {
            best = Some((stat, kind, nl));
        }
    }
    Ok(best.map(|(_, kind, nl)| {
        let nr = kept.len() - nl;
        SplitSpec {
            variable: variable.to_string(),
            kind,
            missing_route: if nl >= nr {
                MissingRoute::Left
            } else {
                MissingRoute::Right
            },
        }
    }))
}

fn apply_split(data: &Dataset, rows: &RowSet, split: &SplitSpec) -> Result<(RowSet, RowSet)> {
    let col = data.column(&split.variable)?;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &i in rows.indices() {
        if split.route_value(col.values[i], col.missing[i]) {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    Ok((RowSet::new(left)?, RowSet::new(right)?))
}

pub fn grow_tree(
    data: &Dataset,
    roles: &RoleMap,
    family: Family,
    control: &ControlParams,
) -> Result<Tree> {
    control.validate()?;
    roles.validate(data)?;
    let mut required = roles.endpoint.required_columns();
    required.push(&roles.treatment);
    let complete = complete_cases(data, &required)?;
    let root_rows =
        RowSet::new(complete).map_err(|_| Error::RootFit("no complete analysis rows".into()))?;

    struct Pending {
        id: usize,
        depth: usize,
        rows: RowSet,
    }
    let mut queue = VecDeque::new();
    queue.push_back(Pending {
        id: 1,
        depth: 0,
        rows: root_rows,
    });
    let mut next_id = 2;
    let mut nodes: Vec<TreeNode> = Vec::new();

    while let Some(pending) = queue.pop_front() {
        let fit = match models::fit(family, data, roles, &pending.rows) {
            Ok(f) => Some(f),
            Err(e) if pending.id == 1 => return Err(Error::RootFit(e.to_string())),
            Err(_) => None,
        };
        let mut node = TreeNode {
            id: pending.id,
            depth: pending.depth,
            rows: pending.rows,
            fit,
            tests: Vec::new(),
            winner: None,
            split: None,
            children: None,
            leaf_reason: None,
        };
        let converged = node.fit.as_ref().map(|f| f.converged).unwrap_or(false);
        if !converged {
            node.leaf_reason = Some(LeafReason::FitFailure);
        } else if node.rows.len() < control.minfit {
            node.leaf_reason = Some(LeafReason::Minfit);
        } else if node.depth >= control.maxdepth {
            node.leaf_reason = Some(LeafReason::Maxdepth);
        } else {
            let node_seed = control.seed ^ node.id as u64;
            let fit_ref = node.fit.as_ref().unwrap();
            let (tests, winner) =
                select_variable(data, roles, fit_ref, &node.rows, control, node_seed)?;
            node.tests = tests;
            match winner {
                None => node.leaf_reason = Some(LeafReason::NoSignificantVariable),
                Some(win) => {
                    let split =
                        select_cutpoint(data, fit_ref, &node.rows, &win.0, control)?;
                    node.winner = Some(win);
                    match split {
                        None => node.leaf_reason = Some(LeafReason::NoAdmissibleCutpoint),
                        Some(split) => {
                            let (lrows, rrows) = apply_split(data, &node.rows, &split)?;
                            node.split = Some(split);
                            node.children = Some((next_id, next_id + 1));
                            queue.push_back(Pending {
                                id: next_id,
                                depth: node.depth + 1,
                                rows: lrows,
                            });
                            queue.push_back(Pending {
                                id: next_id + 1,
                                depth: node.depth + 1,
                                rows: rrows,
                            });
                            next_id += 2;
                        }
                    }
                }
            }
        }
        nodes.push(node);
    }
    Ok(Tree {
        nodes,
        family,
        control: control.clone(),
    })
}

/// Leaf id a data row routes to.
pub fn predict_node(tree: &Tree, data: &Dataset, row: usize) -> Result<usize> {
    let mut node = tree.root();
    while let (Some(split), Some((l, r))) = (&node.split, node.children) {
        let col = data.column(&split.variable)?;
        node = if split.route_value(col.values[row], col.missing[row]) {
            tree.node(l)
        } else {
            tree.node(r)
        };
    }
    Ok(node.id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitAnnotation {
    /// Leaf treatment effects differ across the split (non-overlapping CIs or
    /// differing sign class). Heuristic: a predictive variable may also be
    /// prognostic.
    Predictive,
    PrognosticOnly,
}

impl SplitAnnotation {
    pub fn text(&self) -> &'static str {
        match self {
            SplitAnnotation::Predictive => "predictive (possibly also prognostic)",
            SplitAnnotation::PrognosticOnly => "prognostic only",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathStep {
    pub split: SplitSpec,
    pub left: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreatmentEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    #[serde(flatten)]
    pub class: EffectClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub node_id: usize,
    pub path: Vec<PathStep>,
    pub n: usize,
    pub effects: Vec<TreatmentEstimate>,
    /// Annotation per split variable along the path.
    pub annotations: Vec<(String, SplitAnnotation)>,
}

fn leaf_effects(fit: &ModelFit, level: f64) -> Vec<TreatmentEstimate> {
    fit.treatment_params()
        .into_iter()
        .filter_map(|name| {
            let estimate = fit.param(&name).ok()?;
            let se = fit.se(&name).ok()?;
            Some(TreatmentEstimate {
                name,
                estimate,
                se,
                class: classify_from(estimate, se, level),
            })
        })
        .collect()
}

fn leaves_under(tree: &Tree, id: usize, out: &mut Vec<usize>) {
    let node = tree.node(id);
    match node.children {
        None => out.push(id),
        Some((l, r)) => {
            leaves_under(tree, l, out);
            leaves_under(tree, r, out);
        }
    }
}

/// CI-overlap heuristic: a split is predictive when some treatment parameter
/// shared by a left-side and a right-side leaf has non-overlapping CIs or a
/// differing sign class.
pub fn annotate_split(tree: &Tree, node_id: usize, level: f64) -> Option<SplitAnnotation> {
    let node = tree.node(node_id);
    let (l, r) = node.children?;
    let (mut left_leaves, mut right_leaves) = (Vec::new(), Vec::new());
    leaves_under(tree, l, &mut left_leaves);
    leaves_under(tree, r, &mut right_leaves);
    let effects = |ids: &[usize]| -> Vec<TreatmentEstimate> {
        ids.iter()
            .filter_map(|&id| tree.node(id).fit.as_ref())
            .flat_map(|f| leaf_effects(f, level))
            .collect()
    };
    let le = effects(&left_leaves);
    let re = effects(&right_leaves);
    for a in &le {
        for b in &re {
            if a.name != b.name {
                continue;
            }
            let disjoint = a.class.ci.1 < b.class.ci.0 || b.class.ci.1 < a.class.ci.0;
            if disjoint || a.class.label != b.class.label {
                return Some(SplitAnnotation::Predictive);
            }
        }
    }
    Some(SplitAnnotation::PrognosticOnly)
}

pub fn extract_subgroups(tree: &Tree, level: f64) -> Vec<SubgroupReport> {
    let mut reports = Vec::new();
    // path from root to each leaf
    fn walk(
        tree: &Tree,
        id: usize,
        path: &mut Vec<PathStep>,
        level: f64,
        reports: &mut Vec<SubgroupReport>,
    ) {
        let node = tree.node(id);
        match (&node.split, node.children) {
            (Some(split), Some((l, r))) => {
                path.push(PathStep {
                    split: split.clone(),
                    left: true,
                });
                walk(tree, l, path, level, reports);
                path.last_mut().unwrap().left = false;
                walk(tree, r, path, level, reports);
                path.pop();
            }
            _ => {
                let annotations = path
                    .iter()
                    .zip(path_ancestors(tree, id))
                    .filter_map(|(step, anc)| {
                        annotate_split(tree, anc, level)
                            .map(|a| (step.split.variable.clone(), a))
                    })
                    .collect();
                reports.push(SubgroupReport {
                    node_id: id,
                    path: path.clone(),
                    n: node.rows.len(),
                    effects: node
                        .fit
                        .as_ref()
                        .map(|f| leaf_effects(f, level))
                        .unwrap_or_default(),
                    annotations,
                });
            }
        }
    }
    let mut path = Vec::new();
    walk(tree, 1, &mut path, level, &mut reports);
    reports
}

/// Inner-node ids along the path from root to `leaf_id`, in order.
fn path_ancestors(tree: &Tree, leaf_id: usize) -> Vec<usize> {
    let mut chain = Vec::new();
    fn descend(tree: &Tree, id: usize, target: usize, chain: &mut Vec<usize>) -> bool {
        if id == target {
            return true;
        }
        if let Some((l, r)) = tree.node(id).children {
            chain.push(id);
            if descend(tree, l, target, chain) || descend(tree, r, target, chain) {
                return true;
            }
            chain.pop();
        }
        false
    }
    descend(tree, 1, leaf_id, &mut chain);
    chain
}
