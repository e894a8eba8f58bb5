//! Artifact rendering: canonical tree JSON (stable key order, fixed float
//! format, byte-identical round trip), DOT and indented-text views, and the
//! subgroup / membership CSVs.

use serde::{Deserialize, Serialize};
use serde_json::Number;

use crate::data::Dataset;
use crate::engine::{
    annotate_split, extract_subgroups, predict_node, Block, MissingRoute, SplitKind, SplitSpec,
    Tree, TreeNode,
};
use crate::error::Result;
use crate::models::{classify_from, EffectLabel, ModelFit};

pub const SCHEMA_VERSION: u32 = 1;
pub const CI_NOTE: &str =
    "Confidence intervals are post-selection and should be interpreted with caution.";

/// Fixed 12-significant-digit float literal; all floats in tree.json go
/// through this so re-serialization is byte-identical.
fn fmt_float(x: f64) -> String {
    format!("{:.11e}", x)
}

fn num(x: f64) -> Option<Number> {
    if x.is_finite() {
        fmt_float(x).parse().ok()
    } else {
        None
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeJson {
    pub schema_version: u32,
    pub family: String,
    pub seed: u64,
    pub control: ControlJson,
    pub ci_level: Number,
    pub ci_note: String,
    pub nodes: Vec<NodeJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlJson {
    pub alpha: Number,
    pub maxdepth: u64,
    pub minbucket: u64,
    pub minfit: u64,
    pub nperm: u64,
    pub seed: u64,
    pub exhaustive_threshold: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamJson {
    pub name: String,
    pub estimate: Option<Number>,
    pub se: Option<Number>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectJson {
    pub name: String,
    pub estimate: Option<Number>,
    pub se: Option<Number>,
    pub ci_lower: Option<Number>,
    pub ci_upper: Option<Number>,
    pub class: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestJson {
    pub variable: String,
    pub block: String,
    pub statistic: Option<Number>,
    pub rank: u64,
    pub p_raw: Option<Number>,
    pub p_adj: Option<Number>,
    pub method: String,
    pub permutations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WinnerJson {
    pub variable: String,
    pub block: String,
    pub p_adj: Option<Number>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitJson {
    pub variable: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Number>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left_levels: Option<Vec<u64>>,
    pub missing_route: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: u64,
    pub depth: u64,
    pub n: u64,
    pub converged: bool,
    pub theta: Vec<ParamJson>,
    pub effects: Vec<EffectJson>,
    pub tests: Vec<TestJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winner: Option<WinnerJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub children: Option<[u64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaf_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

fn block_name(b: Block) -> &'static str {
    match b {
        Block::Alpha => "alpha",
        Block::Beta => "beta",
    }
}

fn label_name(l: EffectLabel) -> &'static str {
    match l {
        EffectLabel::Positive => "positive",
        EffectLabel::Negative => "negative",
        EffectLabel::None => "none",
    }
}

fn effects_json(fit: &ModelFit, level: f64) -> Vec<EffectJson> {
    fit.treatment_params()
        .into_iter()
        .filter_map(|name| {
            let estimate = fit.param(&name).ok()?;
            let se = fit.se(&name).ok()?;
            let class = classify_from(estimate, se, level);
            Some(EffectJson {
                name,
                estimate: num(estimate),
                se: num(se),
                ci_lower: num(class.ci.0),
                ci_upper: num(class.ci.1),
                class: label_name(class.label).to_string(),
            })
        })
        .collect()
}

fn node_json(tree: &Tree, node: &TreeNode, level: f64) -> NodeJson {
    let theta = node
        .fit
        .as_ref()
        .map(|f| {
            f.theta
                .iter()
                .enumerate()
                .map(|(k, (name, value))| ParamJson {
                    name: name.clone(),
                    estimate: num(*value),
                    se: {
                        let v = f.vcov[(k, k)];
                        if v > 0.0 {
                            num(v.sqrt())
                        } else {
                            None
                        }
                    },
                })
                .collect()
        })
        .unwrap_or_default();
    let effects = node
        .fit
        .as_ref()
        .map(|f| effects_json(f, level))
        .unwrap_or_default();
    let tests = node
        .tests
        .iter()
        .map(|t| TestJson {
            variable: t.variable.clone(),
            block: block_name(t.block).to_string(),
            statistic: num(t.result.statistic),
            rank: t.result.rank as u64,
            p_raw: num(t.result.p_raw),
            p_adj: num(t.result.p_adj),
            method: match t.result.method {
                crate::fluctest::Method::Montecarlo => "montecarlo".into(),
                crate::fluctest::Method::Exhaustive => "exhaustive".into(),
                crate::fluctest::Method::ChisqApprox => "chisq-approx".into(),
            },
            permutations: t.result.permutations as u64,
            warning: t.result.warning.clone(),
        })
        .collect();
    NodeJson {
        id: node.id as u64,
        depth: node.depth as u64,
        n: node.rows.len() as u64,
        converged: node.fit.as_ref().map(|f| f.converged).unwrap_or(false),
        theta,
        effects,
        tests,
        winner: node.winner.as_ref().map(|(v, b, p)| WinnerJson {
            variable: v.clone(),
            block: block_name(*b).to_string(),
            p_adj: num(*p),
        }),
        split: node.split.as_ref().map(|s| SplitJson {
            variable: s.variable.clone(),
            kind: match s.kind {
                SplitKind::Threshold { .. } => "threshold".into(),
                SplitKind::Categories { .. } => "categories".into(),
            },
            mu: match &s.kind {
                SplitKind::Threshold { mu } => num(*mu),
                _ => None,
            },
            left_levels: match &s.kind {
                SplitKind::Categories { left_levels } => {
                    Some(left_levels.iter().map(|&l| l as u64).collect())
                }
                _ => None,
            },
            missing_route: match s.missing_route {
                MissingRoute::Left => "left".into(),
                MissingRoute::Right => "right".into(),
            },
        }),
        children: node.children.map(|(l, r)| [l as u64, r as u64]),
        leaf_reason: node.leaf_reason.map(|r| {
            match r {
                crate::engine::LeafReason::NoSignificantVariable => "no-significant-variable",
                crate::engine::LeafReason::Maxdepth => "maxdepth",
                crate::engine::LeafReason::Minfit => "minfit",
                crate::engine::LeafReason::NoAdmissibleCutpoint => "no-admissible-cutpoint",
                crate::engine::LeafReason::FitFailure => "fit-failure",
            }
            .to_string()
        }),
        annotation: if node.is_leaf() {
            None
        } else {
            annotate_split(tree, node.id, level).map(|a| a.text().to_string())
        },
    }
}

pub fn tree_to_json(tree: &Tree, level: f64) -> TreeJson {
    TreeJson {
        schema_version: SCHEMA_VERSION,
        family: tree.family.name().to_string(),
        seed: tree.control.seed,
        control: ControlJson {
            alpha: num(tree.control.alpha).expect("finite alpha"),
            maxdepth: tree.control.maxdepth as u64,
            minbucket: tree.control.minbucket as u64,
            minfit: tree.control.minfit as u64,
            nperm: tree.control.nperm as u64,
            seed: tree.control.seed,
            exhaustive_threshold: tree.control.exhaustive_threshold as u64,
        },
        ci_level: num(level).expect("finite level"),
        ci_note: CI_NOTE.to_string(),
        nodes: tree
            .nodes
            .iter()
            .map(|n| node_json(tree, n, level))
            .collect(),
    }
}

pub fn render_json(tj: &TreeJson) -> String {
    let mut s = serde_json::to_string_pretty(tj).expect("tree serialization");
    s.push('\n');
    s
}

/// Human-readable predicate for one side of a split.
pub fn split_text(split: &SplitSpec, left: bool, data: &Dataset) -> String {
    match &split.kind {
        SplitKind::Threshold { mu } => {
            if left {
                format!("{} <= {:.4}", split.variable, mu)
            } else {
                format!("{} > {:.4}", split.variable, mu)
            }
        }
        SplitKind::Categories { left_levels } => {
            let labels: Vec<String> = match data
                .column(&split.variable)
                .ok()
                .and_then(|c| c.kind.levels().map(|l| l.to_vec()))
            {
                Some(levels) => left_levels
                    .iter()
                    .map(|&k| levels.get(k).cloned().unwrap_or_else(|| k.to_string()))
                    .collect(),
                None => left_levels.iter().map(|k| k.to_string()).collect(),
            };
            format!(
                "{} {} {{{}}}",
                split.variable,
                if left { "in" } else { "not in" },
                labels.join(",")
            )
        }
    }
}

fn effect_summary(fit: &ModelFit, level: f64) -> String {
    effects_json(fit, level)
        .iter()
        .map(|e| {
            format!(
                "{}={} ({}, {}) [{}]",
                e.name,
                short(&e.estimate),
                short(&e.ci_lower),
                short(&e.ci_upper),
                e.class
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn short(n: &Option<Number>) -> String {
    n.as_ref()
        .and_then(|v| v.as_f64())
        .map(|v| format!("{:.3}", v))
        .unwrap_or_else(|| "NA".into())
}

pub fn render_dot(tree: &Tree, data: &Dataset, level: f64) -> String {
    let mut out = String::new();
    out.push_str("digraph mobpart {\n");
    out.push_str(&format!("  // seed={}\n", tree.control.seed));
    out.push_str("  node [shape=box];\n");
    for node in &tree.nodes {
        let label = if let (Some(split), Some((_, _, p))) = (&node.split, &node.winner) {
            format!("{}\\np_adj={:.4}", split.variable, p)
        } else {
            let effects = node
                .fit
                .as_ref()
                .map(|f| effect_summary(f, level))
                .unwrap_or_else(|| "fit failed".into());
            format!("n={}\\n{}", node.rows.len(), effects.replace("; ", "\\n"))
        };
        out.push_str(&format!("  n{} [label=\"{}\"];\n", node.id, label));
        if let (Some(split), Some((l, r))) = (&node.split, node.children) {
            let lt = split_text(split, true, data).replace('"', "'");
            let rt = split_text(split, false, data).replace('"', "'");
            // strip the repeated variable name on edges
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{}\"];\n",
                node.id,
                l,
                lt.trim_start_matches(&split.variable).trim()
            ));
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{}\"];\n",
                node.id,
                r,
                rt.trim_start_matches(&split.variable).trim()
            ));
        }
    }
    out.push_str("}\n");
    out
}

pub fn render_text(tree: &Tree, data: &Dataset, level: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "mobpart tree (family={}, seed={})\n",
        tree.family.name(),
        tree.control.seed
    ));
    fn walk(
        tree: &Tree,
        data: &Dataset,
        id: usize,
        indent: usize,
        edge: Option<String>,
        level: f64,
        out: &mut String,
    ) {
        let node = tree.node(id);
        let pad = "  ".repeat(indent);
        let edge_text = edge.map(|e| format!("{e}: ")).unwrap_or_default();
        match (&node.split, node.children) {
            (Some(split), Some((l, r))) => {
                let (_, block, p) = node.winner.clone().expect("inner node has winner");
                out.push_str(&format!(
                    "{pad}[{}] {}n={} | split {} (block {}, p_adj={:.4})\n",
                    node.id,
                    edge_text,
                    node.rows.len(),
                    split.variable,
                    block_name(block),
                    p
                ));
                walk(tree, data, l, indent + 1, Some(split_text(split, true, data)), level, out);
                walk(tree, data, r, indent + 1, Some(split_text(split, false, data)), level, out);
            }
            _ => {
                let effects = node
                    .fit
                    .as_ref()
                    .map(|f| effect_summary(f, level))
                    .unwrap_or_else(|| "fit failed".into());
                let reason = node
                    .leaf_reason
                    .map(|_| String::new())
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{pad}[{}] {}n={} | {}{}\n",
                    node.id,
                    edge_text,
                    node.rows.len(),
                    effects,
                    reason
                ));
            }
        }
    }
    walk(tree, data, 1, 0, None, level, &mut out);
    out.push_str(&format!("note: {CI_NOTE}\n"));
    out
}

/// One row per (leaf, treatment parameter): path predicate, size, estimate
/// with CI, sign class, and the predictive/prognostic annotation of the path.
pub fn subgroups_csv(tree: &Tree, data: &Dataset, level: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!("# seed={}\n", tree.control.seed));
    out.push_str("node_id,path,n,parameter,estimate,se,ci_lower,ci_upper,class,annotations\n");
    for report in extract_subgroups(tree, level) {
        let path = if report.path.is_empty() {
            "(all)".to_string()
        } else {
            report
                .path
                .iter()
                .map(|s| split_text(&s.split, s.left, data))
                .collect::<Vec<_>>()
                .join(" & ")
        };
        let annotations = report
            .annotations
            .iter()
            .map(|(v, a)| format!("{v}: {}", a.text()))
            .collect::<Vec<_>>()
            .join("; ");
        for e in &report.effects {
            out.push_str(&format!(
                "{},\"{}\",{},{},{},{},{},{},{},\"{}\"\n",
                report.node_id,
                path,
                report.n,
                e.name,
                fmt_float(e.estimate),
                fmt_float(e.se),
                fmt_float(e.class.ci.0),
                fmt_float(e.class.ci.1),
                label_name(e.class.label),
                annotations
            ));
        }
    }
    out
}

/// Row-to-leaf map over the whole dataset; rows excluded from the analysis
/// (incomplete endpoint or treatment) are flagged.
pub fn membership_csv(tree: &Tree, data: &Dataset) -> Result<String> {
    let mut out = String::new();
    out.push_str(&format!("# seed={}\n", tree.control.seed));
    out.push_str("row,leaf_id,in_analysis\n");
    let analysis = &tree.root().rows;
    for row in 0..data.nrows() {
        let leaf = predict_node(tree, data, row)?;
        out.push_str(&format!(
            "{},{},{}\n",
            row,
            leaf,
            if analysis.contains(row) { 1 } else { 0 }
        ));
    }
    Ok(out)
}
