//! Graphviz DOT export: one directed graph per tree. With an example input
//! the edges carry branch probabilities and the greedy inference path is
//! drawn solid while all other edges are dashed.

use super::models::{CdtModel, SdtModel};
use super::{DistributionLeaf, FeatureLeaf, RoutingNode, SoftTree};
use crate::error::Result;
use crate::policy::PolicyModel;
use std::fmt::Write;

fn fmt_num(v: f64) -> String {
    format!("{v:.3}")
}

fn fmt_vec(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|&v| fmt_num(v)).collect();
    format!("[{}]", parts.join(", "))
}

fn node_label(node: &RoutingNode) -> String {
    match node {
        RoutingNode::Soft(s) => format!("w = {}\\nb = {}", fmt_vec(&s.weights), fmt_num(s.bias)),
        RoutingNode::Hard(h) => {
            let op = if h.go_left_if_greater { ">" } else { "<" };
            format!("x[{}] {op} {}", h.feature_index, fmt_num(h.threshold))
        }
    }
}

trait DotLeaf {
    fn label(&self) -> String;
}

impl DotLeaf for FeatureLeaf {
    fn label(&self) -> String {
        let rows: Vec<String> = self.transform.iter().map(|r| fmt_vec(r)).collect();
        format!("T = [{}]", rows.join("; "))
    }
}

impl DotLeaf for DistributionLeaf {
    fn label(&self) -> String {
        format!("p = {}", fmt_vec(&self.distribution()))
    }
}

/// Emits one `digraph` block for a tree. `input`, when given, is the tree's
/// own input (already normalized / transformed), used for edge
/// probabilities and the greedy-path highlight.
fn tree_to_dot<L: DotLeaf + super::Leaf>(
    out: &mut String,
    graph_name: &str,
    tree: &SoftTree<L>,
    input: Option<&[f64]>,
) -> Result<()> {
    let annotated = match input {
        Some(x) => {
            let fwd = tree.soft_forward(x)?;
            let route = tree.greedy_route(x)?;
            Some((fwd, route))
        }
        None => None,
    };
    writeln!(out, "digraph {graph_name} {{").unwrap();
    writeln!(out, "  node [shape=box];").unwrap();
    let node_count = tree.node_count();
    for (i, node) in tree.nodes().iter().enumerate() {
        writeln!(out, "  n{} [label=\"{}\"];", i + 1, node_label(node)).unwrap();
    }
    for (k, leaf) in tree.leaves().iter().enumerate() {
        let id = node_count + k + 1;
        writeln!(out, "  n{id} [label=\"{}\", shape=ellipse];", leaf.label()).unwrap();
    }
    // Heap numbering: node u has children 2u and 2u+1 (1-based).
    for u in 1..=node_count {
        for (child, is_left) in [(2 * u, true), (2 * u + 1, false)] {
            let mut attrs: Vec<String> = Vec::new();
            if let Some((fwd, route)) = &annotated {
                let p = fwd.left_probs[u - 1];
                let edge_p = if is_left { p } else { 1.0 - p };
                attrs.push(format!("label=\"{}\"", fmt_num(edge_p)));
                let on_path = route
                    .path_nodes
                    .iter()
                    .zip(&route.went_left)
                    .any(|(&n, &left)| n + 1 == u && left == is_left)
                    && on_greedy_path(route, u - 1, node_count);
                if on_path {
                    attrs.push("style=solid".into());
                    attrs.push("penwidth=2.5".into());
                } else {
                    attrs.push("style=dashed".into());
                }
            }
            let attr_str = if attrs.is_empty() {
                String::new()
            } else {
                format!(" [{}]", attrs.join(", "))
            };
            writeln!(out, "  n{u} -> n{child}{attr_str};").unwrap();
        }
    }
    writeln!(out, "}}").unwrap();
    Ok(())
}

fn on_greedy_path(route: &super::GreedyRoute, node: usize, _node_count: usize) -> bool {
    route.path_nodes.contains(&node)
}

pub fn sdt_to_dot(model: &SdtModel, input: Option<&[f64]>) -> Result<String> {
    let mut out = String::new();
    let z = input.map(|x| model.normalizer.normalize(x));
    tree_to_dot(&mut out, "sdt", &model.tree, z.as_deref())?;
    Ok(out)
}

pub fn cdt_to_dot(model: &CdtModel, input: Option<&[f64]>) -> Result<String> {
    let mut out = String::new();
    let z = input.map(|x| model.normalizer.normalize(x));
    // The decision tree's input is the feature vector of the greedily
    // selected feature leaf.
    let features = match &z {
        Some(z) => {
            let route = model.feature_tree.greedy_route(z)?;
            Some(model.feature_tree.leaves()[route.leaf].apply(z))
        }
        None => None,
    };
    tree_to_dot(&mut out, "feature_tree", &model.feature_tree, z.as_deref())?;
    tree_to_dot(
        &mut out,
        "decision_tree",
        &model.decision_tree,
        features.as_deref(),
    )?;
    Ok(out)
}

/// DOT text for any tree model; MLPs have no tree structure to export.
pub fn model_to_dot(model: &PolicyModel, input: Option<&[f64]>) -> Result<String> {
    match model {
        PolicyModel::Sdt(m) => sdt_to_dot(m, input),
        PolicyModel::Cdt(m) => cdt_to_dot(m, input),
        PolicyModel::Mlp(_) => Err(crate::error::Error::UnsupportedMode(
            "DOT export applies to tree models only".into(),
        )),
    }
}
