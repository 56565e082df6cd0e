//! Soft decision trees: probabilistic routing nodes, leaf payloads, the
//! soft forward pass, greedy inference, and discretization into hard
//! univariate trees.
//!
//! A [`SoftTree`] is a perfect binary tree. Internal nodes live in
//! breadth-first order; node `u` (1-based heap numbering) has children `2u`
//! and `2u + 1`. Each internal node routes left with probability
//! `sigmoid(bias + weights . x)`. The same structure serves the SDT, the
//! CDT's feature-learning tree and the CDT's decision-making tree; only the
//! leaf payload differs.

pub mod dot;
pub mod models;
pub mod params;
pub mod serialize;

use crate::autodiff::{stable_sigmoid, Tape, Var};
use crate::error::{Error, Result};
use rand::Rng;

/// Half-open init range for all trainable values.
pub const INIT_RANGE: f64 = 0.1;

/// A multivariate sigmoid routing node.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftNode {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl SoftNode {
    pub fn left_probability(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.weights.len(), x.len());
        let mut z = self.bias;
        for (w, xi) in self.weights.iter().zip(x) {
            z += w * xi;
        }
        stable_sigmoid(z)
    }
}

/// A univariate threshold rule produced by discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardNode {
    pub feature_index: usize,
    pub threshold: f64,
    /// true: go left iff x[feature_index] > threshold;
    /// false: go left iff x[feature_index] < threshold.
    pub go_left_if_greater: bool,
}

impl HardNode {
    pub fn goes_left(&self, x: &[f64]) -> bool {
        let v = x[self.feature_index];
        if self.go_left_if_greater {
            v > self.threshold
        } else {
            v < self.threshold
        }
    }

    /// The sign-consistent soft encoding of this rule: a one-hot weight
    /// vector with +/-1 at the kept feature and bias -sign * threshold, so
    /// that sigmoid(bias + weights . x) > 0.5 exactly when the rule fires.
    pub fn as_weight_vector(&self, dim: usize) -> (Vec<f64>, f64) {
        let sign = if self.go_left_if_greater { 1.0 } else { -1.0 };
        let mut w = vec![0.0; dim];
        w[self.feature_index] = sign;
        (w, -sign * self.threshold)
    }
}

/// Internal node of a tree that may be soft (trainable) or hard
/// (discretized).
#[derive(Debug, Clone, PartialEq)]
pub enum RoutingNode {
    Soft(SoftNode),
    Hard(HardNode),
}

impl RoutingNode {
    pub fn left_probability(&self, x: &[f64]) -> f64 {
        match self {
            RoutingNode::Soft(n) => n.left_probability(x),
            RoutingNode::Hard(n) => {
                if n.goes_left(x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_hard(&self) -> bool {
        matches!(self, RoutingNode::Hard(_))
    }

    pub fn param_count(&self, input_dim: usize) -> u64 {
        match self {
            RoutingNode::Soft(_) => input_dim as u64 + 1,
            RoutingNode::Hard(_) => 2,
        }
    }
}

/// Leaf payload: a K x R linear feature map (no bias column).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLeaf {
    /// Row-major: transform[k][r].
    pub transform: Vec<Vec<f64>>,
}

impl FeatureLeaf {
    pub fn output_dim(&self) -> usize {
        self.transform.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.transform
            .iter()
            .map(|row| row.iter().zip(x).map(|(t, xi)| t * xi).sum())
            .collect()
    }
}

/// Leaf payload: an O-way logit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionLeaf {
    pub logits: Vec<f64>,
}

impl DistributionLeaf {
    pub fn distribution(&self) -> Vec<f64> {
        softmax(&self.logits)
    }
}

/// Numerically-stable softmax of plain values.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let denom: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / denom).collect()
}

/// Common interface over leaf payloads used by parameter flattening.
pub trait Leaf: Clone {
    fn param_count(&self) -> u64;
    fn append_params(&self, out: &mut Vec<f64>);
    /// Reads parameters back from a flat slice; returns the number consumed.
    fn read_params(&mut self, src: &[f64]) -> usize;
}

impl Leaf for FeatureLeaf {
    fn param_count(&self) -> u64 {
        self.transform.iter().map(|r| r.len() as u64).sum()
    }

    fn append_params(&self, out: &mut Vec<f64>) {
        for row in &self.transform {
            out.extend_from_slice(row);
        }
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut i = 0;
        for row in &mut self.transform {
            let n = row.len();
            row.copy_from_slice(&src[i..i + n]);
            i += n;
        }
        i
    }
}

impl Leaf for DistributionLeaf {
    fn param_count(&self) -> u64 {
        self.logits.len() as u64
    }

    fn append_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.logits);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let n = self.logits.len();
        self.logits.copy_from_slice(&src[..n]);
        n
    }
}

/// Result of the soft forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// One probability per leaf; positive and summing to 1.
    pub leaf_probs: Vec<f64>,
    /// Left-branch probability of every internal node, breadth-first.
    pub left_probs: Vec<f64>,
}

/// The leaf selected by greedy inference together with its root-to-leaf
/// path.
#[derive(Debug, Clone)]
pub struct GreedyRoute {
    /// Index of the selected leaf in 0..2^depth.
    pub leaf: usize,
    /// Internal-node indices on the path, root first.
    pub path_nodes: Vec<usize>,
    /// Probability of the branch actually taken at each path node.
    pub branch_probs: Vec<f64>,
    /// Whether the path went left at each path node.
    pub went_left: Vec<bool>,
}

/// A perfect binary tree of routing nodes with one payload per leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTree<L> {
    depth: u32,
    input_dim: usize,
    nodes: Vec<RoutingNode>,
    leaves: Vec<L>,
}

impl<L: Leaf> SoftTree<L> {
    pub fn new(depth: u32, input_dim: usize, nodes: Vec<RoutingNode>, leaves: Vec<L>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Spec("tree depth must be >= 1".into()));
        }
        if input_dim == 0 {
            return Err(Error::Spec("tree input dimension must be >= 1".into()));
        }
        let want_nodes = (1usize << depth) - 1;
        let want_leaves = 1usize << depth;
        if nodes.len() != want_nodes {
            return Err(Error::DimensionMismatch {
                what: "internal node count".into(),
                expected: want_nodes,
                got: nodes.len(),
            });
        }
        if leaves.len() != want_leaves {
            return Err(Error::DimensionMismatch {
                what: "leaf count".into(),
                expected: want_leaves,
                got: leaves.len(),
            });
        }
        for node in &nodes {
            if let RoutingNode::Soft(s) = node {
                if s.weights.len() != input_dim {
                    return Err(Error::DimensionMismatch {
                        what: "node weight length".into(),
                        expected: input_dim,
                        got: s.weights.len(),
                    });
                }
            }
        }
        Ok(SoftTree {
            depth,
            input_dim,
            nodes,
            leaves,
        })
    }

    /// Fresh tree with all weights, biases and leaf parameters drawn from
    /// Uniform(-0.1, 0.1).
    pub fn random(
        depth: u32,
        input_dim: usize,
        rng: &mut impl Rng,
        mut make_leaf: impl FnMut(&mut dyn FnMut() -> f64) -> L,
    ) -> Result<Self> {
        let node_count = (1usize << depth) - 1;
        let leaf_count = 1usize << depth;
        let draw = |rng: &mut dyn rand::RngCore| rng.random_range(-INIT_RANGE..INIT_RANGE);
        let nodes = (0..node_count)
            .map(|_| {
                RoutingNode::Soft(SoftNode {
                    weights: (0..input_dim).map(|_| draw(rng)).collect(),
                    bias: draw(rng),
                })
            })
            .collect();
        let leaves = (0..leaf_count)
            .map(|_| make_leaf(&mut || draw(rng)))
            .collect();
        Self::new(depth, input_dim, nodes, leaves)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn nodes(&self) -> &[RoutingNode] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [RoutingNode] {
        &mut self.nodes
    }

    pub fn leaves(&self) -> &[L] {
        &self.leaves
    }

    pub fn leaves_mut(&mut self) -> &mut [L] {
        &mut self.leaves
    }

    pub fn is_fully_hard(&self) -> bool {
        self.nodes.iter().all(|n| n.is_hard())
    }

    pub fn has_hard_nodes(&self) -> bool {
        self.nodes.iter().any(|n| n.is_hard())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "tree input".into(),
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Soft forward pass: per-leaf path probabilities and per-node
    /// left-branch probabilities.
    pub fn soft_forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_input(x)?;
        let node_count = self.nodes.len();
        let leaf_count = self.leaves.len();
        let left_probs: Vec<f64> = self.nodes.iter().map(|n| n.left_probability(x)).collect();
        // Heap-indexed reach probabilities: slots 0..node_count are internal,
        // the next leaf_count slots are leaves.
        let mut reach = vec![0.0f64; node_count + leaf_count];
        reach[0] = 1.0;
        for i in 0..node_count {
            let p = left_probs[i];
            reach[2 * i + 1] += reach[i] * p;
            reach[2 * i + 2] += reach[i] * (1.0 - p);
        }
        Ok(Forward {
            leaf_probs: reach[node_count..].to_vec(),
            left_probs,
        })
    }

    /// Leaf with the largest path probability; ties go to the lowest index.
    pub fn greedy_route(&self, x: &[f64]) -> Result<GreedyRoute> {
        let fwd = self.soft_forward(x)?;
        let mut best = 0usize;
        for (k, &p) in fwd.leaf_probs.iter().enumerate() {
            if p > fwd.leaf_probs[best] {
                best = k;
            }
        }
        Ok(self.route_to_leaf(best, &fwd.left_probs))
    }

    /// The root-to-leaf path of a specific leaf under given branch
    /// probabilities.
    pub fn route_to_leaf(&self, leaf: usize, left_probs: &[f64]) -> GreedyRoute {
        debug_assert!(leaf < self.leaves.len());
        let mut path_nodes = Vec::with_capacity(self.depth as usize);
        let mut branch_probs = Vec::with_capacity(self.depth as usize);
        let mut went_left = Vec::with_capacity(self.depth as usize);
        let mut node = 0usize;
        for level in (0..self.depth).rev() {
            let go_left = (leaf >> level) & 1 == 0;
            path_nodes.push(node);
            went_left.push(go_left);
            let p = left_probs[node];
            branch_probs.push(if go_left { p } else { 1.0 - p });
            node = 2 * node + if go_left { 1 } else { 2 };
        }
        GreedyRoute {
            leaf,
            path_nodes,
            branch_probs,
            went_left,
        }
    }

    /// Converts every soft node into a hard univariate rule: keep the
    /// feature with the largest absolute weight, threshold at -bias/weight,
    /// inequality direction following the weight's sign. Hard nodes pass
    /// through unchanged, so the operation is idempotent.
    pub fn discretize(&mut self, tree_name: &str) -> Result<()> {
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if let RoutingNode::Soft(s) = node {
                let mut k_star = 0usize;
                for (k, w) in s.weights.iter().enumerate() {
                    if w.abs() > s.weights[k_star].abs() {
                        k_star = k;
                    }
                }
                let w = s.weights[k_star];
                if w == 0.0 {
                    return Err(Error::DegenerateNode(format!(
                        "{tree_name} node {i} has an all-zero weight vector"
                    )));
                }
                *node = RoutingNode::Hard(HardNode {
                    feature_index: k_star,
                    threshold: -s.bias / w,
                    go_left_if_greater: w > 0.0,
                });
            }
        }
        Ok(())
    }

    /// Total parameter count: soft nodes cost input_dim + 1, hard nodes 2,
    /// plus the leaf payloads.
    pub fn param_count(&self) -> u64 {
        let nodes: u64 = self
            .nodes
            .iter()
            .map(|n| n.param_count(self.input_dim))
            .sum();
        let leaves: u64 = self.leaves.iter().map(|l| l.param_count()).sum();
        nodes + leaves
    }

    /// Trainable parameter count (only soft content; errors if any node is
    /// hard since hard trees are not trainable).
    pub fn trainable_param_count(&self) -> Result<usize> {
        if self.has_hard_nodes() {
            return Err(Error::UnsupportedMode(
                "discretized trees are not trainable".into(),
            ));
        }
        Ok(self.nodes.len() * (self.input_dim + 1)
            + self
                .leaves
                .iter()
                .map(|l| l.param_count() as usize)
                .sum::<usize>())
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        for node in &self.nodes {
            match node {
                RoutingNode::Soft(s) => {
                    out.extend_from_slice(&s.weights);
                    out.push(s.bias);
                }
                RoutingNode::Hard(_) => panic!("cannot flatten a discretized tree"),
            }
        }
        for leaf in &self.leaves {
            leaf.append_params(out);
        }
    }

    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut i = 0;
        for node in &mut self.nodes {
            match node {
                RoutingNode::Soft(s) => {
                    let n = s.weights.len();
                    s.weights.copy_from_slice(&src[i..i + n]);
                    i += n;
                    s.bias = src[i];
                    i += 1;
                }
                RoutingNode::Hard(_) => panic!("cannot load params into a discretized tree"),
            }
        }
        for leaf in &mut self.leaves {
            i += leaf.read_params(&src[i..]);
        }
        i
    }

    /// Tape forward: per-leaf path probabilities as tape vars.
    ///
    /// `node_params` is this tree's slice of the flat parameter leaves
    /// (node weights + bias, breadth-first). `input` is either a constant
    /// feature vector or vars produced upstream. Errors if any node has
    /// been discretized.
    pub fn tape_leaf_probs(
        &self,
        tape: &mut Tape,
        node_params: &[Var],
        input: TreeInput<'_>,
    ) -> Result<Vec<Var>> {
        let per_node = self.input_dim + 1;
        debug_assert_eq!(node_params.len(), self.nodes.len() * per_node);
        let node_count = self.nodes.len();
        let mut left: Vec<Var> = Vec::with_capacity(node_count);
        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_hard() {
                return Err(Error::UnsupportedMode(
                    "tape forward through a discretized node".into(),
                ));
            }
            let w = &node_params[i * per_node..i * per_node + self.input_dim];
            let b = node_params[i * per_node + self.input_dim];
            let z = match input {
                TreeInput::Const(x) => tape.dot_const(w, x, b),
                TreeInput::Vars(f) => tape.dot(w, f, b),
            };
            left.push(tape.sigmoid(z));
        }
        self.tape_reach_probs(tape, &left)
    }

    /// Tape forward with the *input* on the tape and the node weights as
    /// constants (for input-gradient explanations).
    pub fn tape_leaf_probs_wrt_input(&self, tape: &mut Tape, x: &[Var]) -> Result<Vec<Var>> {
        debug_assert_eq!(x.len(), self.input_dim);
        let mut left = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let s = match node {
                RoutingNode::Soft(s) => s,
                RoutingNode::Hard(_) => {
                    return Err(Error::UnsupportedMode(
                        "input gradients require a soft (non-discretized) tree".into(),
                    ))
                }
            };
            let wx = tape.weighted_sum_const(x, &s.weights);
            let z = tape.add_const(wx, s.bias);
            left.push(tape.sigmoid(z));
        }
        self.tape_reach_probs(tape, &left)
    }

    fn tape_reach_probs(&self, tape: &mut Tape, left: &[Var]) -> Result<Vec<Var>> {
        let node_count = self.nodes.len();
        let mut reach: Vec<Option<Var>> = vec![None; node_count + self.leaves.len()];
        for i in 0..node_count {
            let p = left[i];
            let q = tape.const_sub(1.0, p);
            let (pl, pr) = match reach[i] {
                None => (p, q), // root: reach = 1
                Some(r) => (tape.mul(r, p), tape.mul(r, q)),
            };
            reach[2 * i + 1] = Some(pl);
            reach[2 * i + 2] = Some(pr);
        }
        Ok(reach[node_count..].iter().map(|v| v.unwrap()).collect())
    }
}

/// Input to a tape forward pass: raw constants or upstream tape vars.
#[derive(Clone, Copy)]
pub enum TreeInput<'a> {
    Const(&'a [f64]),
    Vars(&'a [Var]),
}
