//! SDT and CDT policy models: the soft mixture forward pass used for
//! training and action sampling, greedy inference for the interpretable
//! read-out, discretization, and the matrix-decomposition view of a CDT.

use super::{DistributionLeaf, FeatureLeaf, GreedyRoute, RoutingNode, SoftTree, TreeInput};
use crate::autodiff::{Tape, Var};
use crate::env::StateNormalizer;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Model family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sdt,
    Cdt,
    Mlp,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Sdt => write!(f, "sdt"),
            Family::Cdt => write!(f, "cdt"),
            Family::Mlp => write!(f, "mlp"),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sdt" => Ok(Family::Sdt),
            "cdt" => Ok(Family::Cdt),
            "mlp" => Ok(Family::Mlp),
            other => Err(Error::Spec(format!("unknown model family `{other}`"))),
        }
    }
}

/// Which internal nodes to discretize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscretizeMode {
    Sdt,
    FOnly,
    DOnly,
    FAndD,
}

impl std::str::FromStr for DiscretizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sdt" | "all" => Ok(DiscretizeMode::Sdt),
            "f-only" => Ok(DiscretizeMode::FOnly),
            "d-only" => Ok(DiscretizeMode::DOnly),
            "f-and-d" => Ok(DiscretizeMode::FAndD),
            other => Err(Error::Spec(format!("unknown discretization mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for DiscretizeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DiscretizeMode::Sdt => write!(f, "sdt"),
            DiscretizeMode::FOnly => write!(f, "f-only"),
            DiscretizeMode::DOnly => write!(f, "d-only"),
            DiscretizeMode::FAndD => write!(f, "f-and-d"),
        }
    }
}

/// Provenance carried inside every model file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    /// Unix seconds; 0 when produced by a deterministic experiment run.
    pub created: u64,
}

impl ModelMeta {
    pub fn new(seed: u64) -> Self {
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        ModelMeta { seed, created }
    }

    pub fn deterministic(seed: u64) -> Self {
        ModelMeta { seed, created: 0 }
    }
}

/// Soft decision tree classifier/policy over `input_dim`-dimensional inputs
/// with `output_dim` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SdtModel {
    pub tree: SoftTree<DistributionLeaf>,
    pub normalizer: StateNormalizer,
    pub meta: ModelMeta,
}

impl SdtModel {
    pub fn random(
        depth: u32,
        input_dim: usize,
        output_dim: usize,
        rng: &mut impl Rng,
        meta: ModelMeta,
    ) -> Result<Self> {
        check_dims(input_dim, output_dim)?;
        let tree = SoftTree::random(depth, input_dim, rng, |draw| DistributionLeaf {
            logits: (0..output_dim).map(|_| draw()).collect(),
        })?;
        Ok(SdtModel {
            tree,
            normalizer: StateNormalizer::identity(input_dim),
            meta,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.tree.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.tree.leaves()[0].logits.len()
    }

    /// Probability-weighted mixture over all leaves, on a raw state.
    pub fn predict_soft(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.mixture(&self.normalizer.normalize(x))
    }

    /// Mixture on an already-normalized input.
    pub fn mixture(&self, z: &[f64]) -> Result<Vec<f64>> {
        let fwd = self.tree.soft_forward(z)?;
        let mut out = vec![0.0; self.output_dim()];
        for (leaf, &p) in self.tree.leaves().iter().zip(&fwd.leaf_probs) {
            for (o, d) in out.iter_mut().zip(leaf.distribution()) {
                *o += p * d;
            }
        }
        Ok(out)
    }

    /// Distribution of the single most probable leaf plus its path.
    pub fn greedy_infer(&self, x: &[f64]) -> Result<(Vec<f64>, GreedyRoute)> {
        let z = self.normalizer.normalize(x);
        let route = self.tree.greedy_route(&z)?;
        let dist = self.tree.leaves()[route.leaf].distribution();
        Ok((dist, route))
    }

    pub fn discretize(&self) -> Result<SdtModel> {
        let mut out = self.clone();
        out.tree.discretize("tree")?;
        Ok(out)
    }

    pub fn param_count(&self) -> u64 {
        self.tree.param_count()
    }

    pub fn num_trainable_params(&self) -> Result<usize> {
        self.tree.trainable_param_count()
    }

    pub fn get_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.tree.append_params(&mut out);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let n = self.tree.read_params(params);
        debug_assert_eq!(n, params.len());
    }

    /// Per-leaf class distributions as tape vars. These depend only on the
    /// parameters, so a training batch builds them once and reuses them for
    /// every sample.
    pub fn tape_leaf_distributions(&self, tape: &mut Tape, params: &[Var]) -> Result<Vec<Vec<Var>>> {
        let node_params = self.tree.node_count() * (self.input_dim() + 1);
        let o = self.output_dim();
        (0..self.tree.leaf_count())
            .map(|leaf_idx| {
                let logits = &params[node_params + leaf_idx * o..node_params + (leaf_idx + 1) * o];
                tape.softmax(logits)
            })
            .collect()
    }

    /// Mixture probability of `class` reusing prepared leaf distributions.
    pub fn tape_class_prob_prepared(
        &self,
        tape: &mut Tape,
        params: &[Var],
        leaf_dists: &[Vec<Var>],
        x: &[f64],
        class: usize,
    ) -> Result<Var> {
        let z = self.normalizer.normalize(x);
        let node_params = self.tree.node_count() * (self.input_dim() + 1);
        let leaf_probs =
            self.tree
                .tape_leaf_probs(tape, &params[..node_params], TreeInput::Const(&z))?;
        let mut terms = Vec::with_capacity(leaf_probs.len());
        for (leaf_idx, &p) in leaf_probs.iter().enumerate() {
            terms.push(tape.mul(p, leaf_dists[leaf_idx][class]));
        }
        Ok(tape.sum(&terms))
    }

    /// Tape value of the mixture probability of one class, on a raw state.
    /// `params` must hold the full flat parameter vector as tape leaves.
    pub fn tape_class_prob(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: &[f64],
        class: usize,
    ) -> Result<Var> {
        let leaf_dists = self.tape_leaf_distributions(tape, params)?;
        self.tape_class_prob_prepared(tape, params, &leaf_dists, x, class)
    }

    /// Mixture probability of `class` differentiable with respect to the
    /// (normalized) input vars; parameters enter as constants.
    pub fn tape_class_prob_wrt_input(
        &self,
        tape: &mut Tape,
        z: &[Var],
        class: usize,
    ) -> Result<Var> {
        let leaf_probs = self.tree.tape_leaf_probs_wrt_input(tape, z)?;
        let mut terms = Vec::with_capacity(leaf_probs.len());
        for (leaf, &p) in self.tree.leaves().iter().zip(&leaf_probs) {
            terms.push(tape.mul_const(p, leaf.distribution()[class]));
        }
        Ok(tape.sum(&terms))
    }
}

/// Cascading decision tree: a feature-learning tree whose leaves hold K x R
/// linear maps, followed by a decision-making tree routing on the learned
/// K-dimensional features.
#[derive(Debug, Clone, PartialEq)]
pub struct CdtModel {
    pub feature_tree: SoftTree<FeatureLeaf>,
    pub decision_tree: SoftTree<DistributionLeaf>,
    pub normalizer: StateNormalizer,
    pub meta: ModelMeta,
}

impl CdtModel {
    pub fn random(
        d1: u32,
        d2: u32,
        input_dim: usize,
        feature_dim: usize,
        output_dim: usize,
        rng: &mut impl Rng,
        meta: ModelMeta,
    ) -> Result<Self> {
        check_dims(input_dim, output_dim)?;
        if feature_dim == 0 {
            return Err(Error::Spec("intermediate feature dimension must be >= 1".into()));
        }
        let feature_tree = SoftTree::random(d1, input_dim, rng, |draw| FeatureLeaf {
            transform: (0..feature_dim)
                .map(|_| (0..input_dim).map(|_| draw()).collect())
                .collect(),
        })?;
        let decision_tree = SoftTree::random(d2, feature_dim, rng, |draw| DistributionLeaf {
            logits: (0..output_dim).map(|_| draw()).collect(),
        })?;
        Ok(CdtModel {
            feature_tree,
            decision_tree,
            normalizer: StateNormalizer::identity(input_dim),
            meta,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.feature_tree.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.decision_tree.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.decision_tree.leaves()[0].logits.len()
    }

    pub fn predict_soft(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.mixture(&self.normalizer.normalize(x))
    }

    /// Joint mixture over feature-leaf and decision-leaf pairs.
    pub fn mixture(&self, z: &[f64]) -> Result<Vec<f64>> {
        let f_fwd = self.feature_tree.soft_forward(z)?;
        let leaf_dists: Vec<Vec<f64>> = self
            .decision_tree
            .leaves()
            .iter()
            .map(|l| l.distribution())
            .collect();
        let mut out = vec![0.0; self.output_dim()];
        for (f_leaf, &p1) in self.feature_tree.leaves().iter().zip(&f_fwd.leaf_probs) {
            let f = f_leaf.apply(z);
            let d_fwd = self.decision_tree.soft_forward(&f)?;
            for (dist, &p2) in leaf_dists.iter().zip(&d_fwd.leaf_probs) {
                let w = p1 * p2;
                for (o, d) in out.iter_mut().zip(dist) {
                    *o += w * d;
                }
            }
        }
        Ok(out)
    }

    /// Greedy inference: most probable feature leaf, then most probable
    /// decision leaf on its features.
    pub fn greedy_infer(&self, x: &[f64]) -> Result<CdtInference> {
        let z = self.normalizer.normalize(x);
        let feature_route = self.feature_tree.greedy_route(&z)?;
        let features = self.feature_tree.leaves()[feature_route.leaf].apply(&z);
        let decision_route = self.decision_tree.greedy_route(&features)?;
        let distribution = self.decision_tree.leaves()[decision_route.leaf].distribution();
        Ok(CdtInference {
            distribution,
            feature_route,
            decision_route,
            features,
        })
    }

    pub fn discretize(&self, mode: DiscretizeMode) -> Result<CdtModel> {
        let mut out = self.clone();
        match mode {
            DiscretizeMode::FOnly => out.feature_tree.discretize("feature tree")?,
            DiscretizeMode::DOnly => out.decision_tree.discretize("decision tree")?,
            DiscretizeMode::FAndD | DiscretizeMode::Sdt => {
                out.feature_tree.discretize("feature tree")?;
                out.decision_tree.discretize("decision tree")?;
            }
        }
        Ok(out)
    }

    pub fn param_count(&self) -> u64 {
        self.feature_tree.param_count() + self.decision_tree.param_count()
    }

    pub fn num_trainable_params(&self) -> Result<usize> {
        Ok(self.feature_tree.trainable_param_count()?
            + self.decision_tree.trainable_param_count()?)
    }

    pub fn get_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.feature_tree.append_params(&mut out);
        self.decision_tree.append_params(&mut out);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let used = self.feature_tree.read_params(params);
        let used2 = self.decision_tree.read_params(&params[used..]);
        debug_assert_eq!(used + used2, params.len());
    }

    /// The decision-tree routing rules projected back into input space
    /// through feature leaf `u1`: one row (w' . T | b') per internal node
    /// of the decision tree, satisfying (w' T) . x = w' . (T x).
    pub fn effective_weights(&self, u1: usize) -> Result<Vec<Vec<f64>>> {
        if u1 >= self.feature_tree.leaf_count() {
            return Err(Error::Spec(format!(
                "feature leaf index {u1} out of range 0..{}",
                self.feature_tree.leaf_count()
            )));
        }
        let transform = &self.feature_tree.leaves()[u1].transform;
        let r = self.input_dim();
        self.decision_tree
            .nodes()
            .iter()
            .map(|node| {
                let (w, b) = match node {
                    RoutingNode::Soft(s) => (s.weights.clone(), s.bias),
                    RoutingNode::Hard(h) => h.as_weight_vector(self.feature_dim()),
                };
                let mut row = vec![0.0; r + 1];
                for (wk, t_row) in w.iter().zip(transform) {
                    for (ri, t) in t_row.iter().enumerate() {
                        row[ri] += wk * t;
                    }
                }
                row[r] = b;
                Ok(row)
            })
            .collect()
    }

    /// Decision-leaf class distributions as tape vars (parameter-only, so
    /// shared across a batch).
    pub fn tape_leaf_distributions(&self, tape: &mut Tape, params: &[Var]) -> Result<Vec<Vec<Var>>> {
        let r = self.input_dim();
        let k = self.feature_dim();
        let o = self.output_dim();
        let f_nodes = self.feature_tree.node_count() * (r + 1);
        let f_leaves = self.feature_tree.leaf_count() * k * r;
        let d_nodes = self.decision_tree.node_count() * (k + 1);
        let d_logit_params = &params[f_nodes + f_leaves + d_nodes..];
        (0..self.decision_tree.leaf_count())
            .map(|leaf_idx| {
                let logits = &d_logit_params[leaf_idx * o..(leaf_idx + 1) * o];
                tape.softmax(logits)
            })
            .collect()
    }

    /// Joint mixture probability of `class` reusing prepared leaf
    /// distributions.
    pub fn tape_class_prob_prepared(
        &self,
        tape: &mut Tape,
        params: &[Var],
        leaf_dists: &[Vec<Var>],
        x: &[f64],
        class: usize,
    ) -> Result<Var> {
        let z = self.normalizer.normalize(x);
        let r = self.input_dim();
        let k = self.feature_dim();
        let f_nodes = self.feature_tree.node_count() * (r + 1);
        let f_leaves = self.feature_tree.leaf_count() * k * r;
        let d_nodes = self.decision_tree.node_count() * (k + 1);

        let f_leaf_probs =
            self.feature_tree
                .tape_leaf_probs(tape, &params[..f_nodes], TreeInput::Const(&z))?;
        let d_node_params = &params[f_nodes + f_leaves..f_nodes + f_leaves + d_nodes];

        let mut terms = Vec::new();
        for (u1, &p1) in f_leaf_probs.iter().enumerate() {
            // f = T x with T's rows drawn from the parameter leaves.
            let base = f_nodes + u1 * k * r;
            let f_vars: Vec<Var> = (0..k)
                .map(|row| tape.weighted_sum_const(&params[base + row * r..base + (row + 1) * r], &z))
                .collect();
            let d_leaf_probs =
                self.decision_tree
                    .tape_leaf_probs(tape, d_node_params, TreeInput::Vars(&f_vars))?;
            for (u2, &p2) in d_leaf_probs.iter().enumerate() {
                let joint = tape.mul(p1, p2);
                terms.push(tape.mul(joint, leaf_dists[u2][class]));
            }
        }
        Ok(tape.sum(&terms))
    }

    /// Tape value of the joint mixture probability of one class on a raw
    /// state.
    pub fn tape_class_prob(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: &[f64],
        class: usize,
    ) -> Result<Var> {
        let leaf_dists = self.tape_leaf_distributions(tape, params)?;
        self.tape_class_prob_prepared(tape, params, &leaf_dists, x, class)
    }

    /// Joint mixture probability of `class` differentiable with respect to
    /// the (normalized) input vars; parameters enter as constants.
    pub fn tape_class_prob_wrt_input(
        &self,
        tape: &mut Tape,
        z: &[Var],
        class: usize,
    ) -> Result<Var> {
        let f_leaf_probs = self.feature_tree.tape_leaf_probs_wrt_input(tape, z)?;
        let leaf_dists: Vec<f64> = self
            .decision_tree
            .leaves()
            .iter()
            .map(|l| l.distribution()[class])
            .collect();
        let mut terms = Vec::new();
        for (f_leaf, &p1) in self.feature_tree.leaves().iter().zip(&f_leaf_probs) {
            let f_vars: Vec<Var> = f_leaf
                .transform
                .iter()
                .map(|row| tape.weighted_sum_const(z, row))
                .collect();
            let d_leaf_probs = self.decision_tree.tape_leaf_probs_wrt_input(tape, &f_vars)?;
            for (&p2, &dc) in d_leaf_probs.iter().zip(&leaf_dists) {
                let joint = tape.mul(p1, p2);
                terms.push(tape.mul_const(joint, dc));
            }
        }
        Ok(tape.sum(&terms))
    }
}

/// Result of CDT greedy inference.
#[derive(Debug, Clone)]
pub struct CdtInference {
    pub distribution: Vec<f64>,
    pub feature_route: GreedyRoute,
    pub decision_route: GreedyRoute,
    /// Features emitted by the selected feature leaf.
    pub features: Vec<f64>,
}

fn check_dims(input_dim: usize, output_dim: usize) -> Result<()> {
    if input_dim == 0 {
        return Err(Error::Spec("input dimension must be >= 1".into()));
    }
    if output_dim < 2 {
        return Err(Error::Spec("output dimension must be >= 2".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::softmax;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn random_cdt(d1: u32, d2: u32, r: usize, k: usize, o: usize, seed: u64) -> CdtModel {
        CdtModel::random(d1, d2, r, k, o, &mut rng(seed), ModelMeta::deterministic(seed)).unwrap()
    }

    fn random_sdt(d: u32, r: usize, o: usize, seed: u64) -> SdtModel {
        SdtModel::random(d, r, o, &mut rng(seed), ModelMeta::deterministic(seed)).unwrap()
    }

    #[test]
    fn sdt_equal_leaves_ignore_input() {
        let mut model = random_sdt(2, 3, 2, 1);
        let logits = vec![0.8, -0.4];
        for leaf in model.tree.leaves_mut() {
            leaf.logits = logits.clone();
        }
        let want = softmax(&logits);
        for x in [[0.0, 0.0, 0.0], [5.0, -3.0, 1.0], [-2.0, 2.0, 0.3]] {
            let out = model.predict_soft(&x).unwrap();
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sdt_depth_one_even_split_averages_leaves() {
        let mut model = random_sdt(1, 2, 2, 2);
        model.tree.nodes_mut()[0] = RoutingNode::Soft(super::super::SoftNode {
            weights: vec![0.0, 0.0],
            bias: 0.0,
        });
        // Extreme logits approximate one-hot distributions.
        model.tree.leaves_mut()[0].logits = vec![50.0, -50.0];
        model.tree.leaves_mut()[1].logits = vec![-50.0, 50.0];
        let out = model.predict_soft(&[1.0, -1.0]).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-9);
        assert!((out[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn sdt_mixture_matches_leaf_enumeration() {
        let model = random_sdt(3, 4, 3, 3);
        let mut r = rng(17);
        for _ in 0..30 {
            let x: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            let fwd = model.tree.soft_forward(&x).unwrap();
            let mut want = vec![0.0; 3];
            for (leaf, p) in model.tree.leaves().iter().zip(&fwd.leaf_probs) {
                for (w, d) in want.iter_mut().zip(leaf.distribution()) {
                    *w += p * d;
                }
            }
            let got = model.predict_soft(&x).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
            let total: f64 = got.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cdt_identical_feature_leaves_reduce_to_decision_tree() {
        let mut model = random_cdt(1, 2, 3, 2, 2, 4);
        let shared = model.feature_tree.leaves()[0].transform.clone();
        for leaf in model.feature_tree.leaves_mut() {
            leaf.transform = shared.clone();
        }
        let mut r = rng(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
            let f = model.feature_tree.leaves()[0].apply(&x);
            // Decision tree alone on T x.
            let d_fwd = model.decision_tree.soft_forward(&f).unwrap();
            let mut want = vec![0.0; 2];
            for (leaf, p) in model.decision_tree.leaves().iter().zip(&d_fwd.leaf_probs) {
                for (w, d) in want.iter_mut().zip(leaf.distribution()) {
                    *w += p * d;
                }
            }
            let got = model.predict_soft(&x).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cdt_shared_logits_collapse_to_softmax() {
        let mut model = random_cdt(2, 2, 4, 2, 3, 6);
        let logits = vec![0.3, -0.9, 0.1];
        for leaf in model.decision_tree.leaves_mut() {
            leaf.logits = logits.clone();
        }
        let want = softmax(&logits);
        let out = model.predict_soft(&[0.5, -1.0, 2.0, 0.0]).unwrap();
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Joint enumeration oracle for the CDT mixture.
    fn cdt_enumeration(model: &CdtModel, z: &[f64]) -> Vec<f64> {
        let f_fwd = model.feature_tree.soft_forward(z).unwrap();
        let mut out = vec![0.0; model.output_dim()];
        let mut joint_total = 0.0;
        for (u1, f_leaf) in model.feature_tree.leaves().iter().enumerate() {
            let f = f_leaf.apply(z);
            let d_fwd = model.decision_tree.soft_forward(&f).unwrap();
            for (u2, d_leaf) in model.decision_tree.leaves().iter().enumerate() {
                let w = f_fwd.leaf_probs[u1] * d_fwd.leaf_probs[u2];
                joint_total += w;
                for (o, d) in out.iter_mut().zip(d_leaf.distribution()) {
                    *o += w * d;
                }
            }
        }
        assert!((joint_total - 1.0).abs() < 1e-9);
        out
    }

    #[test]
    fn cdt_mixture_matches_joint_enumeration() {
        let model = random_cdt(2, 2, 4, 2, 2, 7);
        let mut r = rng(8);
        for _ in 0..40 {
            let x: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            let want = cdt_enumeration(&model, &x);
            let got = model.predict_soft(&x).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cdt_joint_probability_normalizes() {
        let model = random_cdt(2, 3, 5, 3, 4, 9);
        let mut r = rng(10);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..5).map(|_| r.random_range(-5.0..5.0)).collect();
            let out = model.predict_soft(&x).unwrap();
            let total: f64 = out.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(out.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn cdt_greedy_matches_enumeration_argmax() {
        let model = random_cdt(2, 2, 4, 2, 2, 12);
        let mut r = rng(13);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            let inf = model.greedy_infer(&x).unwrap();
            // Oracle: best feature leaf by path probability, then best
            // decision leaf on its features.
            let f_fwd = model.feature_tree.soft_forward(&x).unwrap();
            let best_f = (0..f_fwd.leaf_probs.len())
                .max_by(|&a, &b| {
                    f_fwd.leaf_probs[a]
                        .partial_cmp(&f_fwd.leaf_probs[b])
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .unwrap();
            assert_eq!(inf.feature_route.leaf, best_f);
            let f = model.feature_tree.leaves()[best_f].apply(&x);
            let d_fwd = model.decision_tree.soft_forward(&f).unwrap();
            let best_d = (0..d_fwd.leaf_probs.len())
                .max_by(|&a, &b| {
                    d_fwd.leaf_probs[a]
                        .partial_cmp(&d_fwd.leaf_probs[b])
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .unwrap();
            assert_eq!(inf.decision_route.leaf, best_d);
            let want = model.decision_tree.leaves()[best_d].distribution();
            for (a, b) in inf.distribution.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn effective_weights_identity() {
        let model = random_cdt(2, 2, 4, 2, 2, 14);
        let mut r = rng(15);
        for u1 in 0..model.feature_tree.leaf_count() {
            let eff = model.effective_weights(u1).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
                let f = model.feature_tree.leaves()[u1].apply(&x);
                for (m, node) in model.decision_tree.nodes().iter().enumerate() {
                    let (w, b) = match node {
                        RoutingNode::Soft(s) => (s.weights.clone(), s.bias),
                        _ => unreachable!(),
                    };
                    let two_stage: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() + b;
                    let direct: f64 = eff[m][..4].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
                        + eff[m][4];
                    assert!((two_stage - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn effective_weights_identity_transform() {
        let mut model = random_cdt(1, 1, 3, 3, 2, 16);
        let eye: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        model.feature_tree.leaves_mut()[0].transform = eye;
        let eff = model.effective_weights(0).unwrap();
        match &model.decision_tree.nodes()[0] {
            RoutingNode::Soft(s) => {
                assert_eq!(&eff[0][..3], s.weights.as_slice());
                assert_eq!(eff[0][3], s.bias);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn effective_weights_single_feature() {
        let mut model = random_cdt(1, 1, 3, 1, 2, 17);
        model.feature_tree.leaves_mut()[0].transform = vec![vec![1.0, 0.0, 0.0]];
        let c = match &model.decision_tree.nodes()[0] {
            RoutingNode::Soft(s) => s.weights[0],
            _ => unreachable!(),
        };
        let eff = model.effective_weights(0).unwrap();
        assert!((eff[0][0] - c).abs() < 1e-15);
        assert_eq!(eff[0][1], 0.0);
        assert_eq!(eff[0][2], 0.0);
    }

    #[test]
    fn effective_weights_bad_leaf_index() {
        let model = random_cdt(1, 1, 2, 1, 2, 18);
        assert!(model.effective_weights(2).is_err());
    }

    #[test]
    fn discretize_modes_touch_the_right_trees() {
        let model = random_cdt(1, 2, 4, 2, 2, 19);
        let f_only = model.discretize(DiscretizeMode::FOnly).unwrap();
        assert!(f_only.feature_tree.is_fully_hard());
        assert!(!f_only.decision_tree.has_hard_nodes());
        let d_only = model.discretize(DiscretizeMode::DOnly).unwrap();
        assert!(!d_only.feature_tree.has_hard_nodes());
        assert!(d_only.decision_tree.is_fully_hard());
        let both = model.discretize(DiscretizeMode::FAndD).unwrap();
        assert!(both.feature_tree.is_fully_hard());
        assert!(both.decision_tree.is_fully_hard());
        // Composition of partial modes equals the combined mode.
        let composed = f_only.discretize(DiscretizeMode::DOnly).unwrap();
        assert_eq!(composed, both);
        // Leaf payloads are untouched.
        assert_eq!(both.feature_tree.leaves(), model.feature_tree.leaves());
        assert_eq!(both.decision_tree.leaves(), model.decision_tree.leaves());
    }

    #[test]
    fn cartpole_cdt_discretization_param_drop() {
        let model = random_cdt(1, 2, 4, 2, 2, 20);
        assert_eq!(model.param_count(), 38);
        let both = model.discretize(DiscretizeMode::FAndD).unwrap();
        assert_eq!(both.param_count(), 32);
    }

    #[test]
    fn degenerate_dims_rejected() {
        let mut r = rng(0);
        assert!(SdtModel::random(2, 0, 2, &mut r, ModelMeta::deterministic(0)).is_err());
        assert!(SdtModel::random(2, 3, 1, &mut r, ModelMeta::deterministic(0)).is_err());
        assert!(CdtModel::random(1, 1, 3, 0, 2, &mut r, ModelMeta::deterministic(0)).is_err());
    }

    #[test]
    fn tape_class_prob_matches_plain_mixture() {
        let sdt = random_sdt(3, 4, 3, 30);
        let cdt = random_cdt(2, 2, 4, 2, 3, 31);
        let mut r = rng(32);
        let mut tape = Tape::new();
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            let sdt_probs = sdt.predict_soft(&x).unwrap();
            let cdt_probs = cdt.predict_soft(&x).unwrap();
            for class in 0..3 {
                tape.clear();
                let params = tape.leaves(&sdt.get_params());
                let v = sdt.tape_class_prob(&mut tape, &params, &x, class).unwrap();
                assert!((tape.value(v) - sdt_probs[class]).abs() < 1e-12);
                tape.clear();
                let params = tape.leaves(&cdt.get_params());
                let v = cdt.tape_class_prob(&mut tape, &params, &x, class).unwrap();
                assert!((tape.value(v) - cdt_probs[class]).abs() < 1e-12);
            }
        }
    }
}
