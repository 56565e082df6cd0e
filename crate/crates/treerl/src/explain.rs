//! Feature-importance extraction and the cross-run stability metric.
//!
//! Three local importance methods are provided: summing the weight vectors
//! along the greedy decision path, the branch-probability-weighted variant,
//! and the gradient of the winning class's soft output. CDT contributions
//! from decision-tree nodes are back-projected into input space through the
//! selected feature leaf's transform. All vectors live in the model's
//! (normalized) input space.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::policy::{argmax, PolicyModel, PolicySpec};
use crate::rng;
use crate::tree::models::{CdtModel, ModelMeta, SdtModel};
use crate::tree::{GreedyRoute, RoutingNode, SoftTree};
use serde::{Deserialize, Serialize};

/// Local explanation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceMethod {
    /// Sum of weight vectors along the greedy path.
    PathSum,
    /// Branch-probability-weighted sum along the greedy path.
    Confidence,
    /// Gradient of the winning class's soft output w.r.t. the input.
    Gradient,
}

impl std::str::FromStr for ImportanceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "path-sum" => Ok(ImportanceMethod::PathSum),
            "confidence" => Ok(ImportanceMethod::Confidence),
            "gradient" => Ok(ImportanceMethod::Gradient),
            other => Err(Error::Spec(format!("unknown importance method `{other}`"))),
        }
    }
}

impl std::fmt::Display for ImportanceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImportanceMethod::PathSum => write!(f, "path-sum"),
            ImportanceMethod::Confidence => write!(f, "confidence"),
            ImportanceMethod::Gradient => write!(f, "gradient"),
        }
    }
}

/// A per-step feature-importance vector in input space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub values: Vec<f64>,
    pub method: ImportanceMethod,
    pub timestep: Option<usize>,
}

/// Node weight vector including bias; hard nodes use their sign-consistent
/// one-hot encoding.
fn node_vector(node: &RoutingNode, dim: usize) -> (Vec<f64>, f64) {
    match node {
        RoutingNode::Soft(s) => (s.weights.clone(), s.bias),
        RoutingNode::Hard(h) => h.as_weight_vector(dim),
    }
}

fn path_contributions<L: crate::tree::Leaf>(
    tree: &SoftTree<L>,
    route: &GreedyRoute,
    weighted: bool,
) -> Vec<(Vec<f64>, f64)> {
    route
        .path_nodes
        .iter()
        .zip(&route.branch_probs)
        .map(|(&node_idx, &p)| {
            let (mut w, b) = node_vector(&tree.nodes()[node_idx], tree.input_dim());
            if weighted {
                for wi in &mut w {
                    *wi *= p;
                }
            }
            (w, b)
        })
        .collect()
}

fn sdt_importance(model: &SdtModel, z: &[f64], weighted: bool) -> Result<Vec<f64>> {
    let route = model.tree.greedy_route(z)?;
    let mut out = vec![0.0; model.input_dim()];
    for (w, _bias) in path_contributions(&model.tree, &route, weighted) {
        for (o, wi) in out.iter_mut().zip(&w) {
            *o += wi;
        }
    }
    Ok(out)
}

fn cdt_importance(model: &CdtModel, z: &[f64], weighted: bool) -> Result<Vec<f64>> {
    let f_route = model.feature_tree.greedy_route(z)?;
    let features = model.feature_tree.leaves()[f_route.leaf].apply(z);
    let d_route = model.decision_tree.greedy_route(&features)?;
    let transform = &model.feature_tree.leaves()[f_route.leaf].transform;
    let mut out = vec![0.0; model.input_dim()];
    for (w, _b) in path_contributions(&model.feature_tree, &f_route, weighted) {
        for (o, wi) in out.iter_mut().zip(&w) {
            *o += wi;
        }
    }
    // Decision nodes act on learned features; project w' through the
    // selected leaf's transform back into input space.
    for (w_prime, _b) in path_contributions(&model.decision_tree, &d_route, weighted) {
        for (wk, row) in w_prime.iter().zip(transform) {
            for (o, t) in out.iter_mut().zip(row) {
                *o += wk * t;
            }
        }
    }
    Ok(out)
}

fn gradient_importance(model: &PolicyModel, z: &[f64]) -> Result<Vec<f64>> {
    if model.is_discretized() {
        return Err(Error::UnsupportedMode(
            "gradient importance requires a soft (non-discretized) model".into(),
        ));
    }
    let mut tape = Tape::new();
    let z_vars = tape.leaves(z);
    let (dist, prob) = match model {
        PolicyModel::Sdt(m) => {
            let dist = m.mixture(z)?;
            let class = argmax(&dist);
            (dist, m.tape_class_prob_wrt_input(&mut tape, &z_vars, class)?)
        }
        PolicyModel::Cdt(m) => {
            let dist = m.mixture(z)?;
            let class = argmax(&dist);
            (dist, m.tape_class_prob_wrt_input(&mut tape, &z_vars, class)?)
        }
        PolicyModel::Mlp(_) => {
            return Err(Error::UnsupportedMode(
                "feature importance applies to tree models".into(),
            ))
        }
    };
    let _ = dist;
    let grads = tape.backward(prob);
    Ok(z_vars.iter().map(|&v| grads.get(v)).collect())
}

/// Local feature importance of a single (raw) state.
pub fn importance(
    model: &PolicyModel,
    x: &[f64],
    method: ImportanceMethod,
) -> Result<ImportanceVector> {
    let z = model.normalizer().normalize(x);
    let values = match (model, method) {
        (PolicyModel::Mlp(_), _) => {
            return Err(Error::UnsupportedMode(
                "feature importance applies to tree models".into(),
            ))
        }
        (PolicyModel::Sdt(m), ImportanceMethod::PathSum) => sdt_importance(m, &z, false)?,
        (PolicyModel::Sdt(m), ImportanceMethod::Confidence) => sdt_importance(m, &z, true)?,
        (PolicyModel::Cdt(m), ImportanceMethod::PathSum) => cdt_importance(m, &z, false)?,
        (PolicyModel::Cdt(m), ImportanceMethod::Confidence) => cdt_importance(m, &z, true)?,
        (_, ImportanceMethod::Gradient) => gradient_importance(model, &z)?,
    };
    Ok(ImportanceVector {
        values,
        method,
        timestep: None,
    })
}

/// Global explanation: the mean of local importance vectors over a state
/// set.
pub fn importance_global(
    model: &PolicyModel,
    states: &[Vec<f64>],
    method: ImportanceMethod,
) -> Result<ImportanceVector> {
    if states.is_empty() {
        return Err(Error::EmptyInput("importance state set".into()));
    }
    let mut total = vec![0.0; model.input_dim()];
    for state in states {
        let local = importance(model, state, method)?;
        for (t, v) in total.iter_mut().zip(&local.values) {
            *t += v;
        }
    }
    for t in &mut total {
        *t /= states.len() as f64;
    }
    Ok(ImportanceVector {
        values: total,
        method,
        timestep: None,
    })
}

/// One agent's normalized node weight vectors: every internal node's
/// (weights, bias) scaled to unit L1 norm, with CDT decision nodes
/// back-projected through each feature leaf first.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub vectors: Vec<Vec<f64>>,
}

fn normalize_l1(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm == 0.0 {
        return Err(Error::DegenerateNode(
            "zero weight vector cannot be L1-normalized".into(),
        ));
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

/// Extracts the weight set of a tree model.
pub fn weight_set(model: &PolicyModel) -> Result<WeightSet> {
    let mut vectors = Vec::new();
    match model {
        PolicyModel::Sdt(m) => {
            for node in m.tree.nodes() {
                let (mut w, b) = node_vector(node, m.input_dim());
                w.push(b);
                vectors.push(normalize_l1(w)?);
            }
        }
        PolicyModel::Cdt(m) => {
            for node in m.feature_tree.nodes() {
                let (mut w, b) = node_vector(node, m.input_dim());
                w.push(b);
                vectors.push(normalize_l1(w)?);
            }
            for u1 in 0..m.feature_tree.leaf_count() {
                for row in m.effective_weights(u1)? {
                    vectors.push(normalize_l1(row)?);
                }
            }
        }
        PolicyModel::Mlp(_) => {
            return Err(Error::UnsupportedMode(
                "weight sets apply to tree models".into(),
            ))
        }
    }
    Ok(WeightSet { vectors })
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Symmetric minimum-matching (Chamfer) L1 distance between the union of
/// weight vectors on each side:
/// D = 1/(2N) sum_n min_m |l_m - x_n|_1 + 1/(2M) sum_m min_n |l_m - x_n|_1.
pub fn stability_distance(side_a: &[WeightSet], side_b: &[WeightSet]) -> Result<f64> {
    let a: Vec<&Vec<f64>> = side_a.iter().flat_map(|s| s.vectors.iter()).collect();
    let b: Vec<&Vec<f64>> = side_b.iter().flat_map(|s| s.vectors.iter()).collect();
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("stability weight set".into()));
    }
    let dim = a[0].len();
    if a.iter().chain(b.iter()).any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            what: "stability weight vectors".into(),
            expected: dim,
            got: a.iter().chain(b.iter()).find(|v| v.len() != dim).unwrap().len(),
        });
    }
    let min_to = |x: &Vec<f64>, side: &[&Vec<f64>]| -> f64 {
        side.iter()
            .map(|v| l1_distance(x, v))
            .fold(f64::INFINITY, f64::min)
    };
    let sum_b: f64 = b.iter().map(|x| min_to(x, &a)).sum();
    let sum_a: f64 = a.iter().map(|x| min_to(x, &b)).sum();
    Ok(sum_b / (2.0 * b.len() as f64) + sum_a / (2.0 * a.len() as f64))
}

/// Aggregated stability comparison for a family of imitators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityResult {
    /// Mean pairwise distance between distinct imitators.
    pub imitator_mean: f64,
    /// Mean distance to freshly initialized random agents.
    pub random_mean: f64,
    /// Std over the random agents.
    pub random_std: f64,
    /// Number of imitators.
    pub imitators: usize,
    /// Number of random agents.
    pub randoms: usize,
}

/// Compares imitators pairwise and against `random_count` random agents of
/// the same architecture drawn from the init distribution.
pub fn stability_report(
    models: &[PolicyModel],
    random_count: usize,
    seed: u64,
) -> Result<StabilityResult> {
    if models.len() < 2 {
        return Err(Error::Spec("stability needs at least two models".into()));
    }
    let arch = architecture(&models[0])?;
    let dims = (models[0].input_dim(), models[0].output_dim());
    let sets: Vec<WeightSet> = models.iter().map(weight_set).collect::<Result<_>>()?;

    let mut pair_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            pair_sum += stability_distance(
                std::slice::from_ref(&sets[i]),
                std::slice::from_ref(&sets[j]),
            )?;
            pairs += 1;
        }
    }
    let imitator_mean = pair_sum / pairs as f64;

    let mut random_means = Vec::with_capacity(random_count);
    for j in 0..random_count {
        let mut agent_rng = rng::stream(rng::sub_seed(seed, "random-agent", j as u64), "init");
        let random_model = arch.build(dims.0, dims.1, &mut agent_rng, ModelMeta::deterministic(seed))?;
        let random_set = weight_set(&random_model)?;
        let mean_over_imitators: f64 = sets
            .iter()
            .map(|s| {
                stability_distance(std::slice::from_ref(s), std::slice::from_ref(&random_set))
            })
            .sum::<Result<f64>>()?
            / sets.len() as f64;
        random_means.push(mean_over_imitators);
    }
    let random_mean = random_means.iter().sum::<f64>() / random_means.len().max(1) as f64;
    let random_var = random_means
        .iter()
        .map(|m| (m - random_mean) * (m - random_mean))
        .sum::<f64>()
        / random_means.len().max(1) as f64;

    Ok(StabilityResult {
        imitator_mean,
        random_mean,
        random_std: random_var.sqrt(),
        imitators: models.len(),
        randoms: random_count,
    })
}

/// The architecture of a model, for building comparable random agents.
fn architecture(model: &PolicyModel) -> Result<PolicySpec> {
    Ok(match model {
        PolicyModel::Sdt(m) => PolicySpec::Sdt {
            depth: m.tree.depth(),
        },
        PolicyModel::Cdt(m) => PolicySpec::Cdt {
            d1: m.feature_tree.depth(),
            d2: m.decision_tree.depth(),
            k: m.feature_dim(),
        },
        PolicyModel::Mlp(_) => {
            return Err(Error::UnsupportedMode(
                "stability applies to tree models".into(),
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::models::DiscretizeMode;
    use crate::tree::{DistributionLeaf, SoftNode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn sdt_with_weights(weights: Vec<Vec<f64>>, biases: Vec<f64>, dim: usize) -> SdtModel {
        let depth = (weights.len() + 1).ilog2();
        let nodes = weights
            .into_iter()
            .zip(biases)
            .map(|(w, b)| RoutingNode::Soft(SoftNode { weights: w, bias: b }))
            .collect();
        let leaves = (0..1usize << depth)
            .map(|i| DistributionLeaf {
                logits: vec![i as f64 * 0.1, -(i as f64) * 0.1],
            })
            .collect();
        SdtModel {
            tree: SoftTree::new(depth, dim, nodes, leaves).unwrap(),
            normalizer: crate::env::StateNormalizer::identity(dim),
            meta: ModelMeta::deterministic(0),
        }
    }

    #[test]
    fn path_sum_depth_one_is_the_node_weights() {
        let model = PolicyModel::Sdt(sdt_with_weights(vec![vec![1.0, -2.0]], vec![0.3], 2));
        let iv = importance(&model, &[0.5, 0.5], ImportanceMethod::PathSum).unwrap();
        assert_eq!(iv.values, vec![1.0, -2.0]);
    }

    #[test]
    fn path_sum_adds_along_the_path() {
        // Root pushes strongly left; left child has weight [0, 1].
        let model = PolicyModel::Sdt(sdt_with_weights(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![7.0, 7.0]],
            vec![5.0, 0.0, 0.0],
            2,
        ));
        let iv = importance(&model, &[0.0, 0.0], ImportanceMethod::PathSum).unwrap();
        assert_eq!(iv.values, vec![1.0, 1.0]);
    }

    #[test]
    fn confidence_scales_by_branch_probability() {
        let model = PolicyModel::Sdt(sdt_with_weights(vec![vec![1.0, -2.0]], vec![0.0], 2));
        // At the origin the branch probability is exactly 0.5.
        let iv = importance(&model, &[0.0, 0.0], ImportanceMethod::Confidence).unwrap();
        assert_eq!(iv.values, vec![0.5, -1.0]);
    }

    #[test]
    fn confidence_approaches_path_sum_when_saturated() {
        // Huge bias saturates the branch probability toward 1.
        let model = PolicyModel::Sdt(sdt_with_weights(vec![vec![0.5, 0.25]], vec![40.0], 2));
        let a = importance(&model, &[0.1, 0.1], ImportanceMethod::PathSum).unwrap();
        let b = importance(&model, &[0.1, 0.1], ImportanceMethod::Confidence).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn confidence_bounded_by_absolute_path_sum() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let model = SdtModel::random(3, 4, 2, &mut rng, ModelMeta::deterministic(5)).unwrap();
        let pm = PolicyModel::Sdt(model.clone());
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let conf = importance(&pm, &x, ImportanceMethod::Confidence).unwrap();
            let route = model.tree.greedy_route(&x).unwrap();
            for k in 0..4 {
                let bound: f64 = route
                    .path_nodes
                    .iter()
                    .map(|&n| match &model.tree.nodes()[n] {
                        RoutingNode::Soft(s) => s.weights[k].abs(),
                        _ => unreachable!(),
                    })
                    .sum();
                assert!(conf.values[k].abs() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn cdt_back_projection_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let model = CdtModel::random(1, 2, 3, 2, 2, &mut rng, ModelMeta::deterministic(6)).unwrap();
        let pm = PolicyModel::Cdt(model.clone());
        let x = [0.4, -0.2, 0.8];
        let iv = importance(&pm, &x, ImportanceMethod::PathSum).unwrap();
        // Oracle: F path weights plus (sum of D path node weights) . T.
        let f_route = model.feature_tree.greedy_route(&x).unwrap();
        let t = &model.feature_tree.leaves()[f_route.leaf].transform;
        let f = model.feature_tree.leaves()[f_route.leaf].apply(&x);
        let d_route = model.decision_tree.greedy_route(&f).unwrap();
        let mut want = vec![0.0; 3];
        for &n in &f_route.path_nodes {
            if let RoutingNode::Soft(s) = &model.feature_tree.nodes()[n] {
                for (w, wi) in want.iter_mut().zip(&s.weights) {
                    *w += wi;
                }
            }
        }
        let mut w_prime_sum = vec![0.0; 2];
        for &n in &d_route.path_nodes {
            if let RoutingNode::Soft(s) = &model.decision_tree.nodes()[n] {
                for (acc, wi) in w_prime_sum.iter_mut().zip(&s.weights) {
                    *acc += wi;
                }
            }
        }
        for (k, row) in t.iter().enumerate() {
            for (w, ti) in want.iter_mut().zip(row) {
                *w += w_prime_sum[k] * ti;
            }
        }
        for (a, b) in iv.values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_constant_model_is_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut model = SdtModel::random(2, 3, 2, &mut rng, ModelMeta::deterministic(7)).unwrap();
        let shared = vec![0.4, -0.4];
        for leaf in model.tree.leaves_mut() {
            leaf.logits = shared.clone();
        }
        let iv = importance(
            &PolicyModel::Sdt(model),
            &[0.2, -0.5, 1.0],
            ImportanceMethod::Gradient,
        )
        .unwrap();
        assert!(iv.values.iter().all(|v| v.abs() < 1e-12), "{:?}", iv.values);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for trial in 0..10 {
            let model = if trial % 2 == 0 {
                PolicyModel::Sdt(
                    SdtModel::random(2, 4, 3, &mut rng, ModelMeta::deterministic(8)).unwrap(),
                )
            } else {
                PolicyModel::Cdt(
                    CdtModel::random(2, 2, 4, 2, 3, &mut rng, ModelMeta::deterministic(8)).unwrap(),
                )
            };
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            let class = argmax(&model.predict_soft(&x).unwrap());
            let iv = importance(&model, &x, ImportanceMethod::Gradient).unwrap();
            let h = 1e-5;
            for i in 0..4 {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = (model.predict_soft(&xp).unwrap()[class]
                    - model.predict_soft(&xm).unwrap()[class])
                    / (2.0 * h);
                let ad = iv.values[i];
                assert!(
                    (ad - fd).abs() <= 1e-4 * ad.abs().max(fd.abs()).max(1.0),
                    "trial {trial} dim {i}: {ad} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn gradient_rejects_discretized_models() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let model = PolicyModel::Sdt(
            SdtModel::random(2, 3, 2, &mut rng, ModelMeta::deterministic(9)).unwrap(),
        );
        let hard = model.discretize(DiscretizeMode::Sdt).unwrap();
        assert!(matches!(
            importance(&hard, &[0.0, 0.0, 0.0], ImportanceMethod::Gradient),
            Err(Error::UnsupportedMode(_))
        ));
        // Path-sum and confidence still work through the one-hot encoding.
        assert!(importance(&hard, &[0.0, 0.0, 0.0], ImportanceMethod::PathSum).is_ok());
        assert!(importance(&hard, &[0.0, 0.0, 0.0], ImportanceMethod::Confidence).is_ok());
    }

    #[test]
    fn global_importance_is_the_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let model = PolicyModel::Sdt(
            SdtModel::random(2, 3, 2, &mut rng, ModelMeta::deterministic(10)).unwrap(),
        );
        let states: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let single = importance_global(&model, &states[..1], ImportanceMethod::PathSum).unwrap();
        let local0 = importance(&model, &states[0], ImportanceMethod::PathSum).unwrap();
        assert_eq!(single.values, local0.values);
        // Two-pass recomputation matches the streaming mean.
        let global = importance_global(&model, &states, ImportanceMethod::PathSum).unwrap();
        let mut manual = vec![0.0; 3];
        for s in &states {
            let l = importance(&model, s, ImportanceMethod::PathSum).unwrap();
            for (m, v) in manual.iter_mut().zip(&l.values) {
                *m += v / states.len() as f64;
            }
        }
        for (a, b) in global.values.iter().zip(&manual) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(importance_global(&model, &[], ImportanceMethod::PathSum).is_err());
    }

    #[test]
    fn symmetric_states_cancel() {
        // Root routes +x left and -x right; the two paths' weight sums are
        // exact negatives, so the global mean over the state pair is zero.
        let model = PolicyModel::Sdt(sdt_with_weights(
            vec![vec![1.0, 0.0], vec![-1.0, 1.0], vec![-1.0, -1.0]],
            vec![0.0, 0.0, 0.0],
            2,
        ));
        let plus = importance(&model, &[10.0, 0.0], ImportanceMethod::PathSum).unwrap();
        let minus = importance(&model, &[-10.0, 0.0], ImportanceMethod::PathSum).unwrap();
        assert_eq!(plus.values, vec![0.0, 1.0]);
        assert_eq!(minus.values, vec![0.0, -1.0]);
        let states = vec![vec![10.0, 0.0], vec![-10.0, 0.0]];
        let global = importance_global(&model, &states, ImportanceMethod::PathSum).unwrap();
        assert!(global.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn stability_identity_and_symmetry() {
        let a = WeightSet {
            vectors: vec![vec![0.5, -0.5], vec![0.25, 0.75]],
        };
        let b = WeightSet {
            vectors: vec![vec![1.0, 0.0]],
        };
        assert_eq!(
            stability_distance(std::slice::from_ref(&a), std::slice::from_ref(&a)).unwrap(),
            0.0
        );
        let ab = stability_distance(std::slice::from_ref(&a), std::slice::from_ref(&b)).unwrap();
        let ba = stability_distance(std::slice::from_ref(&b), std::slice::from_ref(&a)).unwrap();
        assert_eq!(ab, ba);
        assert!(ab > 0.0);
    }

    #[test]
    fn stability_singleton_unit_vectors() {
        let a = WeightSet {
            vectors: vec![vec![1.0, 0.0]],
        };
        let b = WeightSet {
            vectors: vec![vec![0.0, 1.0]],
        };
        let d = stability_distance(std::slice::from_ref(&a), std::slice::from_ref(&b)).unwrap();
        assert_eq!(d, 2.0);
    }

    #[test]
    fn stability_rejects_empty_and_mismatched() {
        let a = WeightSet {
            vectors: vec![vec![1.0, 0.0]],
        };
        let empty = WeightSet { vectors: vec![] };
        assert!(stability_distance(std::slice::from_ref(&a), std::slice::from_ref(&empty)).is_err());
        let c = WeightSet {
            vectors: vec![vec![1.0, 0.0, 0.0]],
        };
        assert!(stability_distance(std::slice::from_ref(&a), std::slice::from_ref(&c)).is_err());
    }

    #[test]
    fn weight_set_vectors_are_unit_l1() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let model = PolicyModel::Cdt(
            CdtModel::random(1, 2, 4, 2, 2, &mut rng, ModelMeta::deterministic(11)).unwrap(),
        );
        let set = weight_set(&model).unwrap();
        // F nodes (1) + F leaves (2) x D nodes (3) = 7 vectors of dim R+1.
        assert_eq!(set.vectors.len(), 7);
        for v in &set.vectors {
            assert_eq!(v.len(), 5);
            let norm: f64 = v.iter().map(|x| x.abs()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stability_report_orders_trained_vs_random() {
        // Two identical imitators and well-separated randoms: the imitator
        // pair distance is 0, which must undercut the random distances.
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let model = PolicyModel::Sdt(
            SdtModel::random(2, 4, 2, &mut rng, ModelMeta::deterministic(12)).unwrap(),
        );
        let result = stability_report(&[model.clone(), model], 5, 3).unwrap();
        assert_eq!(result.imitator_mean, 0.0);
        assert!(result.random_mean > 0.0);
        assert_eq!(result.imitators, 2);
        assert_eq!(result.randoms, 5);
    }
}
