//! A single policy-model interface over the two tree families and the MLP
//! baseline: plain evaluation for rollouts, tape evaluation for training,
//! and flat parameter views for the optimizer.

use crate::autodiff::{Tape, Var};
use crate::env::StateNormalizer;
use crate::error::{Error, Result};
use crate::tree::models::{CdtModel, DiscretizeMode, Family, ModelMeta, SdtModel};
use crate::tree::INIT_RANGE;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// How a model turns a state into a class distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferenceMode {
    /// Probability-weighted mixture over all leaves.
    Soft,
    /// Distribution of the single most probable leaf.
    Greedy,
}

impl std::str::FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "soft" => Ok(InferenceMode::Soft),
            "greedy" => Ok(InferenceMode::Greedy),
            other => Err(Error::Spec(format!("unknown inference mode `{other}`"))),
        }
    }
}

/// Two-layer tanh perceptron policy with a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    /// hidden x input.
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    /// output x hidden.
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
    pub normalizer: StateNormalizer,
    pub meta: ModelMeta,
}

impl MlpPolicy {
    pub fn random(
        input_dim: usize,
        hidden: usize,
        output_dim: usize,
        rng: &mut impl Rng,
        meta: ModelMeta,
    ) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || output_dim < 2 {
            return Err(Error::Spec("mlp dims must satisfy R >= 1, H >= 1, O >= 2".into()));
        }
        let mut draw = || rng.random_range(-INIT_RANGE..INIT_RANGE);
        Ok(MlpPolicy {
            w1: (0..hidden)
                .map(|_| (0..input_dim).map(|_| draw()).collect())
                .collect(),
            b1: (0..hidden).map(|_| draw()).collect(),
            w2: (0..output_dim)
                .map(|_| (0..hidden).map(|_| draw()).collect())
                .collect(),
            b2: (0..output_dim).map(|_| draw()).collect(),
            normalizer: StateNormalizer::identity(input_dim),
            meta,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1[0].len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.len()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.len()
    }

    fn logits(&self, z: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = self
            .w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| {
                (row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + b).tanh()
            })
            .collect();
        self.w2
            .iter()
            .zip(&self.b2)
            .map(|(row, b)| row.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    pub fn predict_soft(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "mlp input".into(),
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let z = self.normalizer.normalize(x);
        Ok(crate::tree::softmax(&self.logits(&z)))
    }

    pub fn num_params(&self) -> usize {
        let (r, h, o) = (self.input_dim(), self.hidden_dim(), self.output_dim());
        h * r + h + o * h + o
    }

    pub fn get_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for row in &self.w1 {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.b1);
        for row in &self.w2 {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.b2);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut i = 0;
        for row in &mut self.w1 {
            let n = row.len();
            row.copy_from_slice(&params[i..i + n]);
            i += n;
        }
        let h = self.b1.len();
        self.b1.copy_from_slice(&params[i..i + h]);
        i += h;
        for row in &mut self.w2 {
            let n = row.len();
            row.copy_from_slice(&params[i..i + n]);
            i += n;
        }
        let o = self.b2.len();
        self.b2.copy_from_slice(&params[i..i + o]);
        i += o;
        debug_assert_eq!(i, params.len());
    }

    pub fn tape_class_prob(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: &[f64],
        class: usize,
    ) -> Result<Var> {
        let z = self.normalizer.normalize(x);
        let (r, h, o) = (self.input_dim(), self.hidden_dim(), self.output_dim());
        let mut idx = 0;
        let mut hidden = Vec::with_capacity(h);
        for unit in 0..h {
            let w = &params[idx + unit * r..idx + (unit + 1) * r];
            let pre = tape.weighted_sum_const(w, &z);
            let b = params[h * r + unit];
            let pre = tape.add(pre, b);
            hidden.push(tape.tanh(pre));
        }
        idx = h * r + h;
        let mut logits = Vec::with_capacity(o);
        for unit in 0..o {
            let w = &params[idx + unit * h..idx + (unit + 1) * h];
            let b = params[idx + o * h + unit];
            let pre = tape.dot(w, &hidden, b);
            logits.push(pre);
        }
        let sm = tape.softmax(&logits)?;
        Ok(sm[class])
    }
}

/// Architecture requested on the command line or in a spec file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicySpec {
    Sdt {
        depth: u32,
    },
    Cdt {
        d1: u32,
        d2: u32,
        k: usize,
    },
    Mlp {
        hidden: usize,
    },
}

impl PolicySpec {
    pub fn family(&self) -> Family {
        match self {
            PolicySpec::Sdt { .. } => Family::Sdt,
            PolicySpec::Cdt { .. } => Family::Cdt,
            PolicySpec::Mlp { .. } => Family::Mlp,
        }
    }

    pub fn build(
        &self,
        input_dim: usize,
        output_dim: usize,
        rng: &mut impl Rng,
        meta: ModelMeta,
    ) -> Result<PolicyModel> {
        Ok(match *self {
            PolicySpec::Sdt { depth } => {
                PolicyModel::Sdt(SdtModel::random(depth, input_dim, output_dim, rng, meta)?)
            }
            PolicySpec::Cdt { d1, d2, k } => PolicyModel::Cdt(CdtModel::random(
                d1, d2, input_dim, k, output_dim, rng, meta,
            )?),
            PolicySpec::Mlp { hidden } => {
                PolicyModel::Mlp(MlpPolicy::random(input_dim, hidden, output_dim, rng, meta)?)
            }
        })
    }
}

/// Any of the supported policy models.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyModel {
    Sdt(SdtModel),
    Cdt(CdtModel),
    Mlp(MlpPolicy),
}

impl PolicyModel {
    pub fn family(&self) -> Family {
        match self {
            PolicyModel::Sdt(_) => Family::Sdt,
            PolicyModel::Cdt(_) => Family::Cdt,
            PolicyModel::Mlp(_) => Family::Mlp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PolicyModel::Sdt(m) => m.input_dim(),
            PolicyModel::Cdt(m) => m.input_dim(),
            PolicyModel::Mlp(m) => m.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            PolicyModel::Sdt(m) => m.output_dim(),
            PolicyModel::Cdt(m) => m.output_dim(),
            PolicyModel::Mlp(m) => m.output_dim(),
        }
    }

    pub fn normalizer(&self) -> &StateNormalizer {
        match self {
            PolicyModel::Sdt(m) => &m.normalizer,
            PolicyModel::Cdt(m) => &m.normalizer,
            PolicyModel::Mlp(m) => &m.normalizer,
        }
    }

    pub fn set_normalizer(&mut self, norm: StateNormalizer) {
        match self {
            PolicyModel::Sdt(m) => m.normalizer = norm,
            PolicyModel::Cdt(m) => m.normalizer = norm,
            PolicyModel::Mlp(m) => m.normalizer = norm,
        }
    }

    pub fn meta(&self) -> ModelMeta {
        match self {
            PolicyModel::Sdt(m) => m.meta,
            PolicyModel::Cdt(m) => m.meta,
            PolicyModel::Mlp(m) => m.meta,
        }
    }

    pub fn set_meta(&mut self, meta: ModelMeta) {
        match self {
            PolicyModel::Sdt(m) => m.meta = meta,
            PolicyModel::Cdt(m) => m.meta = meta,
            PolicyModel::Mlp(m) => m.meta = meta,
        }
    }

    /// Class distribution under the requested inference mode.
    pub fn distribution(&self, x: &[f64], mode: InferenceMode) -> Result<Vec<f64>> {
        match (self, mode) {
            (PolicyModel::Sdt(m), InferenceMode::Soft) => m.predict_soft(x),
            (PolicyModel::Sdt(m), InferenceMode::Greedy) => Ok(m.greedy_infer(x)?.0),
            (PolicyModel::Cdt(m), InferenceMode::Soft) => m.predict_soft(x),
            (PolicyModel::Cdt(m), InferenceMode::Greedy) => Ok(m.greedy_infer(x)?.distribution),
            (PolicyModel::Mlp(m), _) => m.predict_soft(x),
        }
    }

    pub fn predict_soft(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.distribution(x, InferenceMode::Soft)
    }

    /// Greedy action under the given inference mode.
    pub fn act(&self, x: &[f64], mode: InferenceMode) -> Result<usize> {
        Ok(argmax(&self.distribution(x, mode)?))
    }

    pub fn param_count(&self) -> u64 {
        match self {
            PolicyModel::Sdt(m) => m.param_count(),
            PolicyModel::Cdt(m) => m.param_count(),
            PolicyModel::Mlp(m) => m.num_params() as u64,
        }
    }

    pub fn num_trainable_params(&self) -> Result<usize> {
        match self {
            PolicyModel::Sdt(m) => m.num_trainable_params(),
            PolicyModel::Cdt(m) => m.num_trainable_params(),
            PolicyModel::Mlp(m) => Ok(m.num_params()),
        }
    }

    pub fn get_params(&self) -> Vec<f64> {
        match self {
            PolicyModel::Sdt(m) => m.get_params(),
            PolicyModel::Cdt(m) => m.get_params(),
            PolicyModel::Mlp(m) => m.get_params(),
        }
    }

    pub fn set_params(&mut self, params: &[f64]) {
        match self {
            PolicyModel::Sdt(m) => m.set_params(params),
            PolicyModel::Cdt(m) => m.set_params(params),
            PolicyModel::Mlp(m) => m.set_params(params),
        }
    }

    pub fn is_discretized(&self) -> bool {
        match self {
            PolicyModel::Sdt(m) => m.tree.has_hard_nodes(),
            PolicyModel::Cdt(m) => {
                m.feature_tree.has_hard_nodes() || m.decision_tree.has_hard_nodes()
            }
            PolicyModel::Mlp(_) => false,
        }
    }

    /// Discretizes the model; the mode must match the family.
    pub fn discretize(&self, mode: DiscretizeMode) -> Result<PolicyModel> {
        match (self, mode) {
            (PolicyModel::Sdt(m), DiscretizeMode::Sdt) => Ok(PolicyModel::Sdt(m.discretize()?)),
            (PolicyModel::Sdt(_), other) => Err(Error::Spec(format!(
                "mode `{other}` does not apply to an SDT; use `sdt`"
            ))),
            (PolicyModel::Cdt(m), DiscretizeMode::Sdt) => Err(Error::Spec(format!(
                "mode `sdt` does not apply to a CDT of {} params; use f-only, d-only or f-and-d",
                m.param_count()
            ))),
            (PolicyModel::Cdt(m), mode) => Ok(PolicyModel::Cdt(m.discretize(mode)?)),
            (PolicyModel::Mlp(_), _) => {
                Err(Error::UnsupportedMode("an MLP cannot be discretized".into()))
            }
        }
    }

    /// Mixture probability of `class` as a tape var; `params` must be this
    /// model's flat parameters registered as tape leaves.
    pub fn tape_class_prob(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: &[f64],
        class: usize,
    ) -> Result<Var> {
        match self {
            PolicyModel::Sdt(m) => m.tape_class_prob(tape, params, x, class),
            PolicyModel::Cdt(m) => m.tape_class_prob(tape, params, x, class),
            PolicyModel::Mlp(m) => m.tape_class_prob(tape, params, x, class),
        }
    }

    /// Builds the parameter-only part of the forward pass (the tree-leaf
    /// class distributions) once so that a batch can share it.
    pub fn tape_prepare(&self, tape: &mut Tape, params: &[Var]) -> Result<Prepared> {
        Ok(match self {
            PolicyModel::Sdt(m) => Prepared::LeafDists(m.tape_leaf_distributions(tape, params)?),
            PolicyModel::Cdt(m) => Prepared::LeafDists(m.tape_leaf_distributions(tape, params)?),
            PolicyModel::Mlp(_) => Prepared::None,
        })
    }

    /// As [`Self::tape_class_prob`] but reusing a [`Prepared`] block.
    pub fn tape_class_prob_prepared(
        &self,
        tape: &mut Tape,
        params: &[Var],
        prepared: &Prepared,
        x: &[f64],
        class: usize,
    ) -> Result<Var> {
        match (self, prepared) {
            (PolicyModel::Sdt(m), Prepared::LeafDists(d)) => {
                m.tape_class_prob_prepared(tape, params, d, x, class)
            }
            (PolicyModel::Cdt(m), Prepared::LeafDists(d)) => {
                m.tape_class_prob_prepared(tape, params, d, x, class)
            }
            (PolicyModel::Mlp(m), _) => m.tape_class_prob(tape, params, x, class),
            _ => Err(Error::Spec("prepared block does not match the model".into())),
        }
    }
}

/// Batch-shared tape state produced by [`PolicyModel::tape_prepare`].
pub enum Prepared {
    LeafDists(Vec<Vec<Var>>),
    None,
}
