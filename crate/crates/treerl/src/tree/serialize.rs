//! Model persistence: one JSON document per model. The exact field layout
//! is pinned by `schemas/model.schema.json` in the crate root.
//!
//! Tree node order is breadth-first; for a CDT the feature tree's nodes
//! and leaves come before the decision tree's. `layer` is 1-based and
//! `index` is the 0-based position within the layer.

use super::models::{CdtModel, Family, ModelMeta, SdtModel};
use super::{DistributionLeaf, FeatureLeaf, HardNode, RoutingNode, SoftNode, SoftTree};
use crate::env::StateNormalizer;
use crate::error::{Error, Result};
use crate::policy::{MlpPolicy, PolicyModel};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub family: Family,
    pub dims: DimsFile,
    pub depths: DepthsFile,
    pub nodes: Vec<NodeFile>,
    pub leaves: Vec<LeafFile>,
    pub normalization: StateNormalizer,
    pub metadata: ModelMeta,
    /// Present only for the MLP baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp: Option<MlpFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsFile {
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "O")]
    pub o: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeFile {
    Soft {
        layer: u32,
        index: u32,
        weights: Vec<f64>,
        bias: f64,
    },
    Hard {
        feature_index: usize,
        threshold: f64,
        direction: Direction,
    },
}

/// Which side of the threshold routes left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Go left iff x[k] > t.
    Greater,
    /// Go left iff x[k] < t.
    Less,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeafFile {
    Transform { transform: Vec<Vec<f64>> },
    Logits { logits: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpFile {
    pub hidden: usize,
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

fn node_position(i: usize) -> (u32, u32) {
    let layer = (usize::BITS - (i + 1).leading_zeros()) as u32;
    let index = (i + 1) as u32 - (1u32 << (layer - 1));
    (layer, index)
}

fn nodes_to_file(nodes: &[RoutingNode]) -> Vec<NodeFile> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, n)| match n {
            RoutingNode::Soft(s) => {
                let (layer, index) = node_position(i);
                NodeFile::Soft {
                    layer,
                    index,
                    weights: s.weights.clone(),
                    bias: s.bias,
                }
            }
            RoutingNode::Hard(h) => NodeFile::Hard {
                feature_index: h.feature_index,
                threshold: h.threshold,
                direction: if h.go_left_if_greater {
                    Direction::Greater
                } else {
                    Direction::Less
                },
            },
        })
        .collect()
}

fn nodes_from_file(nodes: &[NodeFile], input_dim: usize, what: &str) -> Result<Vec<RoutingNode>> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, n)| match n {
            NodeFile::Soft {
                layer,
                index,
                weights,
                bias,
            } => {
                let (want_layer, want_index) = node_position(i);
                if *layer != want_layer || *index != want_index {
                    return Err(Error::Spec(format!(
                        "{what} node {i}: expected layer {want_layer} index {want_index}, \
                         file says layer {layer} index {index}"
                    )));
                }
                if weights.len() != input_dim {
                    return Err(Error::DimensionMismatch {
                        what: format!("{what} node {i} weights"),
                        expected: input_dim,
                        got: weights.len(),
                    });
                }
                Ok(RoutingNode::Soft(SoftNode {
                    weights: weights.clone(),
                    bias: *bias,
                }))
            }
            NodeFile::Hard {
                feature_index,
                threshold,
                direction,
            } => {
                if *feature_index >= input_dim {
                    return Err(Error::Spec(format!(
                        "{what} node {i}: feature index {feature_index} out of range"
                    )));
                }
                Ok(RoutingNode::Hard(HardNode {
                    feature_index: *feature_index,
                    threshold: *threshold,
                    go_left_if_greater: matches!(direction, Direction::Greater),
                }))
            }
        })
        .collect()
}

impl ModelFile {
    pub fn from_model(model: &PolicyModel) -> Self {
        match model {
            PolicyModel::Sdt(m) => ModelFile {
                family: Family::Sdt,
                dims: DimsFile {
                    r: m.input_dim(),
                    k: None,
                    o: m.output_dim(),
                },
                depths: DepthsFile {
                    d: Some(m.tree.depth()),
                    ..Default::default()
                },
                nodes: nodes_to_file(m.tree.nodes()),
                leaves: m
                    .tree
                    .leaves()
                    .iter()
                    .map(|l| LeafFile::Logits {
                        logits: l.logits.clone(),
                    })
                    .collect(),
                normalization: m.normalizer.clone(),
                metadata: m.meta,
                mlp: None,
            },
            PolicyModel::Cdt(m) => {
                let mut nodes = nodes_to_file(m.feature_tree.nodes());
                nodes.extend(nodes_to_file(m.decision_tree.nodes()));
                let mut leaves: Vec<LeafFile> = m
                    .feature_tree
                    .leaves()
                    .iter()
                    .map(|l| LeafFile::Transform {
                        transform: l.transform.clone(),
                    })
                    .collect();
                leaves.extend(m.decision_tree.leaves().iter().map(|l| LeafFile::Logits {
                    logits: l.logits.clone(),
                }));
                ModelFile {
                    family: Family::Cdt,
                    dims: DimsFile {
                        r: m.input_dim(),
                        k: Some(m.feature_dim()),
                        o: m.output_dim(),
                    },
                    depths: DepthsFile {
                        d: None,
                        d1: Some(m.feature_tree.depth()),
                        d2: Some(m.decision_tree.depth()),
                    },
                    nodes,
                    leaves,
                    normalization: m.normalizer.clone(),
                    metadata: m.meta,
                    mlp: None,
                }
            }
            PolicyModel::Mlp(m) => ModelFile {
                family: Family::Mlp,
                dims: DimsFile {
                    r: m.input_dim(),
                    k: None,
                    o: m.output_dim(),
                },
                depths: DepthsFile::default(),
                nodes: Vec::new(),
                leaves: Vec::new(),
                normalization: m.normalizer.clone(),
                metadata: m.meta,
                mlp: Some(MlpFile {
                    hidden: m.hidden_dim(),
                    w1: m.w1.clone(),
                    b1: m.b1.clone(),
                    w2: m.w2.clone(),
                    b2: m.b2.clone(),
                }),
            },
        }
    }

    pub fn into_model(self) -> Result<PolicyModel> {
        let norm = self.normalization;
        if norm.mean.len() != self.dims.r || norm.std.len() != self.dims.r {
            return Err(Error::DimensionMismatch {
                what: "normalization vectors".into(),
                expected: self.dims.r,
                got: norm.mean.len(),
            });
        }
        match self.family {
            Family::Sdt => {
                let d = self
                    .depths
                    .d
                    .ok_or_else(|| Error::Spec("sdt model file must set depths.d".into()))?;
                let nodes = nodes_from_file(&self.nodes, self.dims.r, "tree")?;
                let leaves: Vec<DistributionLeaf> = self
                    .leaves
                    .iter()
                    .map(|l| match l {
                        LeafFile::Logits { logits } if logits.len() == self.dims.o => {
                            Ok(DistributionLeaf {
                                logits: logits.clone(),
                            })
                        }
                        LeafFile::Logits { logits } => Err(Error::DimensionMismatch {
                            what: "leaf logits".into(),
                            expected: self.dims.o,
                            got: logits.len(),
                        }),
                        _ => Err(Error::Spec("sdt leaves must carry logits".into())),
                    })
                    .collect::<Result<_>>()?;
                Ok(PolicyModel::Sdt(SdtModel {
                    tree: SoftTree::new(d, self.dims.r, nodes, leaves)?,
                    normalizer: norm,
                    meta: self.metadata,
                }))
            }
            Family::Cdt => {
                let (d1, d2) = match (self.depths.d1, self.depths.d2) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::Spec(
                            "cdt model file must set depths.d1 and depths.d2".into(),
                        ))
                    }
                };
                let k = self
                    .dims
                    .k
                    .ok_or_else(|| Error::Spec("cdt model file must set dims.K".into()))?;
                let f_node_count = (1usize << d1) - 1;
                let f_leaf_count = 1usize << d1;
                if self.nodes.len() != f_node_count + (1 << d2) - 1 {
                    return Err(Error::DimensionMismatch {
                        what: "cdt node list".into(),
                        expected: f_node_count + (1 << d2) - 1,
                        got: self.nodes.len(),
                    });
                }
                let f_nodes = nodes_from_file(&self.nodes[..f_node_count], self.dims.r, "feature tree")?;
                let d_nodes = nodes_from_file(&self.nodes[f_node_count..], k, "decision tree")?;
                let mut f_leaves = Vec::with_capacity(f_leaf_count);
                let mut d_leaves = Vec::new();
                for (i, leaf) in self.leaves.iter().enumerate() {
                    if i < f_leaf_count {
                        match leaf {
                            LeafFile::Transform { transform }
                                if transform.len() == k
                                    && transform.iter().all(|row| row.len() == self.dims.r) =>
                            {
                                f_leaves.push(FeatureLeaf {
                                    transform: transform.clone(),
                                });
                            }
                            _ => {
                                return Err(Error::Spec(format!(
                                    "cdt leaf {i} must be a K x R transform"
                                )))
                            }
                        }
                    } else {
                        match leaf {
                            LeafFile::Logits { logits } if logits.len() == self.dims.o => {
                                d_leaves.push(DistributionLeaf {
                                    logits: logits.clone(),
                                });
                            }
                            _ => {
                                return Err(Error::Spec(format!(
                                    "cdt leaf {i} must be an O-way logit vector"
                                )))
                            }
                        }
                    }
                }
                Ok(PolicyModel::Cdt(CdtModel {
                    feature_tree: SoftTree::new(d1, self.dims.r, f_nodes, f_leaves)?,
                    decision_tree: SoftTree::new(d2, k, d_nodes, d_leaves)?,
                    normalizer: norm,
                    meta: self.metadata,
                }))
            }
            Family::Mlp => {
                let mlp = self
                    .mlp
                    .ok_or_else(|| Error::Spec("mlp model file must carry the mlp block".into()))?;
                if mlp.w1.len() != mlp.hidden || mlp.w2.len() != self.dims.o {
                    return Err(Error::Spec("mlp weight shapes disagree with dims".into()));
                }
                Ok(PolicyModel::Mlp(MlpPolicy {
                    w1: mlp.w1,
                    b1: mlp.b1,
                    w2: mlp.w2,
                    b2: mlp.b2,
                    normalizer: norm,
                    meta: self.metadata,
                }))
            }
        }
    }
}

/// Writes a model as pretty-printed JSON.
pub fn save_model(model: &PolicyModel, path: &Path) -> Result<()> {
    let file = ModelFile::from_model(model);
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a model back from JSON, validating the layout.
pub fn load_model(path: &Path) -> Result<PolicyModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Spec(format!("cannot read model file {}: {e}", path.display())))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::Spec(format!("malformed model file: {e}")))?;
    file.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sample_cdt() -> PolicyModel {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        PolicyModel::Cdt(
            CdtModel::random(1, 2, 4, 2, 2, &mut rng, ModelMeta::deterministic(1)).unwrap(),
        )
    }

    #[test]
    fn node_positions() {
        assert_eq!(node_position(0), (1, 0));
        assert_eq!(node_position(1), (2, 0));
        assert_eq!(node_position(2), (2, 1));
        assert_eq!(node_position(3), (3, 0));
        assert_eq!(node_position(6), (3, 3));
    }

    #[test]
    fn cdt_roundtrip_preserves_model() {
        let model = sample_cdt();
        let dir = std::env::temp_dir().join(format!("treerl-ser-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cdt.json");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn discretized_roundtrip() {
        let model = sample_cdt();
        let hard = model
            .discretize(super::super::models::DiscretizeMode::FAndD)
            .unwrap();
        let file = ModelFile::from_model(&hard);
        let back = file.into_model().unwrap();
        assert_eq!(back, hard);
    }

    #[test]
    fn unknown_fields_rejected() {
        let model = sample_cdt();
        let mut value = serde_json::to_value(ModelFile::from_model(&model)).unwrap();
        value["surprise"] = serde_json::json!(1);
        let err = serde_json::from_value::<ModelFile>(value).unwrap_err();
        assert!(err.to_string().contains("surprise"));
    }

    #[test]
    fn corrupt_layer_index_rejected() {
        let model = sample_cdt();
        let mut file = ModelFile::from_model(&model);
        if let NodeFile::Soft { layer, .. } = &mut file.nodes[0] {
            *layer = 9;
        }
        assert!(file.into_model().is_err());
    }
}
