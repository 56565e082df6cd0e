//! Differentiable decision-tree policies for classic-control reinforcement
//! learning.
//!
//! The crate provides two tree families as drop-in policy models:
//!
//! * **SDT** — a soft decision tree: a perfect binary tree whose internal
//!   nodes route probabilistically through a sigmoid of a linear function of
//!   the input, with a class distribution at every leaf.
//! * **CDT** — a cascading decision tree: a feature-learning tree whose
//!   leaves emit linear feature maps, cascaded into a decision-making tree
//!   that routes on the learned features.
//!
//! Both are trained with a small scalar reverse-mode autodiff engine
//! ([`autodiff`]), either by imitating a teacher policy ([`imitation`]) or
//! directly with PPO ([`ppo`]) on the built-in CartPole and MountainCar
//! environments ([`env`]). Trained trees can be discretized into hard
//! univariate trees, exported to DOT, and analyzed with the feature
//! importance and stability tooling in [`explain`].
//!
//! See the crate `examples/` directory for one runnable example per
//! capability, or the `treerl` binary for the command-line front end.

pub mod autodiff;
pub mod env;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod imitation;
pub mod policy;
pub mod ppo;
pub mod rng;
pub mod tree;

pub use error::{Error, Result};
pub use policy::PolicyModel;
