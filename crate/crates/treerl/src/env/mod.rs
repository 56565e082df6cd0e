//! Deterministic, seedable classic-control environments and state
//! normalization.

pub mod cartpole;
pub mod mountain_car;
pub mod teachers;

pub use cartpole::CartPole;
pub use mountain_car::MountainCar;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Outcome of one environment step. `done` is true at any episode end;
/// `truncated` marks the time-limit case so that value bootstrapping can
/// distinguish it from a real termination.
#[derive(Debug, Clone)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
}

/// A seedable, single-agent environment with a discrete action space.
pub trait Environment: Send {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Starts a new episode; the same seed always yields the same episode
    /// under the same action sequence.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<Step>;
    fn state(&self) -> Vec<f64>;
}

/// Environments built into the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Cartpole,
    Mountaincar,
}

impl EnvKind {
    pub fn build(self) -> Box<dyn Environment> {
        match self {
            EnvKind::Cartpole => Box::new(CartPole::new()),
            EnvKind::Mountaincar => Box::new(MountainCar::new()),
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            EnvKind::Cartpole => 4,
            EnvKind::Mountaincar => 2,
        }
    }

    pub fn action_count(self) -> usize {
        match self {
            EnvKind::Cartpole => 2,
            EnvKind::Mountaincar => 3,
        }
    }

    /// The scripted teacher used for dataset generation and for the state
    /// normalization corpus.
    pub fn teacher(self) -> fn(&[f64]) -> usize {
        match self {
            EnvKind::Cartpole => teachers::heuristic_cartpole,
            EnvKind::Mountaincar => teachers::energy_pump_mountain_car,
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cartpole" => Ok(EnvKind::Cartpole),
            "mountaincar" => Ok(EnvKind::Mountaincar),
            other => Err(Error::Spec(format!("unknown environment `{other}`"))),
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvKind::Cartpole => write!(f, "cartpole"),
            EnvKind::Mountaincar => write!(f, "mountaincar"),
        }
    }
}

/// Per-dimension affine normalization: z = (x - mean) / std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Floor applied to empirical standard deviations so constant dimensions
/// stay finite.
pub const STD_FLOOR: f64 = 1e-8;

impl StateNormalizer {
    /// The identity transform (mean 0, std 1).
    pub fn identity(dim: usize) -> Self {
        StateNormalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.std.iter().all(|&s| s == 1.0)
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.mean.len());
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(xi, (m, s))| (xi - m) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.mean.len());
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(zi, (m, s))| zi * s + m)
            .collect()
    }
}

/// Empirical per-dimension mean and (population) standard deviation of a
/// state collection, with the std floored at [`STD_FLOOR`].
pub fn fit_normalizer<'a, I>(states: I) -> Result<StateNormalizer>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut count = 0usize;
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    for x in states {
        if count == 0 {
            mean = vec![0.0; x.len()];
            m2 = vec![0.0; x.len()];
        }
        count += 1;
        // Welford update per dimension.
        for i in 0..x.len() {
            let delta = x[i] - mean[i];
            mean[i] += delta / count as f64;
            m2[i] += delta * (x[i] - mean[i]);
        }
    }
    if count == 0 {
        return Err(Error::EmptyInput("normalizer state collection".into()));
    }
    let std = m2
        .iter()
        .map(|&s| (s / count as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(StateNormalizer { mean, std })
}

/// Rolls `episodes` teacher episodes and fits a normalizer on every state
/// visited (the fresh state after each reset plus each post-step state of
/// unfinished episodes).
pub fn fit_normalizer_from_teacher(kind: EnvKind, episodes: usize, seed: u64) -> StateNormalizer {
    let mut env = kind.build();
    let teacher = kind.teacher();
    let mut states: Vec<Vec<f64>> = Vec::new();
    for ep in 0..episodes {
        let mut state = env.reset(crate::rng::sub_seed(seed, "norm-episode", ep as u64));
        loop {
            states.push(state.clone());
            let action = teacher(&state);
            let step = env.step(action).expect("teacher stepped a finished episode");
            if step.done {
                break;
            }
            state = step.state;
        }
    }
    fit_normalizer(states.iter().map(|s| s.as_slice())).expect("at least one episode")
}
