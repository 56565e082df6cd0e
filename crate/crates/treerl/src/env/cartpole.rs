//! Cart-pole balancing with the standard Euler-integrated dynamics:
//! force 10 N, timestep 0.02 s, cart mass 1.0, pole mass 0.1, pole
//! half-length 0.5, gravity 9.8. Reward is 1 per step; the episode ends
//! when the cart leaves +/-2.4 m or the pole tips past 12 degrees, and
//! truncates at 500 steps.

use super::{Environment, Step};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const GRAVITY: f64 = 9.8;
pub const MASS_CART: f64 = 1.0;
pub const MASS_POLE: f64 = 0.1;
pub const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
pub const HALF_LENGTH: f64 = 0.5;
pub const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
pub const FORCE_MAG: f64 = 10.0;
pub const TAU: f64 = 0.02;
pub const X_THRESHOLD: f64 = 2.4;
/// 12 degrees in radians.
pub const THETA_THRESHOLD: f64 = 0.20943951023931953;
pub const MAX_STEPS: u32 = 500;

#[derive(Debug, Clone)]
pub struct CartPole {
    /// (x, x_dot, theta, theta_dot).
    state: [f64; 4],
    steps: u32,
    done: bool,
}

impl CartPole {
    pub fn new() -> Self {
        CartPole {
            state: [0.0; 4],
            steps: 0,
            done: true,
        }
    }

    /// Directly sets the physical state (used by tests and teachers).
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CartPole {
    fn name(&self) -> &'static str {
        "cartpole"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn action_count(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for v in &mut self.state {
            *v = rng.random_range(-0.05..0.05);
        }
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        if action > 1 {
            return Err(Error::Spec(format!("cartpole action must be 0 or 1, got {action}")));
        }
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let cos_theta = theta.cos();
        let sin_theta = theta.sin();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin_theta) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin_theta - cos_theta * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_theta * cos_theta / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_theta / TOTAL_MASS;
        self.state = [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ];
        self.steps += 1;
        let terminated =
            self.state[0].abs() > X_THRESHOLD || self.state[2].abs() > THETA_THRESHOLD;
        let truncated = !terminated && self.steps >= MAX_STEPS;
        self.done = terminated || truncated;
        Ok(Step {
            state: self.state.to_vec(),
            reward: 1.0,
            done: self.done,
            truncated,
        })
    }

    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }
}
