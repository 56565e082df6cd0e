//! Mountain-car with the standard dynamics: actions {0: push left,
//! 1: no-op, 2: push right}, force 0.001, gravity term 0.0025 cos(3p),
//! position clamped to [-1.2, 0.6], velocity to [-0.07, 0.07]. Reward is
//! -1 per step; the episode terminates at position >= 0.5 and truncates
//! at 200 steps.

use super::{Environment, Step};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
pub const FORCE: f64 = 0.001;
pub const GRAVITY: f64 = 0.0025;
pub const MAX_STEPS: u32 = 200;

#[derive(Debug, Clone)]
pub struct MountainCar {
    /// (position, velocity).
    state: [f64; 2],
    steps: u32,
    done: bool,
}

impl MountainCar {
    pub fn new() -> Self {
        MountainCar {
            state: [0.0; 2],
            steps: 0,
            done: true,
        }
    }

    pub fn set_state(&mut self, state: [f64; 2]) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for MountainCar {
    fn name(&self) -> &'static str {
        "mountaincar"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_count(&self) -> usize {
        3
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        self.state = [rng.random_range(-0.6..-0.4), 0.0];
        self.steps = 0;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        if action > 2 {
            return Err(Error::Spec(format!(
                "mountaincar action must be 0, 1 or 2, got {action}"
            )));
        }
        let [position, velocity] = self.state;
        let mut v = velocity + (action as f64 - 1.0) * FORCE - GRAVITY * (3.0 * position).cos();
        v = v.clamp(-MAX_SPEED, MAX_SPEED);
        let p = (position + v).clamp(MIN_POSITION, MAX_POSITION);
        if p == MIN_POSITION && v < 0.0 {
            v = 0.0;
        }
        self.state = [p, v];
        self.steps += 1;
        let terminated = p >= GOAL_POSITION;
        let truncated = !terminated && self.steps >= MAX_STEPS;
        self.done = terminated || truncated;
        Ok(Step {
            state: self.state.to_vec(),
            reward: -1.0,
            done: self.done,
            truncated,
        })
    }

    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_formula_from_rest() {
        // No-op at p = -0.5, v = 0: the only change in velocity is the
        // gravity term -0.0025 cos(-1.5).
        let mut env = MountainCar::new();
        env.set_state([-0.5, 0.0]);
        let step = env.step(1).unwrap();
        let want_v = -GRAVITY * (-1.5f64).cos();
        assert_eq!(step.state[1], want_v);
        assert_eq!(step.state[0], -0.5 + want_v);
        assert_eq!(step.reward, -1.0);
    }

    #[test]
    fn velocity_is_clamped() {
        let mut env = MountainCar::new();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for ep in 0..20 {
            env.reset(ep);
            loop {
                let action = rng.random_range(0..3);
                let step = env.step(action).unwrap();
                assert!(step.state[1].abs() <= MAX_SPEED);
                assert!((MIN_POSITION..=MAX_POSITION).contains(&step.state[0]));
                if step.done {
                    break;
                }
            }
        }
    }

    #[test]
    fn reset_velocity_is_zero_and_position_in_range() {
        let mut env = MountainCar::new();
        for seed in 0..1000 {
            let s = env.reset(seed);
            assert_eq!(s[1], 0.0);
            assert!((-0.6..-0.4).contains(&s[0]));
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mut a = MountainCar::new();
        let mut b = MountainCar::new();
        a.reset(5);
        b.reset(5);
        for i in 0..200 {
            let action = i % 3;
            let sa = a.step(action).unwrap();
            let sb = b.step(action).unwrap();
            assert_eq!(sa.state, sb.state);
            assert_eq!(sa.done, sb.done);
            if sa.done {
                break;
            }
        }
    }

    #[test]
    fn coasting_energy_is_dissipated() {
        // With zero force the Euler update can inject a tiny amount of
        // energy per step (bounded by the discretization), but over a whole
        // coasting episode the proxy v^2/2 + (0.0025/3) sin(3p) never ends
        // above where it started.
        let potential = |p: f64| (GRAVITY / 3.0) * (3.0 * p).sin();
        let mut env = MountainCar::new();
        for seed in 0..50 {
            let s0 = env.reset(seed);
            let e0 = s0[1] * s0[1] / 2.0 + potential(s0[0]);
            let mut clamped = false;
            let mut last = s0;
            loop {
                let step = env.step(1).unwrap();
                if step.state[1].abs() >= MAX_SPEED || step.state[0] <= MIN_POSITION {
                    clamped = true;
                }
                // Per-step drift without clamping stays within the Euler
                // discretization bound.
                if !clamped {
                    let e_prev = last[1] * last[1] / 2.0 + potential(last[0]);
                    let e_now = step.state[1] * step.state[1] / 2.0 + potential(step.state[0]);
                    assert!(e_now - e_prev < 2e-5, "per-step energy jump too large");
                }
                last = step.state.clone().try_into().unwrap();
                if step.done {
                    break;
                }
            }
            let e_end = last[1] * last[1] / 2.0 + potential(last[0]);
            if !clamped {
                assert!(e_end <= e0 + 1e-4, "seed {seed}: {e0} -> {e_end}");
            }
        }
    }
}
