//! Proximal policy optimization with generalized advantage estimation,
//! training SDT/CDT/MLP policies directly on the environments.
//!
//! The update cadence is one PPO update per episode over that episode's
//! transitions, with `update_iters` passes per update and a single Adam
//! optimizer over the concatenated policy and value parameters.

use crate::autodiff::{AdamState, Tape};
use crate::env::{fit_normalizer_from_teacher, EnvKind, StateNormalizer};
use crate::error::{Error, Result};
use crate::policy::{InferenceMode, PolicyModel, PolicySpec};
use crate::rng;
use crate::tree::models::ModelMeta;
use crate::tree::INIT_RANGE;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One step of experience collected under the behavior policy.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    /// Log-probability of `action` under the behavior policy.
    pub log_prob: f64,
    pub reward: f64,
    /// Episode ended after this step (termination or truncation).
    pub done: bool,
    /// The end was a time-limit cut rather than a terminal state.
    pub truncated: bool,
    /// Value estimate of `state` at collection time.
    pub value: f64,
}

/// PPO hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    /// Gradient passes per episode update.
    pub update_iters: usize,
    pub value_hidden: usize,
    pub episodes: usize,
    /// Rollout cap per episode (the environments' own limits bind first at
    /// these scales).
    pub horizon: usize,
    /// Normalize states with statistics from 3000 scripted-teacher
    /// episodes.
    pub normalize: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig::cartpole()
    }
}

impl PpoConfig {
    pub fn cartpole() -> Self {
        PpoConfig {
            learning_rate: 5e-4,
            gamma: 0.98,
            lambda: 0.95,
            clip_eps: 0.1,
            update_iters: 3,
            value_hidden: 128,
            episodes: 3000,
            horizon: 1000,
            normalize: true,
        }
    }

    pub fn mountain_car() -> Self {
        PpoConfig {
            learning_rate: 5e-3,
            gamma: 0.999,
            lambda: 0.98,
            clip_eps: 0.1,
            update_iters: 10,
            value_hidden: 32,
            episodes: 5000,
            horizon: 1000,
            normalize: true,
        }
    }

    pub fn for_env(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Cartpole => PpoConfig::cartpole(),
            EnvKind::Mountaincar => PpoConfig::mountain_car(),
        }
    }

    /// The MLP policy width used alongside this config.
    pub fn default_policy_hidden(&self) -> usize {
        self.value_hidden
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Spec("gamma and lambda must lie in (0, 1]".into()));
        }
        if self.clip_eps <= 0.0 {
            return Err(Error::Spec("clip epsilon must be positive".into()));
        }
        if self.learning_rate <= 0.0
            || self.update_iters == 0
            || self.value_hidden == 0
            || self.episodes == 0
            || self.horizon == 0
        {
            return Err(Error::Spec("ppo hyperparameters must be positive".into()));
        }
        Ok(())
    }
}

/// Two-layer tanh value network: input R -> hidden H -> scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    /// hidden x input.
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl ValueNet {
    pub fn random(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut draw = || rng.random_range(-INIT_RANGE..INIT_RANGE);
        ValueNet {
            w1: (0..hidden)
                .map(|_| (0..input_dim).map(|_| draw()).collect())
                .collect(),
            b1: (0..hidden).map(|_| draw()).collect(),
            w2: (0..hidden).map(|_| draw()).collect(),
            b2: draw(),
        }
    }

    pub fn forward(&self, z: &[f64]) -> f64 {
        let mut out = self.b2;
        for ((row, b), w2) in self.w1.iter().zip(&self.b1).zip(&self.w2) {
            let pre: f64 = row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + b;
            out += w2 * pre.tanh();
        }
        out
    }

    pub fn num_params(&self) -> usize {
        let (r, h) = (self.w1[0].len(), self.w1.len());
        h * r + h + h + 1
    }

    pub fn get_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for row in &self.w1 {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.push(self.b2);
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
        self.w2.copy_from_slice(&params[i..i + h]);
        i += h;
        self.b2 = params[i];
        debug_assert_eq!(i + 1, params.len());
    }

    /// Value estimate as a tape var; `params` is this net's flat parameter
    /// slice registered as leaves.
    pub fn tape_value(
        &self,
        tape: &mut Tape,
        params: &[crate::autodiff::Var],
        z: &[f64],
    ) -> crate::autodiff::Var {
        let (r, h) = (self.w1[0].len(), self.w1.len());
        let mut acc = params[h * r + h + h]; // b2
        for unit in 0..h {
            let w = &params[unit * r..(unit + 1) * r];
            let pre = tape.weighted_sum_const(w, z);
            let b = params[h * r + unit];
            let pre = tape.add(pre, b);
            let t = tape.tanh(pre);
            let w2 = params[h * r + h + unit];
            let term = tape.mul(w2, t);
            acc = tape.add(acc, term);
        }
        acc
    }
}

/// Generalized advantage estimation over one batch of transitions.
///
/// delta_t = r_t + gamma * V_{t+1} * (1 - terminal_t) - V_t, where V_{t+1}
/// comes from the next transition, or from `bootstrap` for the final one
/// (used when the batch ends in a truncation). The advantage recursion
/// A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1} stops at any
/// episode end. Returns the raw (unnormalized) advantages and the value
/// targets A + V.
pub fn gae(
    transitions: &[Transition],
    gamma: f64,
    lambda: f64,
    bootstrap: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(!transitions.is_empty(), "gae over an empty trajectory");
    let n = transitions.len();
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let tr = &transitions[t];
        let terminal = tr.done && !tr.truncated;
        let next_value = if tr.done {
            bootstrap
        } else {
            transitions[t + 1].value
        };
        let delta = tr.reward + gamma * next_value * f64::from(u8::from(!terminal)) - tr.value;
        acc = delta + gamma * lambda * f64::from(u8::from(!tr.done)) * acc;
        advantages[t] = acc;
    }
    let returns = advantages
        .iter()
        .zip(transitions)
        .map(|(a, tr)| a + tr.value)
        .collect();
    (advantages, returns)
}

/// In-place normalization to zero mean and unit (population) std. A batch
/// with near-zero spread is only centered.
pub fn normalize_advantages(advantages: &mut [f64]) {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let denom = if std > 1e-8 { std } else { 1.0 };
    for a in advantages {
        *a = (*a - mean) / denom;
    }
}

/// Loss values from the last gradient pass of an update.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Samples dropped because their importance ratio was non-finite.
    pub skipped: usize,
}

/// One gradient pass of the clipped-surrogate objective plus value loss.
/// Returns gradients over the concatenated (policy, value) parameters.
pub fn ppo_gradients(
    policy: &PolicyModel,
    value: &ValueNet,
    policy_params: &[f64],
    value_params: &[f64],
    batch: &[Transition],
    advantages: &[f64],
    returns: &[f64],
    clip_eps: f64,
    tape: &mut Tape,
) -> Result<(Vec<f64>, LossStats)> {
    debug_assert_eq!(batch.len(), advantages.len());
    debug_assert_eq!(batch.len(), returns.len());
    tape.clear();
    let all: Vec<f64> = policy_params
        .iter()
        .chain(value_params.iter())
        .copied()
        .collect();
    let vars = tape.leaves(&all);
    let (p_vars, v_vars) = vars.split_at(policy_params.len());
    let prepared = policy.tape_prepare(tape, p_vars)?;
    let normalizer = policy.normalizer().clone();

    let mut objective_terms = Vec::with_capacity(batch.len());
    let mut value_terms = Vec::with_capacity(batch.len());
    let mut skipped = 0usize;
    for (i, tr) in batch.iter().enumerate() {
        let prob = policy.tape_class_prob_prepared(tape, p_vars, &prepared, &tr.state, tr.action)?;
        let lp = tape.log(prob)?;
        let log_ratio = tape.sub_const(lp, tr.log_prob);
        let ratio = tape.exp(log_ratio);
        if !tape.value(ratio).is_finite() {
            log::warn!(
                "skipping sample {i}: non-finite importance ratio (log pi new {}, old {})",
                tape.value(lp),
                tr.log_prob
            );
            skipped += 1;
            continue;
        }
        let surr1 = tape.mul_const(ratio, advantages[i]);
        let lo = tape.max_const(ratio, 1.0 - clip_eps);
        let clipped = tape.min_const(lo, 1.0 + clip_eps);
        let surr2 = tape.mul_const(clipped, advantages[i]);
        objective_terms.push(tape.min(surr1, surr2));

        let z = normalizer.normalize(&tr.state);
        let v = value.tape_value(tape, v_vars, &z);
        let diff = tape.sub_const(v, returns[i]);
        value_terms.push(tape.mul(diff, diff));
    }
    if objective_terms.is_empty() {
        return Err(Error::Diverged("every sample in the batch was skipped".into()));
    }
    let obj_sum = tape.sum(&objective_terms);
    let policy_loss = tape.mul_const(obj_sum, -1.0 / objective_terms.len() as f64);
    let val_sum = tape.sum(&value_terms);
    let value_loss = tape.mul_const(val_sum, 1.0 / value_terms.len() as f64);
    let total = tape.add(policy_loss, value_loss);
    let stats = LossStats {
        policy_loss: tape.value(policy_loss),
        value_loss: tape.value(value_loss),
        skipped,
    };
    let grads = tape.backward(total).collect(&vars);
    Ok((grads, stats))
}

/// Runs `update_iters` clipped-surrogate passes over the batch with a joint
/// Adam step per pass. Advantages are normalized here, per update batch.
pub fn ppo_update(
    policy: &mut PolicyModel,
    value: &mut ValueNet,
    batch: &[Transition],
    raw_advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
    adam: &mut AdamState,
    tape: &mut Tape,
) -> Result<LossStats> {
    let mut advantages = raw_advantages.to_vec();
    normalize_advantages(&mut advantages);
    let mut policy_params = policy.get_params();
    let mut value_params = value.get_params();
    let mut stats = LossStats::default();
    for _ in 0..config.update_iters {
        let (grads, s) = ppo_gradients(
            policy,
            value,
            &policy_params,
            &value_params,
            batch,
            &advantages,
            returns,
            config.clip_eps,
            tape,
        )?;
        stats = s;
        let mut all: Vec<f64> = policy_params
            .iter()
            .chain(value_params.iter())
            .copied()
            .collect();
        adam.step(&mut all, &grads, config.learning_rate)?;
        let np = policy_params.len();
        policy_params.copy_from_slice(&all[..np]);
        value_params.copy_from_slice(&all[np..]);
        policy.set_params(&policy_params);
        value.set_params(&value_params);
    }
    Ok(stats)
}

/// One point of the learning curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpisodePoint {
    pub episode: usize,
    pub reward: f64,
    /// Trailing mean over the most recent (up to) 100 episodes.
    pub smoothed_reward: f64,
}

/// Output of one RL training run.
#[derive(Debug, Clone)]
pub struct RlRun {
    pub curve: Vec<EpisodePoint>,
    /// Checkpoint at the best smoothed reward.
    pub best_model: PolicyModel,
    pub best_smoothed: f64,
    pub final_model: PolicyModel,
}

/// Samples an action index from a distribution using one uniform draw.
fn sample_action(dist: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Trains a policy with PPO. Actions are sampled from the soft mixture
/// during training; the returned checkpoints act greedily at evaluation.
pub fn train_rl(kind: EnvKind, spec: &PolicySpec, config: &PpoConfig, seed: u64) -> Result<RlRun> {
    config.validate()?;
    let mut env = kind.build();
    let mut init_rng = rng::stream(seed, "init");
    let mut policy = spec.build(
        kind.state_dim(),
        kind.action_count(),
        &mut init_rng,
        ModelMeta::new(seed),
    )?;
    let mut value = ValueNet::random(kind.state_dim(), config.value_hidden, &mut init_rng);
    if config.normalize {
        policy.set_normalizer(fit_normalizer_from_teacher(kind, 3000, rng::sub_seed(seed, "norm", 0)));
    } else {
        policy.set_normalizer(StateNormalizer::identity(kind.state_dim()));
    }

    let mut adam = AdamState::new(policy.num_trainable_params()? + value.num_params());
    let mut tape = Tape::new();
    let mut sample_rng = rng::stream(seed, "sampling");
    let mut curve = Vec::with_capacity(config.episodes);
    let mut recent: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
    let mut best_smoothed = f64::NEG_INFINITY;
    let mut best_model = policy.clone();

    for episode in 0..config.episodes {
        let mut state = env.reset(rng::sub_seed(seed, "env", episode as u64));
        let mut transitions: Vec<Transition> = Vec::new();
        let mut episode_reward = 0.0;
        let bootstrap;
        loop {
            let dist = policy.predict_soft(&state)?;
            let action = sample_action(&dist, &mut sample_rng);
            let log_prob = dist[action].ln();
            let z = policy.normalizer().normalize(&state);
            let v = value.forward(&z);
            let step = env.step(action)?;
            episode_reward += step.reward;
            let horizon_cut = !step.done && transitions.len() + 1 >= config.horizon;
            transitions.push(Transition {
                state,
                action,
                log_prob,
                reward: step.reward,
                done: step.done || horizon_cut,
                truncated: step.truncated || horizon_cut,
                value: v,
            });
            if step.done || horizon_cut {
                bootstrap = if step.truncated || horizon_cut {
                    value.forward(&policy.normalizer().normalize(&step.state))
                } else {
                    0.0
                };
                break;
            }
            state = step.state;
        }
        if !episode_reward.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite episode reward (seed {seed}, episode {episode})"
            )));
        }

        let (advantages, returns) = gae(&transitions, config.gamma, config.lambda, bootstrap);
        ppo_update(
            &mut policy,
            &mut value,
            &transitions,
            &advantages,
            &returns,
            config,
            &mut adam,
            &mut tape,
        )
        .map_err(|e| match e {
            Error::NumericDomain(msg) => {
                Error::Diverged(format!("seed {seed}, episode {episode}: {msg}"))
            }
            other => other,
        })?;

        recent.push_back(episode_reward);
        if recent.len() > 100 {
            recent.pop_front();
        }
        let smoothed = recent.iter().sum::<f64>() / recent.len() as f64;
        curve.push(EpisodePoint {
            episode,
            reward: episode_reward,
            smoothed_reward: smoothed,
        });
        if smoothed > best_smoothed {
            best_smoothed = smoothed;
            best_model = policy.clone();
        }
        if (episode + 1) % 500 == 0 {
            log::debug!(
                "{kind} seed {seed}: episode {} reward {episode_reward:.1} smoothed {smoothed:.1}",
                episode + 1
            );
        }
    }

    Ok(RlRun {
        curve,
        best_model,
        best_smoothed,
        final_model: policy,
    })
}

/// Greedy evaluation of a trained policy.
pub fn evaluate_policy(
    policy: &PolicyModel,
    kind: EnvKind,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    crate::imitation::episode_rewards(policy, kind, episodes, InferenceMode::Greedy, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn transition(reward: f64, done: bool, truncated: bool, value: f64) -> Transition {
        Transition {
            state: vec![0.0],
            action: 0,
            log_prob: -0.5,
            reward,
            done,
            truncated,
            value,
        }
    }

    #[test]
    fn gae_single_terminal_step() {
        let batch = vec![transition(1.0, true, false, 0.0)];
        let (adv, ret) = gae(&batch, 1.0, 1.0, 0.0);
        assert_eq!(adv, vec![1.0]);
        assert_eq!(ret, vec![1.0]);
    }

    #[test]
    fn gae_zero_rewards_zero_values() {
        let mut batch: Vec<Transition> = (0..5).map(|_| transition(0.0, false, false, 0.0)).collect();
        batch[4].done = true;
        let (adv, ret) = gae(&batch, 0.9, 0.8, 0.0);
        assert!(adv.iter().all(|&a| a == 0.0));
        assert!(ret.iter().all(|&r| r == 0.0));
    }

    /// Brute-force oracle: A_t = sum_k (gamma lambda)^k delta_{t+k} within
    /// the episode.
    fn gae_oracle(batch: &[Transition], gamma: f64, lambda: f64, bootstrap: f64) -> Vec<f64> {
        let n = batch.len();
        let delta: Vec<f64> = (0..n)
            .map(|t| {
                let tr = &batch[t];
                let terminal = tr.done && !tr.truncated;
                let next_v = if tr.done { bootstrap } else { batch[t + 1].value };
                tr.reward + gamma * next_v * f64::from(u8::from(!terminal)) - tr.value
            })
            .collect();
        (0..n)
            .map(|t| {
                let mut total = 0.0;
                let mut factor = 1.0;
                for k in t..n {
                    total += factor * delta[k];
                    if batch[k].done {
                        break;
                    }
                    factor *= gamma * lambda;
                }
                total
            })
            .collect()
    }

    #[test]
    fn gae_matches_brute_force_sum() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for trial in 0..50 {
            let n = rng.random_range(1..20);
            let mut batch: Vec<Transition> = (0..n)
                .map(|_| {
                    let mut tr = transition(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(0..5) == 0,
                        false,
                        rng.random_range(-1.0..1.0),
                    );
                    if tr.done && rng.random_range(0..2) == 0 {
                        tr.truncated = true;
                    }
                    tr
                })
                .collect();
            batch[n - 1].done = true;
            let gamma = rng.random_range(0.5..1.0);
            let lambda = rng.random_range(0.5..1.0);
            let bootstrap = rng.random_range(-1.0..1.0);
            let (adv, ret) = gae(&batch, gamma, lambda, bootstrap);
            let want = gae_oracle(&batch, gamma, lambda, bootstrap);
            for (a, w) in adv.iter().zip(&want) {
                assert!((a - w).abs() < 1e-12, "trial {trial}: {a} vs {w}");
            }
            for ((r, a), tr) in ret.iter().zip(&adv).zip(&batch) {
                assert!((r - (a + tr.value)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn advantage_normalization_properties() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut adv: Vec<f64> = (0..500).map(|_| rng.random_range(-3.0..7.0)).collect();
        normalize_advantages(&mut adv);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-9);
    }

    fn bandit_policy(seed: u64) -> (PolicyModel, ValueNet) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let policy = PolicySpec::Sdt { depth: 1 }
            .build(1, 2, &mut rng, ModelMeta::deterministic(seed))
            .unwrap();
        let value = ValueNet::random(1, 4, &mut rng);
        (policy, value)
    }

    /// Collects one-step bandit episodes: action 1 pays +1, action 0 pays 0.
    fn bandit_batch(
        policy: &PolicyModel,
        value: &ValueNet,
        n: usize,
        rng: &mut impl Rng,
    ) -> (Vec<Transition>, Vec<f64>, Vec<f64>) {
        let state = vec![0.0];
        let dist = policy.predict_soft(&state).unwrap();
        let v = value.forward(&state);
        let batch: Vec<Transition> = (0..n)
            .map(|_| {
                let action = sample_action(&dist, rng);
                Transition {
                    state: state.clone(),
                    action,
                    log_prob: dist[action].ln(),
                    reward: action as f64,
                    done: true,
                    truncated: false,
                    value: v,
                }
            })
            .collect();
        let (adv, ret) = gae(&batch, 1.0, 1.0, 0.0);
        (batch, adv, ret)
    }

    #[test]
    fn bandit_probability_of_paying_action_rises_monotonically() {
        let (mut policy, mut value) = bandit_policy(7);
        let config = PpoConfig {
            learning_rate: 5e-3,
            update_iters: 3,
            episodes: 1,
            ..PpoConfig::cartpole()
        };
        let mut adam = AdamState::new(policy.num_trainable_params().unwrap() + value.num_params());
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut prev = policy.predict_soft(&[0.0]).unwrap()[1];
        for update in 0..50 {
            let (batch, adv, ret) = bandit_batch(&policy, &value, 64, &mut rng);
            // Guard: both actions must appear for the signal to be two-sided.
            if batch.iter().all(|t| t.action == 0) || batch.iter().all(|t| t.action == 1) {
                continue;
            }
            ppo_update(
                &mut policy,
                &mut value,
                &batch,
                &adv,
                &ret,
                &config,
                &mut adam,
                &mut tape,
            )
            .unwrap();
            let p1 = policy.predict_soft(&[0.0]).unwrap()[1];
            assert!(
                p1 > prev - 1e-9,
                "update {update}: p(a=1) fell from {prev} to {p1}"
            );
            prev = p1;
        }
        assert!(prev > 0.75, "p(a=1) should have risen well past 0.5, got {prev}");
    }

    #[test]
    fn ratio_one_reduces_to_vanilla_policy_gradient() {
        let (policy, value) = bandit_policy(11);
        let policy_params = policy.get_params();
        let value_params = value.get_params();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        // Behavior log-probs computed from the same parameters, so the
        // importance ratio is exactly 1 on the first pass.
        let state = vec![0.3];
        let dist = policy.predict_soft(&state).unwrap();
        let batch: Vec<Transition> = (0..32)
            .map(|_| {
                let action = sample_action(&dist, &mut rng);
                Transition {
                    state: state.clone(),
                    action,
                    log_prob: dist[action].ln(),
                    reward: 0.0,
                    done: true,
                    truncated: false,
                    value: 0.0,
                }
            })
            .collect();
        let advantages: Vec<f64> = (0..32).map(|i| ((i % 5) as f64) - 2.0).collect();
        let returns = vec![0.0; 32];
        let mut tape = Tape::new();
        // Effectively unclipped objective.
        let (grads, _) = ppo_gradients(
            &policy,
            &value,
            &policy_params,
            &value_params,
            &batch,
            &advantages,
            &returns,
            1e9,
            &mut tape,
        )
        .unwrap();

        // Vanilla policy gradient of -mean(log pi(a|s) * A).
        let mut pg_tape = Tape::new();
        let vars = pg_tape.leaves(&policy_params);
        let mut terms = Vec::new();
        for (tr, &a) in batch.iter().zip(&advantages) {
            let p = policy
                .tape_class_prob(&mut pg_tape, &vars, &tr.state, tr.action)
                .unwrap();
            let lp = pg_tape.log(p).unwrap();
            terms.push(pg_tape.mul_const(lp, a));
        }
        let total = pg_tape.sum(&terms);
        let loss = pg_tape.mul_const(total, -1.0 / batch.len() as f64);
        let pg_grads = pg_tape.backward(loss).collect(&vars);

        for (i, (g, pg)) in grads[..policy_params.len()].iter().zip(&pg_grads).enumerate() {
            assert!(
                (g - pg).abs() < 1e-10,
                "param {i}: ppo grad {g} vs vanilla {pg}"
            );
        }
    }

    #[test]
    fn zero_advantages_leave_policy_params_to_value_loss_only() {
        let (mut policy, mut value) = bandit_policy(13);
        let before = policy.get_params();
        let config = PpoConfig {
            update_iters: 1,
            ..PpoConfig::cartpole()
        };
        let mut adam = AdamState::new(policy.num_trainable_params().unwrap() + value.num_params());
        let mut tape = Tape::new();
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let (batch, _, _) = bandit_batch(&policy, &value, 16, &mut rng);
        let adv = vec![0.0; 16];
        let ret: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let stats = ppo_update(
            &mut policy,
            &mut value,
            &batch,
            &adv,
            &ret,
            &config,
            &mut adam,
            &mut tape,
        )
        .unwrap();
        assert_eq!(stats.policy_loss, 0.0);
        // The value net moved, the policy did not (its gradient is zero and
        // Adam leaves zero-gradient coordinates untouched).
        assert_eq!(policy.get_params(), before);
        assert!(stats.value_loss > 0.0);
    }

    #[test]
    fn value_net_tape_matches_plain_forward() {
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let net = ValueNet::random(3, 8, &mut rng);
        let z = [0.4, -1.1, 0.2];
        let mut tape = Tape::new();
        let params = tape.leaves(&net.get_params());
        let v = net.tape_value(&mut tape, &params, &z);
        assert!((tape.value(v) - net.forward(&z)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut bad = PpoConfig::cartpole();
        bad.gamma = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = PpoConfig::cartpole();
        bad.clip_eps = 0.0;
        assert!(bad.validate().is_err());
        assert!(PpoConfig::mountain_car().validate().is_ok());
    }
}
