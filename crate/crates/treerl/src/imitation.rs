//! Imitation learning: teacher dataset generation, mixture-NLL training of
//! SDT/CDT imitators, and fidelity evaluation before and after
//! discretization.

use crate::autodiff::{AdamState, Tape};
use crate::env::{fit_normalizer, EnvKind, StateNormalizer};
use crate::error::{Error, Result};
use crate::policy::{InferenceMode, PolicyModel, PolicySpec};
use crate::rng;
use crate::tree::models::{DiscretizeMode, Family, ModelMeta};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Hyperparameters for one imitation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImitationConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Teacher episodes in the dataset. The desk-scale default is 1000;
    /// pass 10000 to match the original large-scale runs.
    pub dataset_episodes: usize,
    /// Episodes per reward evaluation.
    pub eval_episodes: usize,
    /// Fraction of episodes held out for the fidelity accuracy.
    pub holdout_fraction: f64,
    /// Fit a state normalizer on the training split (stored in the model).
    pub normalize: bool,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        ImitationConfig {
            learning_rate: 1e-3,
            batch_size: 1280,
            epochs: 80,
            dataset_episodes: 1000,
            eval_episodes: 100,
            holdout_fraction: 0.1,
            normalize: true,
        }
    }
}

impl ImitationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.batch_size == 0
            || self.epochs == 0
            || self.dataset_episodes == 0
            || self.eval_episodes == 0
        {
            return Err(Error::Spec("imitation hyperparameters must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Spec("holdout fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One teacher rollout: states visited and the actions taken in them.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
}

/// A state-action dataset with episode boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub state_dim: usize,
    pub action_count: usize,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    /// Rolls out the environment's scripted teacher.
    pub fn generate(kind: EnvKind, episodes: usize, seed: u64) -> Result<Dataset> {
        if episodes == 0 {
            return Err(Error::Spec("dataset needs at least one episode".into()));
        }
        let mut env = kind.build();
        let teacher = kind.teacher();
        let mut out = Vec::with_capacity(episodes);
        for e in 0..episodes {
            let mut state = env.reset(rng::sub_seed(seed, "dataset-episode", e as u64));
            let mut ep = Episode {
                states: Vec::new(),
                actions: Vec::new(),
            };
            loop {
                let action = teacher(&state);
                ep.states.push(state.clone());
                ep.actions.push(action);
                let step = env.step(action)?;
                if step.done {
                    break;
                }
                state = step.state;
            }
            out.push(ep);
        }
        Ok(Dataset {
            state_dim: kind.state_dim(),
            action_count: kind.action_count(),
            episodes: out,
        })
    }

    pub fn row_count(&self) -> usize {
        self.episodes.iter().map(|e| e.actions.len()).sum()
    }

    /// Writes the flat text form: a `R O count` header line followed by
    /// comma-separated `s_0,...,s_{R-1},action` rows (unnormalized states).
    /// Episode boundaries are not stored.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = format!("{} {} {}\n", self.state_dim, self.action_count, self.row_count());
        for ep in &self.episodes {
            for (state, action) in ep.states.iter().zip(&ep.actions) {
                for v in state {
                    text.push_str(&format!("{v},"));
                }
                text.push_str(&format!("{action}\n"));
            }
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Reads the flat form back. The file has no episode markers, so the
    /// result holds a single episode containing every row.
    pub fn load(path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Spec("empty dataset file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Spec("dataset header must be `R O count`".into()));
        }
        let r: usize = parts[0]
            .parse()
            .map_err(|_| Error::Spec("bad R in dataset header".into()))?;
        let o: usize = parts[1]
            .parse()
            .map_err(|_| Error::Spec("bad O in dataset header".into()))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|_| Error::Spec("bad count in dataset header".into()))?;
        let mut ep = Episode {
            states: Vec::with_capacity(count),
            actions: Vec::with_capacity(count),
        };
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != r + 1 {
                return Err(Error::Spec(format!(
                    "dataset row {} has {} fields, want {}",
                    lineno + 2,
                    fields.len(),
                    r + 1
                )));
            }
            let state: Vec<f64> = fields[..r]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Spec(format!("bad state value on row {}", lineno + 2)))?;
            let action: usize = fields[r]
                .parse()
                .map_err(|_| Error::Spec(format!("bad action on row {}", lineno + 2)))?;
            if action >= o {
                return Err(Error::Spec(format!("action {action} out of range on row {}", lineno + 2)));
            }
            ep.states.push(state);
            ep.actions.push(action);
        }
        if ep.actions.len() != count {
            return Err(Error::Spec(format!(
                "dataset header promises {count} rows, found {}",
                ep.actions.len()
            )));
        }
        Ok(Dataset {
            state_dim: r,
            action_count: o,
            episodes: vec![ep],
        })
    }
}

/// A trained imitator plus its training history and held-out rows.
#[derive(Debug, Clone)]
pub struct TrainedImitator {
    pub model: PolicyModel,
    /// Mean training NLL per epoch.
    pub train_loss: Vec<f64>,
    /// Held-out soft-mixture accuracy per epoch.
    pub holdout_accuracy: Vec<f64>,
    /// Held-out (state, teacher action) rows, untouched by training.
    pub holdout: Vec<(Vec<f64>, usize)>,
}

/// Trains an SDT or CDT on the dataset by minimizing the negative log of
/// the soft mixture probability of the teacher action.
pub fn train_imitator(
    dataset: &Dataset,
    spec: &PolicySpec,
    config: &ImitationConfig,
    seed: u64,
) -> Result<TrainedImitator> {
    config.validate()?;
    if matches!(spec.family(), Family::Mlp) {
        return Err(Error::Spec("imitation trains tree models, not the MLP baseline".into()));
    }

    // Episode-level 90/10 split; rows of one episode never straddle it.
    let mut order: Vec<usize> = (0..dataset.episodes.len()).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let holdout_count = ((dataset.episodes.len() as f64 * config.holdout_fraction).round()
        as usize)
        .min(dataset.episodes.len().saturating_sub(1))
        .max(usize::from(dataset.episodes.len() > 1));
    let (holdout_eps, train_eps) = order.split_at(holdout_count);

    let mut train_rows: Vec<(&[f64], usize)> = Vec::new();
    for &e in train_eps {
        let ep = &dataset.episodes[e];
        train_rows.extend(ep.states.iter().map(|s| s.as_slice()).zip(ep.actions.iter().copied()));
    }
    let holdout: Vec<(Vec<f64>, usize)> = holdout_eps
        .iter()
        .flat_map(|&e| {
            let ep = &dataset.episodes[e];
            ep.states.iter().cloned().zip(ep.actions.iter().copied())
        })
        .collect();
    if train_rows.is_empty() {
        return Err(Error::EmptyInput("training split".into()));
    }
    if config.batch_size > train_rows.len() {
        return Err(Error::Spec(format!(
            "batch size {} exceeds training rows {}",
            config.batch_size,
            train_rows.len()
        )));
    }

    let normalizer = if config.normalize {
        fit_normalizer(train_rows.iter().map(|(s, _)| *s))?
    } else {
        StateNormalizer::identity(dataset.state_dim)
    };

    let mut model = spec.build(
        dataset.state_dim,
        dataset.action_count,
        &mut rng::stream(seed, "init"),
        ModelMeta::new(seed),
    )?;
    model.set_normalizer(normalizer);

    let mut flat = model.get_params();
    let mut adam = AdamState::new(flat.len());
    let mut tape = Tape::new();
    let mut shuffle_rng = rng::stream(seed, "shuffle");
    let mut indices: Vec<usize> = (0..train_rows.len()).collect();

    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut holdout_accuracy = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in indices.chunks(config.batch_size).enumerate() {
            tape.clear();
            let params = tape.leaves(&flat);
            let prepared = model.tape_prepare(&mut tape, &params)?;
            let mut log_sum = None;
            for &row in chunk {
                let (state, action) = train_rows[row];
                let p = model.tape_class_prob_prepared(&mut tape, &params, &prepared, state, action)?;
                let lp = tape.log(p)?;
                log_sum = Some(match log_sum {
                    None => lp,
                    Some(acc) => tape.add(acc, lp),
                });
            }
            let loss = tape.mul_const(log_sum.unwrap(), -1.0 / chunk.len() as f64);
            let loss_value = tape.value(loss);
            if !loss_value.is_finite() {
                let param_norm = flat.iter().map(|p| p * p).sum::<f64>().sqrt();
                return Err(Error::NonFinite {
                    context: "imitation loss".into(),
                    epoch,
                    batch: batch_idx,
                    param_norm,
                });
            }
            let grads = tape.backward(loss).collect(&params);
            adam.step(&mut flat, &grads, config.learning_rate)?;
            epoch_loss += loss_value;
            batches += 1;
        }
        model.set_params(&flat);
        train_loss.push(epoch_loss / batches as f64);
        holdout_accuracy.push(accuracy(&model, &holdout, InferenceMode::Soft)?);
    }

    Ok(TrainedImitator {
        model,
        train_loss,
        holdout_accuracy,
        holdout,
    })
}

/// Agreement rate between the model and teacher actions on the given rows.
pub fn accuracy(
    model: &PolicyModel,
    rows: &[(Vec<f64>, usize)],
    mode: InferenceMode,
) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("accuracy rows".into()));
    }
    let mut hits = 0usize;
    for (state, action) in rows {
        if model.act(state, mode)? == *action {
            hits += 1;
        }
    }
    Ok(hits as f64 / rows.len() as f64)
}

/// One row of the fidelity report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityReport {
    pub mode: String,
    pub accuracy: f64,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub params: u64,
}

/// Mean and population std of greedy episode rewards over fresh seeds.
pub fn episode_rewards(
    model: &PolicyModel,
    kind: EnvKind,
    episodes: usize,
    mode: InferenceMode,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut env = kind.build();
    let mut totals = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut state = env.reset(rng::sub_seed(seed, "eval-episode", e as u64));
        let mut total = 0.0;
        loop {
            let action = model.act(&state, mode)?;
            let step = env.step(action)?;
            total += step.reward;
            if step.done {
                break;
            }
            state = step.state;
        }
        totals.push(total);
    }
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    let var = totals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / totals.len() as f64;
    Ok((mean, var.sqrt()))
}

/// Fidelity + reward for one model under one label.
pub fn evaluate(
    model: &PolicyModel,
    kind: EnvKind,
    holdout: &[(Vec<f64>, usize)],
    episodes: usize,
    mode: InferenceMode,
    seed: u64,
    label: &str,
) -> Result<FidelityReport> {
    let acc = accuracy(model, holdout, mode)?;
    let (reward_mean, reward_std) = episode_rewards(model, kind, episodes, mode, seed)?;
    Ok(FidelityReport {
        mode: label.to_string(),
        accuracy: acc,
        reward_mean,
        reward_std,
        params: model.param_count(),
    })
}

/// The standard report rows for a trained imitator: the soft model plus
/// every discretization variant of its family.
pub fn fidelity_rows(
    trained: &TrainedImitator,
    kind: EnvKind,
    config: &ImitationConfig,
    seed: u64,
) -> Result<Vec<FidelityReport>> {
    let model = &trained.model;
    let holdout = &trained.holdout;
    let mut rows = vec![evaluate(
        model,
        kind,
        holdout,
        config.eval_episodes,
        InferenceMode::Soft,
        seed,
        "soft",
    )?];
    match model.family() {
        Family::Sdt => {
            let hard = model.discretize(DiscretizeMode::Sdt)?;
            rows.push(evaluate(
                &hard,
                kind,
                holdout,
                config.eval_episodes,
                InferenceMode::Soft,
                seed,
                "discretized",
            )?);
        }
        Family::Cdt => {
            for (mode, label) in [
                (DiscretizeMode::FOnly, "f-only"),
                (DiscretizeMode::DOnly, "d-only"),
                (DiscretizeMode::FAndD, "f-and-d"),
            ] {
                let hard = model.discretize(mode)?;
                rows.push(evaluate(
                    &hard,
                    kind,
                    holdout,
                    config.eval_episodes,
                    InferenceMode::Soft,
                    seed,
                    label,
                )?);
            }
        }
        Family::Mlp => {}
    }
    Ok(rows)
}
