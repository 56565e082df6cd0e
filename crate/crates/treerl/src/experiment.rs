//! Experiment orchestration: JSON spec files, multi-seed runs with
//! per-seed output directories, CSV reports, and a run manifest.
//!
//! Re-running a spec file with the same seeds reproduces every report
//! byte-for-byte (models written by the orchestrator carry a zeroed
//! creation timestamp; the manifest's wall time is the one intentionally
//! non-reproducible field).

use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::explain::{self, ImportanceMethod};
use crate::imitation::{self, Dataset, FidelityReport, ImitationConfig, TrainedImitator};
use crate::policy::{InferenceMode, PolicyModel, PolicySpec};
use crate::ppo::{self, PpoConfig, RlRun};
use crate::rng;
use crate::tree::dot;
use crate::tree::models::{DiscretizeMode, ModelMeta};
use crate::tree::params::{cdt_param_count, param_ratio_sweep, sdt_param_count};
use crate::tree::serialize::{load_model, save_model};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Environment variable holding the root that relative output directories
/// are resolved against.
pub const OUT_ROOT_ENV: &str = "TREERL_OUT_ROOT";

/// A parsed spec file: `{"command": ..., "args": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub command: String,
    #[serde(default)]
    pub args: serde_json::Value,
}

/// Optional overrides applied on top of the per-environment PPO defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfigPatch {
    pub learning_rate: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub clip_eps: Option<f64>,
    pub update_iters: Option<usize>,
    pub value_hidden: Option<usize>,
    pub episodes: Option<usize>,
    pub horizon: Option<usize>,
    pub normalize: Option<bool>,
}

impl PpoConfigPatch {
    pub fn apply(&self, mut base: PpoConfig) -> PpoConfig {
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.gamma {
            base.gamma = v;
        }
        if let Some(v) = self.lambda {
            base.lambda = v;
        }
        if let Some(v) = self.clip_eps {
            base.clip_eps = v;
        }
        if let Some(v) = self.update_iters {
            base.update_iters = v;
        }
        if let Some(v) = self.value_hidden {
            base.value_hidden = v;
        }
        if let Some(v) = self.episodes {
            base.episodes = v;
        }
        if let Some(v) = self.horizon {
            base.horizon = v;
        }
        if let Some(v) = self.normalize {
            base.normalize = v;
        }
        base
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImitateArgs {
    pub env: EnvKind,
    pub model: PolicySpec,
    #[serde(default)]
    pub train: ImitationConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlArgs {
    pub env: EnvKind,
    pub policy: PolicySpec,
    #[serde(default)]
    pub config: PpoConfigPatch,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizeArgs {
    pub model_file: PathBuf,
    pub mode: DiscretizeMode,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateArgs {
    pub model_file: PathBuf,
    pub env: EnvKind,
    #[serde(default = "default_eval_episodes")]
    pub episodes: usize,
    #[serde(default = "default_inference")]
    pub inference: InferenceMode,
    #[serde(default)]
    pub seed: u64,
    /// Teacher episodes used as the fidelity reference set.
    #[serde(default = "default_fidelity_episodes")]
    pub fidelity_episodes: usize,
    pub out_dir: PathBuf,
}

fn default_eval_episodes() -> usize {
    100
}

fn default_inference() -> InferenceMode {
    InferenceMode::Soft
}

fn default_fidelity_episodes() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainArgs {
    pub model_file: PathBuf,
    /// CSV of states, one row of R values per timestep, no header.
    pub episode_file: PathBuf,
    pub method: String,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityArgs {
    pub model_files: Vec<PathBuf>,
    #[serde(default = "default_random_agents")]
    pub random: usize,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn default_random_agents() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsArgs {
    pub r: usize,
    #[serde(default)]
    pub k: Option<usize>,
    pub o: usize,
    /// Inclusive total-depth sweep range.
    pub sweep: Option<(u32, u32)>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportDotArgs {
    pub model_file: PathBuf,
    #[serde(default)]
    pub input: Option<Vec<f64>>,
    pub out_dir: PathBuf,
}

/// Tracks files and directories created by a run so that a failed run can
/// remove its partial outputs.
#[derive(Debug, Default)]
pub struct OutputTracker {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl OutputTracker {
    pub fn create_dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            std::fs::create_dir_all(dir)?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    pub fn note_file(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    /// Removes everything this run created (best effort), for abort paths.
    pub fn cleanup(&self) {
        for f in self.files.iter().rev() {
            let _ = std::fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = std::fs::remove_dir_all(d);
        }
    }
}

/// Summary of a finished run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    spec_sha256: String,
    command: &'a str,
    seeds: Vec<u64>,
    wall_time_secs: f64,
    version: &'a str,
}

/// Resolves an output directory against [`OUT_ROOT_ENV`] when relative.
pub fn resolve_out_dir(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(dir),
        None => dir.to_path_buf(),
    }
}

fn parse_args<T: serde::de::DeserializeOwned>(spec: &SpecFile) -> Result<T> {
    serde_json::from_value(spec.args.clone())
        .map_err(|e| Error::Spec(format!("invalid args for `{}`: {e}", spec.command)))
}

/// Loads and validates a spec file, then runs it.
pub fn run_spec_file(path: &Path) -> Result<RunSummary> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Spec(format!("cannot read spec file {}: {e}", path.display())))?;
    let spec: SpecFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Spec(format!("invalid spec file: {e}")))?;
    run_spec(&spec, &bytes)
}

/// Runs a parsed spec. `spec_bytes` feeds the manifest's content hash.
pub fn run_spec(spec: &SpecFile, spec_bytes: &[u8]) -> Result<RunSummary> {
    let started = std::time::Instant::now();
    let mut tracker = OutputTracker::default();
    let result = dispatch(spec, &mut tracker);
    match result {
        Ok((out_dir, seeds, mut artifacts)) => {
            let manifest = Manifest {
                spec_sha256: hex_digest(spec_bytes),
                command: &spec.command,
                seeds,
                wall_time_secs: started.elapsed().as_secs_f64(),
                version: env!("CARGO_PKG_VERSION"),
            };
            let manifest_path = out_dir.join("manifest.json");
            let mut text = serde_json::to_string_pretty(&manifest)?;
            text.push('\n');
            std::fs::write(&manifest_path, text)?;
            artifacts.push(manifest_path);
            Ok(RunSummary { out_dir, artifacts })
        }
        Err(e) => {
            tracker.cleanup();
            Err(e)
        }
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

type DispatchOutput = (PathBuf, Vec<u64>, Vec<PathBuf>);

fn dispatch(spec: &SpecFile, tracker: &mut OutputTracker) -> Result<DispatchOutput> {
    match spec.command.as_str() {
        "imitate" => run_imitate(parse_args(spec)?, tracker),
        "rl" => run_rl(parse_args(spec)?, tracker),
        "discretize" => run_discretize(parse_args(spec)?, tracker),
        "evaluate" => run_evaluate(parse_args(spec)?, tracker),
        "explain" => run_explain(parse_args(spec)?, tracker),
        "stability" => run_stability(parse_args(spec)?, tracker),
        "params" => run_params(parse_args(spec)?, tracker),
        "export-dot" => run_export_dot(parse_args(spec)?, tracker),
        other => Err(Error::Spec(format!("unknown command `{other}`"))),
    }
}

/// Writes a header plus string rows as CSV.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Writes the per-seed fidelity report with the standard columns.
pub fn write_fidelity_csv(path: &Path, rows: &[FidelityReport]) -> Result<()> {
    write_csv(
        path,
        &["mode", "accuracy", "reward_mean", "reward_std", "params"],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.mode.clone(),
                    fmt(r.accuracy),
                    fmt(r.reward_mean),
                    fmt(r.reward_std),
                    r.params.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )
}

/// Writes an RL learning curve (episode, reward, smoothed_reward).
pub fn write_curve_csv(path: &Path, run: &RlRun) -> Result<()> {
    write_csv(
        path,
        &["episode", "reward", "smoothed_reward"],
        &run.curve
            .iter()
            .map(|p| {
                vec![
                    p.episode.to_string(),
                    fmt(p.reward),
                    fmt(p.smoothed_reward),
                ]
            })
            .collect::<Vec<_>>(),
    )
}

/// One imitation seed: dataset, training, fidelity rows.
pub fn imitate_seed(
    env: EnvKind,
    model: &PolicySpec,
    train: &ImitationConfig,
    seed: u64,
) -> Result<(TrainedImitator, Vec<FidelityReport>)> {
    let dataset = Dataset::generate(env, train.dataset_episodes, rng::sub_seed(seed, "dataset", 0))?;
    let trained = imitation::train_imitator(&dataset, model, train, seed)?;
    let rows = imitation::fidelity_rows(&trained, env, train, seed)?;
    Ok((trained, rows))
}

fn run_imitate(args: ImitateArgs, tracker: &mut OutputTracker) -> Result<DispatchOutput> {
    if args.seeds.is_empty() {
        return Err(Error::Spec("imitate needs at least one seed".into()));
    }
    let out_dir = resolve_out_dir(&args.out_dir);
    tracker.create_dir(&out_dir)?;
    let results: Vec<(u64, TrainedImitator, Vec<FidelityReport>)> = args
        .seeds
        .par_iter()
        .map(|&seed| {
            let (trained, rows) = imitate_seed(args.env, &args.model, &args.train, seed)?;
            Ok((seed, trained, rows))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut artifacts = Vec::new();
    for (seed, trained, rows) in &results {
        let seed_dir = out_dir.join(format!("seed-{seed}"));
        tracker.create_dir(&seed_dir)?;
        let mut model = trained.model.clone();
        model.set_meta(ModelMeta::deterministic(*seed));
        let model_path = seed_dir.join("model.json");
        save_model(&model, &model_path)?;
        tracker.note_file(&model_path);
        let report_path = seed_dir.join("report.csv");
        write_fidelity_csv(&report_path, rows)?;
        tracker.note_file(&report_path);
        let log_path = seed_dir.join("train_log.csv");
        write_csv(
            &log_path,
            &["epoch", "loss", "holdout_accuracy"],
            &trained
                .train_loss
                .iter()
                .zip(&trained.holdout_accuracy)
                .enumerate()
                .map(|(e, (l, a))| vec![e.to_string(), fmt(*l), fmt(*a)])
                .collect::<Vec<_>>(),
        )?;
        tracker.note_file(&log_path);
        artifacts.extend([model_path, report_path, log_path]);
    }

    // Aggregate across seeds, mode by mode.
    let mode_labels: Vec<String> = results[0].2.iter().map(|r| r.mode.clone()).collect();
    let mut agg_rows = Vec::new();
    for (mi, label) in mode_labels.iter().enumerate() {
        let accs: Vec<f64> = results.iter().map(|(_, _, rows)| rows[mi].accuracy).collect();
        let rewards: Vec<f64> = results
            .iter()
            .map(|(_, _, rows)| rows[mi].reward_mean)
            .collect();
        agg_rows.push(vec![
            label.clone(),
            fmt(mean(&accs)),
            fmt(std_dev(&accs)),
            fmt(mean(&rewards)),
            fmt(std_dev(&rewards)),
            results[0].2[mi].params.to_string(),
        ]);
    }
    let agg_path = out_dir.join("aggregate.csv");
    write_csv(
        &agg_path,
        &[
            "mode",
            "accuracy_mean",
            "accuracy_std",
            "reward_mean",
            "reward_std",
            "params",
        ],
        &agg_rows,
    )?;
    tracker.note_file(&agg_path);
    artifacts.push(agg_path);
    Ok((out_dir, args.seeds, artifacts))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn run_rl(args: RlArgs, tracker: &mut OutputTracker) -> Result<DispatchOutput> {
    if args.seeds.is_empty() {
        return Err(Error::Spec("rl needs at least one seed".into()));
    }
    let config = args.config.apply(PpoConfig::for_env(args.env));
    config.validate()?;
    let out_dir = resolve_out_dir(&args.out_dir);
    tracker.create_dir(&out_dir)?;
    let results: Vec<(u64, RlRun)> = args
        .seeds
        .par_iter()
        .map(|&seed| Ok((seed, ppo::train_rl(args.env, &args.policy, &config, seed)?)))
        .collect::<Result<Vec<_>>>()?;

    let mut artifacts = Vec::new();
    let mut agg_rows = Vec::new();
    for (seed, run) in &results {
        let seed_dir = out_dir.join(format!("seed-{seed}"));
        tracker.create_dir(&seed_dir)?;
        let mut model = run.best_model.clone();
        model.set_meta(ModelMeta::deterministic(*seed));
        let model_path = seed_dir.join("model.json");
        save_model(&model, &model_path)?;
        tracker.note_file(&model_path);
        let curve_path = seed_dir.join("curve.csv");
        write_curve_csv(&curve_path, run)?;
        tracker.note_file(&curve_path);
        artifacts.extend([model_path, curve_path]);
        let final_smoothed = run.curve.last().map(|p| p.smoothed_reward).unwrap_or(f64::NAN);
        agg_rows.push(vec![
            seed.to_string(),
            fmt(run.best_smoothed),
            fmt(final_smoothed),
        ]);
    }
    let agg_path = out_dir.join("aggregate.csv");
    write_csv(&agg_path, &["seed", "best_smoothed", "final_smoothed"], &agg_rows)?;
    tracker.note_file(&agg_path);
    artifacts.push(agg_path);
    Ok((out_dir, args.seeds, artifacts))
}

fn run_discretize(args: DiscretizeArgs, tracker: &mut OutputTracker) -> Result<DispatchOutput> {
    let model = load_model(&args.model_file)?;
    let hard = model.discretize(args.mode)?;
    let out_dir = resolve_out_dir(&args.out_dir);
    tracker.create_dir(&out_dir)?;
    let path = out_dir.join("model.json");
    save_model(&hard, &path)?;
    tracker.note_file(&path);
    Ok((out_dir, vec![], vec![path]))
}

fn run_evaluate(args: EvaluateArgs, tracker: &mut OutputTracker) -> Result<DispatchOutput> {
    let model = load_model(&args.model_file)?;
    let out_dir = resolve_out_dir(&args.out_dir);
    tracker.create_dir(&out_dir)?;
    let report = evaluate_model(
        &model,
        args.env,
        args.episodes,
        args.fidelity_episodes,
        args.inference,
        args.seed,
    )?;
    let path = out_dir.join("report.csv");
    write_fidelity_csv(&path, &[report])?;
    tracker.note_file(&path);
    Ok((out_dir, vec![args.seed], vec![path]))
}

/// Evaluates a stored model: fidelity against a fresh teacher reference set
/// plus greedy episode reward.
pub fn evaluate_model(
    model: &PolicyModel,
    env: EnvKind,
    episodes: usize,
    fidelity_episodes: usize,
    inference: InferenceMode,
    seed: u64,
) -> Result<FidelityReport> {
    let reference = Dataset::generate(env, fidelity_episodes, rng::sub_seed(seed, "fidelity", 0))?;
    let rows: Vec<(Vec<f64>, usize)> = reference
        .episodes
        .iter()
        .flat_map(|e| e.states.iter().cloned().zip(e.actions.iter().copied()))
        .collect();
    let label = match inference {
        InferenceMode::Soft => "soft",
        InferenceMode::Greedy => "greedy",
    };
    imitation::evaluate(model, env, &rows, episodes, inference, seed, label)
}

/// Importance table (header + rows) for a model over an episode of states.
/// `method` is a method name or `all`; on discretized models `all` covers
/// the two path methods only.
pub fn importance_table(
    model: &PolicyModel,
    states: &[Vec<f64>],
    method: &str,
) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let methods: Vec<ImportanceMethod> = match method {
        "all" => {
            let mut ms = vec![ImportanceMethod::PathSum, ImportanceMethod::Confidence];
            if !model.is_discretized() {
                ms.push(ImportanceMethod::Gradient);
            }
            ms
        }
        m => vec![m.parse()?],
    };
    let mut header: Vec<String> = vec!["timestep".into(), "method".into()];
    header.extend((0..model.input_dim()).map(|i| format!("I_{i}")));
    let mut rows = Vec::new();
    for (t, state) in states.iter().enumerate() {
        for &method in &methods {
            let iv = explain::importance(model, state, method)?;
            let mut row = vec![t.to_string(), method.to_string()];
            row.extend(iv.values.iter().map(|v| fmt(*v)));
            rows.push(row);
        }
    }
    Ok((header, rows))
}

fn run_explain(args: ExplainArgs, tracker: &mut OutputTracker) -> Result<DispatchOutput> {
    let model = load_model(&args.model_file)?;
    let states = read_states_csv(&args.episode_file, model.input_dim())?;
    let (header, rows) = importance_table(&model, &states, &args.method)?;
    let out_dir = resolve_out_dir(&args.out_dir);
    tracker.create_dir(&out_dir)?;
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let path = out_dir.join("importance.csv");
    write_csv(&path, &header_refs, &rows)?;
    tracker.note_file(&path);
    Ok((out_dir, vec![], vec![path]))
}

/// Reads a no-header CSV of states (R columns per row).
pub fn read_states_csv(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != dim {
            return Err(Error::DimensionMismatch {
                what: format!("state row {}", out.len() + 1),
                expected: dim,
                got: record.len(),
            });
        }
        let row: Vec<f64> = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Spec(format!("bad state value `{f}`")))
            })
            .collect::<Result<_>>()?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("episode state file".into()));
    }
    Ok(out)
}

/// Writes the two-row stability comparison CSV.
pub fn write_stability_csv(path: &Path, result: &explain::StabilityResult) -> Result<()> {
    write_csv(
        path,
        &["comparison", "mean", "std", "models", "agents"],
        &[
            vec![
                "imitator-vs-imitator".into(),
                fmt(result.imitator_mean),
                String::new(),
                result.imitators.to_string(),
                result.imitators.to_string(),
            ],
            vec![
                "imitator-vs-random".into(),
                fmt(result.random_mean),
                fmt(result.random_std),
                result.imitators.to_string(),
                result.randoms.to_string(),
            ],
        ],
    )
}

fn run_stability(args: StabilityArgs, tracker: &mut OutputTracker) -> Result<DispatchOutput> {
    let models: Vec<PolicyModel> = args
        .model_files
        .iter()
        .map(|p| load_model(p))
        .collect::<Result<_>>()?;
    let result = explain::stability_report(&models, args.random, args.seed)?;
    let out_dir = resolve_out_dir(&args.out_dir);
    tracker.create_dir(&out_dir)?;
    let path = out_dir.join("stability.csv");
    write_stability_csv(&path, &result)?;
    tracker.note_file(&path);
    Ok((out_dir, vec![args.seed], vec![path]))
}

fn run_params(args: ParamsArgs, tracker: &mut OutputTracker) -> Result<DispatchOutput> {
    let out_dir = resolve_out_dir(&args.out_dir);
    tracker.create_dir(&out_dir)?;
    let path = out_dir.join("params.csv");
    match args.sweep {
        Some((lo, hi)) => {
            let k = args
                .k
                .ok_or_else(|| Error::Spec("params sweep needs the intermediate dimension k".into()))?;
            let rows = param_ratio_sweep(args.r, k, args.o, lo, hi)?;
            write_csv(
                &path,
                &["d", "d1", "d2", "n_cdt", "n_sdt", "ratio"],
                &rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.total_depth.to_string(),
                            r.d1.to_string(),
                            r.d2.to_string(),
                            r.cdt.to_string(),
                            r.sdt.to_string(),
                            fmt(r.ratio),
                        ]
                    })
                    .collect::<Vec<_>>(),
            )?;
        }
        None => {
            // Without a sweep, tabulate the standard depth configurations.
            let mut rows = Vec::new();
            for d in 1..=4u32 {
                rows.push(vec![
                    format!("sdt-d{d}"),
                    sdt_param_count(args.r, args.o, d, false).to_string(),
                    sdt_param_count(args.r, args.o, d, true).to_string(),
                ]);
            }
            if let Some(k) = args.k {
                for (d1, d2) in [(1, 2), (2, 1), (2, 2)] {
                    rows.push(vec![
                        format!("cdt-{d1}+{d2}"),
                        cdt_param_count(args.r, k, args.o, d1, d2, None).to_string(),
                        cdt_param_count(args.r, k, args.o, d1, d2, Some(DiscretizeMode::FAndD))
                            .to_string(),
                    ]);
                }
            }
            write_csv(&path, &["config", "soft", "discretized"], &rows)?;
        }
    }
    tracker.note_file(&path);
    Ok((out_dir, vec![], vec![path]))
}

fn run_export_dot(args: ExportDotArgs, tracker: &mut OutputTracker) -> Result<DispatchOutput> {
    let model = load_model(&args.model_file)?;
    let text = dot::model_to_dot(&model, args.input.as_deref())?;
    let out_dir = resolve_out_dir(&args.out_dir);
    tracker.create_dir(&out_dir)?;
    let path = out_dir.join("model.dot");
    std::fs::write(&path, text)?;
    tracker.note_file(&path);
    Ok((out_dir, vec![], vec![path]))
}
