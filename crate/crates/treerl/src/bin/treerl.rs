//! Command-line front end. Parsing and file plumbing only; all behavior
//! lives in the library.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use treerl::env::EnvKind;
use treerl::error::{Error, Result};
use treerl::experiment;
use treerl::imitation::{self, Dataset, ImitationConfig};
use treerl::policy::{InferenceMode, PolicySpec};
use treerl::ppo::{self, PpoConfig};
use treerl::tree::dot;
use treerl::tree::models::DiscretizeMode;
use treerl::tree::params::{cdt_param_count, sdt_param_count};
use treerl::tree::serialize::{load_model, save_model};
use treerl::{explain, rng};

#[derive(Parser)]
#[command(
    name = "treerl",
    version,
    about = "Soft and cascading decision-tree policies: imitation, PPO, discretization, explanation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Model-architecture flags shared by `imitate` and `rl`.
#[derive(Args, Debug)]
struct ModelFlags {
    /// Model family: sdt, cdt or mlp (mlp for rl only).
    #[arg(long, visible_alias = "policy")]
    family: String,
    /// SDT depth.
    #[arg(long)]
    depth: Option<u32>,
    /// CDT feature-learning tree depth.
    #[arg(long)]
    d1: Option<u32>,
    /// CDT decision-making tree depth.
    #[arg(long)]
    d2: Option<u32>,
    /// CDT intermediate feature dimension.
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    /// MLP hidden width (defaults to the environment's value-net width).
    #[arg(long)]
    hidden: Option<usize>,
}

impl ModelFlags {
    fn to_spec(&self, default_hidden: usize) -> Result<PolicySpec> {
        match self.family.to_ascii_lowercase().as_str() {
            "sdt" => Ok(PolicySpec::Sdt {
                depth: self
                    .depth
                    .ok_or_else(|| Error::Spec("sdt needs --depth".into()))?,
            }),
            "cdt" => Ok(PolicySpec::Cdt {
                d1: self.d1.ok_or_else(|| Error::Spec("cdt needs --d1".into()))?,
                d2: self.d2.ok_or_else(|| Error::Spec("cdt needs --d2".into()))?,
                k: self.k.ok_or_else(|| Error::Spec("cdt needs --K".into()))?,
            }),
            "mlp" => Ok(PolicySpec::Mlp {
                hidden: self.hidden.unwrap_or(default_hidden),
            }),
            other => Err(Error::Spec(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train an SDT/CDT imitator on a scripted-teacher dataset.
    Imitate {
        #[arg(long)]
        env: EnvKind,
        #[command(flatten)]
        model: ModelFlags,
        /// Teacher episodes in the dataset.
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 80)]
        epochs: usize,
        #[arg(long, default_value_t = 1280)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Skip state normalization.
        #[arg(long)]
        no_normalize: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trained model output path.
        #[arg(long)]
        out: PathBuf,
        /// Fidelity report CSV path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the generated dataset here.
        #[arg(long)]
        dataset_out: Option<PathBuf>,
    },
    /// Train a policy with PPO.
    Rl {
        #[arg(long)]
        env: EnvKind,
        #[command(flatten)]
        model: ModelFlags,
        /// Override the per-environment episode budget.
        #[arg(long)]
        episodes: Option<usize>,
        /// Normalize states with scripted-teacher statistics.
        #[arg(long)]
        normalize: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Learning-curve CSV path.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Best-checkpoint model output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert soft nodes of a stored model into hard threshold rules.
    Discretize {
        #[arg(long)]
        model: PathBuf,
        /// sdt, f-only, d-only or f-and-d.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fidelity and greedy episode reward of a stored model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        env: EnvKind,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// soft or greedy.
        #[arg(long, default_value = "soft")]
        inference: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional report CSV path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the states of one greedy episode here (for `explain`).
        #[arg(long)]
        dump_states: Option<PathBuf>,
    },
    /// Per-step feature importance over an episode of states.
    Explain {
        #[arg(long)]
        model: PathBuf,
        /// CSV of states, one row per timestep, no header.
        #[arg(long)]
        episode: PathBuf,
        /// path-sum, confidence, gradient or all.
        #[arg(long, default_value = "all")]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-run stability of a set of trained tree models.
    Stability {
        /// Two or more model files.
        #[arg(long, num_args = 2..)]
        models: Vec<PathBuf>,
        /// Number of random reference agents.
        #[arg(long, default_value_t = 10)]
        random: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form parameter counts; single configuration or depth sweep.
    Params {
        /// sdt or cdt (omit with --sweep for the CDT/SDT comparison).
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        r: usize,
        #[arg(long = "K", alias = "k")]
        k: Option<usize>,
        #[arg(long)]
        o: usize,
        #[arg(long)]
        d: Option<u32>,
        #[arg(long)]
        d1: Option<u32>,
        #[arg(long)]
        d2: Option<u32>,
        /// Discretization mode to count (sdt, f-only, d-only, f-and-d).
        #[arg(long)]
        mode: Option<String>,
        /// Sweep total depth over an inclusive range.
        #[arg(long, num_args = 2, value_names = ["FROM", "TO"])]
        sweep: Option<Vec<u32>>,
        /// CSV output for --sweep.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a stored tree model as Graphviz DOT.
    ExportDot {
        #[arg(long)]
        model: PathBuf,
        /// Example input as comma-separated values; annotates edge
        /// probabilities and highlights the greedy path.
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a JSON experiment spec (multi-seed, directory outputs).
    Run {
        #[arg(long)]
        spec: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Imitate {
            env,
            model,
            episodes,
            epochs,
            batch,
            lr,
            no_normalize,
            seed,
            out,
            report,
            dataset_out,
        } => {
            let spec = model.to_spec(0)?;
            let config = ImitationConfig {
                learning_rate: lr,
                batch_size: batch,
                epochs,
                dataset_episodes: episodes,
                normalize: !no_normalize,
                ..ImitationConfig::default()
            };
            let dataset = Dataset::generate(env, episodes, rng::sub_seed(seed, "dataset", 0))?;
            if let Some(path) = dataset_out {
                dataset.save(&path)?;
            }
            let trained = imitation::train_imitator(&dataset, &spec, &config, seed)?;
            save_model(&trained.model, &out)?;
            let rows = imitation::fidelity_rows(&trained, env, &config, seed)?;
            for row in &rows {
                println!(
                    "{:12} accuracy {:.4}  reward {:.1} +/- {:.1}  params {}",
                    row.mode, row.accuracy, row.reward_mean, row.reward_std, row.params
                );
            }
            if let Some(path) = report {
                experiment::write_fidelity_csv(&path, &rows)?;
            }
            Ok(())
        }
        Command::Rl {
            env,
            model,
            episodes,
            normalize,
            seed,
            curve,
            out,
        } => {
            let mut config = PpoConfig::for_env(env);
            config.normalize = normalize;
            if let Some(e) = episodes {
                config.episodes = e;
            }
            let spec = model.to_spec(config.default_policy_hidden())?;
            let run = ppo::train_rl(env, &spec, &config, seed)?;
            save_model(&run.best_model, &out)?;
            if let Some(path) = curve {
                experiment::write_curve_csv(&path, &run)?;
            }
            let (reward_mean, reward_std) = ppo::evaluate_policy(&run.best_model, env, 100, seed)?;
            println!(
                "best smoothed {:.1}; greedy eval over 100 episodes: {reward_mean:.1} +/- {reward_std:.1}",
                run.best_smoothed
            );
            Ok(())
        }
        Command::Discretize { model, mode, out } => {
            let mode: DiscretizeMode = mode.parse()?;
            let loaded = load_model(&model)?;
            let hard = loaded.discretize(mode)?;
            save_model(&hard, &out)?;
            println!(
                "params {} -> {}",
                loaded.param_count(),
                hard.param_count()
            );
            Ok(())
        }
        Command::Evaluate {
            model,
            env,
            episodes,
            inference,
            seed,
            report,
            dump_states,
        } => {
            let inference: InferenceMode = inference.parse()?;
            let loaded = load_model(&model)?;
            let row = experiment::evaluate_model(&loaded, env, episodes, 100, inference, seed)?;
            println!(
                "{:8} accuracy {:.4}  reward {:.1} +/- {:.1}  params {}",
                row.mode, row.accuracy, row.reward_mean, row.reward_std, row.params
            );
            if let Some(path) = report {
                experiment::write_fidelity_csv(&path, &[row])?;
            }
            if let Some(path) = dump_states {
                let mut env_inst = env.build();
                let mut state = env_inst.reset(rng::sub_seed(seed, "dump-episode", 0));
                let mut rows = Vec::new();
                loop {
                    rows.push(state.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","));
                    let action = loaded.act(&state, inference)?;
                    let step = env_inst.step(action)?;
                    if step.done {
                        break;
                    }
                    state = step.state;
                }
                std::fs::write(&path, rows.join("\n") + "\n")?;
            }
            Ok(())
        }
        Command::Explain {
            model,
            episode,
            method,
            out,
        } => {
            let loaded = load_model(&model)?;
            let states = experiment::read_states_csv(&episode, loaded.input_dim())?;
            let (header, rows) = experiment::importance_table(&loaded, &states, &method)?;
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            experiment::write_csv(&out, &header_refs, &rows)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Stability {
            models,
            random,
            seed,
            out,
        } => {
            let loaded: Vec<_> = models
                .iter()
                .map(|p| load_model(p))
                .collect::<Result<_>>()?;
            let result = explain::stability_report(&loaded, random, seed)?;
            experiment::write_stability_csv(&out, &result)?;
            println!(
                "imitator-vs-imitator {:.4}; imitator-vs-random {:.4} +/- {:.4}",
                result.imitator_mean, result.random_mean, result.random_std
            );
            Ok(())
        }
        Command::Params {
            family,
            r,
            k,
            o,
            d,
            d1,
            d2,
            mode,
            sweep,
            out,
        } => {
            if let Some(range) = sweep {
                let k = k.ok_or_else(|| Error::Spec("--sweep needs --K".into()))?;
                let rows = treerl::tree::params::param_ratio_sweep(r, k, o, range[0], range[1])?;
                let table: Vec<Vec<String>> = rows
                    .iter()
                    .map(|row| {
                        vec![
                            row.total_depth.to_string(),
                            row.d1.to_string(),
                            row.d2.to_string(),
                            row.cdt.to_string(),
                            row.sdt.to_string(),
                            format!("{}", row.ratio),
                        ]
                    })
                    .collect();
                match out {
                    Some(path) => {
                        experiment::write_csv(
                            &path,
                            &["d", "d1", "d2", "n_cdt", "n_sdt", "ratio"],
                            &table,
                        )?;
                    }
                    None => {
                        println!("d,d1,d2,n_cdt,n_sdt,ratio");
                        for row in table {
                            println!("{}", row.join(","));
                        }
                    }
                }
                return Ok(());
            }
            let family = family.ok_or_else(|| Error::Spec("params needs --family or --sweep".into()))?;
            let mode = mode.map(|m| m.parse::<DiscretizeMode>()).transpose()?;
            let count = match family.as_str() {
                "sdt" => {
                    let d = d.ok_or_else(|| Error::Spec("sdt needs --d".into()))?;
                    sdt_param_count(r, o, d, mode.is_some())
                }
                "cdt" => {
                    let d1 = d1.ok_or_else(|| Error::Spec("cdt needs --d1".into()))?;
                    let d2 = d2.ok_or_else(|| Error::Spec("cdt needs --d2".into()))?;
                    let k = k.ok_or_else(|| Error::Spec("cdt needs --K".into()))?;
                    cdt_param_count(r, k, o, d1, d2, mode)
                }
                other => return Err(Error::Spec(format!("unknown family `{other}`"))),
            };
            println!("{count}");
            Ok(())
        }
        Command::ExportDot { model, input, out } => {
            let loaded = load_model(&model)?;
            let input: Option<Vec<f64>> = input
                .map(|s| {
                    s.split(',')
                        .map(|f| {
                            f.trim()
                                .parse::<f64>()
                                .map_err(|_| Error::Spec(format!("bad input value `{f}`")))
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .transpose()?;
            let text = dot::model_to_dot(&loaded, input.as_deref())?;
            std::fs::write(&out, text)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Run { spec } => {
            let summary = experiment::run_spec_file(&spec)?;
            println!("run complete: {}", summary.out_dir.display());
            for artifact in summary.artifacts {
                println!("  {}", artifact.display());
            }
            Ok(())
        }
    }
}
