use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use emr::eval::{evaluate, inspect, EvalReport};
use emr::tasks::{generate_episode, read_episodes, write_episodes, NOISE_LEVELS};
use emr::train::{load_checkpoint, split_episodes, train, Split, TrainConfig};

#[derive(Parser)]
#[command(name = "emr", version, about = "Learned memory eviction for streaming question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Noisy,
    Original,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Noisy => Split::Noisy,
            SplitArg::Original => Split::Original,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a split of synthetic episodes as JSON lines.
    Generate {
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "noisy")]
        split: SplitArg,
    },
    /// Train a scheduler and solver from a key = value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint at a given memory size.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        memory_slots: usize,
        /// Episodes file from `generate`; generated on the fly when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, default_value_t = 20_240)]
        seed: u64,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Dump the retained memory at every question of one episode.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episode_seed: u64,
        #[arg(long, default_value_t = 0.45)]
        noise_level: f64,
        /// Defaults to the training memory size.
        #[arg(long)]
        memory_slots: Option<usize>,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate {
            episodes,
            seed,
            out,
            split,
        } => {
            let eps = split_episodes(split.into(), seed, episodes);
            write_episodes(&out, &eps).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} episodes to {}", eps.len(), out.display());
        }
        Command::Train { config } => {
            let cfg = TrainConfig::load(&config)
                .with_context(|| format!("reading config {}", config.display()))?;
            let outcome = train(&cfg)?;
            if let Some(p) = outcome.pretrain {
                println!("solver pretraining: {} steps, held-out accuracy {:.4}", p.steps, p.heldout_accuracy);
            }
            for row in &outcome.curves {
                println!(
                    "step {:>7}  train_acc {:.3}  eval_acc {:.3}  eval_solvable {:.3}",
                    row.step, row.train_accuracy, row.eval_accuracy, row.eval_solvable
                );
            }
            println!(
                "best checkpoint at step {} (accuracy {:.3}, solvable {:.3}) in {}",
                outcome.best_step,
                outcome.best_eval_accuracy,
                outcome.best_eval_solvable,
                outcome.output_dir.display()
            );
        }
        Command::Eval {
            checkpoint,
            memory_slots,
            data,
            episodes,
            seed,
            split,
            report,
        } => {
            if memory_slots == 0 {
                bail!("--memory-slots must be positive");
            }
            let (cfg, store, agent) = load(&checkpoint)?;
            let eps = match data {
                Some(path) => read_episodes(&path).with_context(|| format!("reading {}", path.display()))?,
                None => split_episodes(split.map_or(cfg.split, Split::from), seed, episodes),
            };
            let rep: EvalReport = evaluate(&agent, &store, &eps, memory_slots, seed, &cfg.digest())?;
            let json = rep.to_json()?;
            println!("{json}");
            println!("{}", EvalReport::CSV_HEADER);
            println!("{}", rep.csv_row());
            if let Some(path) = report {
                fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Inspect {
            checkpoint,
            episode_seed,
            noise_level,
            memory_slots,
            json,
        } => {
            if !NOISE_LEVELS.contains(&noise_level) {
                bail!("--noise-level must be one of {NOISE_LEVELS:?}");
            }
            let (cfg, store, agent) = load(&checkpoint)?;
            let episode = generate_episode(episode_seed, noise_level);
            let dump = inspect(
                &agent,
                &store,
                &episode,
                memory_slots.unwrap_or(cfg.memory_slots),
                episode_seed,
            )?;
            if json {
                println!("{}", dump.to_json()?);
            } else {
                print!("{}", dump.render());
            }
        }
    }
    Ok(())
}

fn load(dir: &Path) -> Result<(TrainConfig, emr::autodiff::ParameterStore, emr::train::Agent)> {
    load_checkpoint(dir).with_context(|| format!("loading checkpoint {}", dir.display()))
}
