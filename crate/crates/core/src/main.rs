use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lfgp::data::save_dataset;
use lfgp::env::{EnvConfig, TaskId};
use lfgp::expert::{collect_gripper_mixed, collect_play_based, collect_reset_based};
use lfgp::orchestrator::{dataset_file, train, transfer_checkpoint, Checkpoint, RunConfig};
use lfgp::Result;

#[derive(Parser)]
#[command(name = "lfgp", version, about = "Scheduled multitask adversarial imitation in a 2-D block world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Reset,
    Play,
    GripperMixed,
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted-expert demonstrations.
    Collect {
        #[arg(long)]
        task: TaskId,
        #[arg(long, value_enum)]
        scheme: Scheme,
        #[arg(long)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset file; a directory of `<task>.lfgp` files for `play`.
        #[arg(long)]
        out: PathBuf,
        /// Main task whose reset distribution and prefixes the gripper data uses.
        #[arg(long, default_value = "stack")]
        main_task: TaskId,
        /// Gripper data without the prefix mixing.
        #[arg(long)]
        no_mixing: bool,
    },
    /// Train from a key = value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// `key=value`, applied after the file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Mean-action success rate of one task head.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: TaskId,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Add heads for a new main task to a trained checkpoint.
    Transfer {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        main_task: TaskId,
        #[arg(long)]
        out: PathBuf,
    },
}

fn collect(task: TaskId, scheme: Scheme, pairs: usize, seed: u64, out: &Path, main: TaskId, mixing: bool) -> Result<()> {
    let env = EnvConfig::default();
    match scheme {
        Scheme::Reset => {
            let (ds, r) = collect_reset_based(&env, task, pairs, seed)?;
            save_dataset(&ds, out)?;
            println!("{task}: {} pairs from {} episodes ({} failed)", ds.len(), r.episodes, r.failures);
        }
        Scheme::GripperMixed => {
            let (ds, r) = collect_gripper_mixed(&env, task, main, pairs, seed, mixing)?;
            save_dataset(&ds, out)?;
            println!(
                "{task}: {} pairs, {:.0}% with a block held at the switch",
                ds.len(),
                100.0 * r.held_at_switch_fraction()
            );
        }
        Scheme::Play => {
            let (sets, r) = collect_play_based(&env, task, pairs, seed)?;
            std::fs::create_dir_all(out).map_err(|e| lfgp::Error::Io {
                path: out.to_path_buf(),
                source: e,
            })?;
            for (t, ds) in &sets {
                save_dataset(ds, &dataset_file(out, *t))?;
                println!("{t}: {} pairs, drawn {} times", ds.len(), r.task_draws.get(t).copied().unwrap_or(0));
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect {
            task,
            scheme,
            pairs,
            seed,
            out,
            main_task,
            no_mixing,
        } => collect(task, scheme, pairs, seed, &out, main_task, !no_mixing),
        Command::Train { config, overrides } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.apply_overrides(&overrides)?;
            let outcome = train(&cfg)?;
            if let Some(s) = outcome.final_success(cfg.main_task) {
                println!("{} success: {s:.3}", cfg.main_task);
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            task,
            episodes,
            seed,
        } => {
            let rate = Checkpoint::load(&checkpoint)?.evaluate(task, episodes, seed)?;
            println!("{rate}");
            Ok(())
        }
        Command::Transfer { from, main_task, out } => {
            let cfg = transfer_checkpoint(&from, main_task, &out)?;
            println!("wrote {} and {}.cfg ({} heads)", out.display(), out.display(), cfg.task_list().len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
