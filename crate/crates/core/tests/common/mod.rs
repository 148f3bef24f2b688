//! Shared fixtures: small expert datasets and cheap run configurations.
#![allow(dead_code)]

use std::path::Path;

use lfgp::data::save_dataset;
use lfgp::env::{EnvConfig, TaskId};
use lfgp::expert::{collect_gripper_mixed, collect_reset_based};
use lfgp::orchestrator::{dataset_file, Algorithm, RunConfig};

/// Writes `pairs` expert pairs for every task into `dir`.
pub fn write_datasets(dir: &Path, tasks: &[TaskId], main: TaskId, pairs: usize, seed: u64) {
    let env = EnvConfig::default();
    for &t in tasks {
        let ds = match t {
            TaskId::OpenGripper | TaskId::CloseGripper => {
                collect_gripper_mixed(&env, t, main, pairs, seed, true).unwrap().0
            }
            _ => collect_reset_based(&env, t, pairs, seed).unwrap().0,
        };
        save_dataset(&ds, &dataset_file(dir, t)).unwrap();
    }
}

/// A run small enough for debug-speed tests, with its datasets in place.
pub fn small_run(dir: &Path, algorithm: Algorithm, main: TaskId, total: u64, eval: u64) -> RunConfig {
    let mut tasks = main.default_auxiliaries();
    tasks.push(main);
    write_datasets(dir, &tasks, main, 100, 7);
    RunConfig {
        algorithm,
        main_task: main,
        dataset_dir: dir.display().to_string(),
        total_interactions: total,
        eval_interval: eval,
        eval_episodes: 2,
        buffer_warmup: 200,
        initial_exploration: 200,
        width: 16,
        batch_size: 16,
        expert_pairs: 100,
        seed: 11,
        ..RunConfig::default()
    }
}
