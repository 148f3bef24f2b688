use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::ExpertDataset;
use crate::env::{
    observe, reset, step, EnvConfig, SuccessTracker, TaskId, WorldState, ACT_DIM, OBS_DIM,
};
use crate::error::{Error, Result};
use crate::expert::controller::expert_action;

/// Steps of another sub-task run before the open expert takes over.
pub const OPEN_PREFIX: usize = 45;
/// Steps of lifting run before the close expert takes over.
pub const CLOSE_PREFIX: usize = 15;

type Pair = ([f64; OBS_DIM], [f64; ACT_DIM]);

/// One expert segment: pairs in order and the states reached after each step.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTrace {
    pub pairs: Vec<Pair>,
    pub states: Vec<WorldState>,
    pub succeeded: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollectReport {
    pub episodes: usize,
    pub failures: usize,
    /// Play-based: segments cut short by a periodic reset.
    pub interrupted: usize,
    /// Play-based: how often each task was drawn.
    pub task_draws: BTreeMap<TaskId, usize>,
    /// Gripper-mixed: prefix length of each stored episode.
    pub prefix_lengths: Vec<usize>,
    /// Gripper-mixed: episodes with a block held when the expert switched.
    pub held_at_switch: usize,
}

impl CollectReport {
    pub fn held_at_switch_fraction(&self) -> f64 {
        if self.prefix_lengths.is_empty() {
            0.0
        } else {
            self.held_at_switch as f64 / self.prefix_lengths.len() as f64
        }
    }
}

/// Runs the `task` expert from `start` until success or `max_steps`.
pub fn run_expert(cfg: &EnvConfig, task: TaskId, start: &WorldState, max_steps: usize) -> EpisodeTrace {
    let mut trace = EpisodeTrace::default();
    let mut tracker = SuccessTracker::new();
    let mut s = start.clone();
    for _ in 0..max_steps {
        let a = expert_action(cfg, task, &s);
        trace.pairs.push((observe(cfg, &s), a.to_array()));
        s = step(cfg, &s, a);
        let ok = tracker.observe(cfg, task, &s);
        trace.states.push(s.clone());
        if ok {
            trace.succeeded = true;
            break;
        }
    }
    trace
}

/// Runs `task`'s expert for exactly `n` steps regardless of success.
fn run_fixed(cfg: &EnvConfig, task: TaskId, s: &mut WorldState, n: usize) -> Vec<Pair> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let a = expert_action(cfg, task, s);
        out.push((observe(cfg, s), a.to_array()));
        *s = step(cfg, s, a);
    }
    out
}

fn check_failures(task: TaskId, failures: usize, episodes: usize) -> Result<()> {
    if failures * 20 > episodes {
        return Err(Error::ExpertFailure {
            task,
            failures,
            episodes,
        });
    }
    Ok(())
}

/// Appends whole episodes until `n_pairs` are stored. The last episode
/// keeps only its final pairs, so it still ends in success.
fn assemble(task: TaskId, episodes: &[Vec<Pair>], n_pairs: usize) -> Result<ExpertDataset> {
    let mut ds = ExpertDataset::new(task, OBS_DIM, ACT_DIM);
    for ep in episodes {
        let room = n_pairs - ds.len();
        let keep = &ep[ep.len().saturating_sub(room)..];
        for (o, a) in keep {
            ds.push_pair(o, a)?;
        }
        ds.end_episode();
        if ds.len() == n_pairs {
            break;
        }
    }
    Ok(ds)
}

fn check_pairs(n_pairs: usize) -> Result<()> {
    if n_pairs == 0 {
        return Err(Error::Config("n_pairs must be positive".into()));
    }
    Ok(())
}

/// Reset, run the expert to success, repeat. Failed episodes are dropped
/// and counted; more than 5% failures is an error.
pub fn collect_reset_based(
    cfg: &EnvConfig,
    task: TaskId,
    n_pairs: usize,
    seed: u64,
) -> Result<(ExpertDataset, CollectReport)> {
    check_pairs(n_pairs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CollectReport::default();
    let mut episodes = Vec::new();
    let mut stored = 0;
    while stored < n_pairs {
        let start = reset(cfg, rng.random(), task.reset_variant());
        let trace = run_expert(cfg, task, &start, cfg.episode_len);
        report.episodes += 1;
        if trace.succeeded {
            stored += trace.pairs.len();
            episodes.push(trace.pairs);
        } else {
            report.failures += 1;
            if report.failures >= 10 {
                check_failures(task, report.failures, report.episodes)?;
            }
        }
    }
    check_failures(task, report.failures, report.episodes)?;
    Ok((assemble(task, &episodes, n_pairs)?, report))
}

/// Open/close data with the prefix mixing: the open expert takes over after
/// `OPEN_PREFIX` steps of another sub-task (cycled in order), the close
/// expert after `CLOSE_PREFIX` steps of lifting. With `mixing` off the
/// open/close expert acts from the reset state.
pub fn collect_gripper_mixed(
    cfg: &EnvConfig,
    task: TaskId,
    main_task: TaskId,
    n_pairs: usize,
    seed: u64,
    mixing: bool,
) -> Result<(ExpertDataset, CollectReport)> {
    check_pairs(n_pairs)?;
    let prefixes: Vec<TaskId> = match task {
        TaskId::OpenGripper => main_task
            .default_auxiliaries()
            .into_iter()
            .chain([main_task])
            .filter(|t| !matches!(t, TaskId::OpenGripper | TaskId::CloseGripper))
            .collect(),
        TaskId::CloseGripper => vec![TaskId::Lift],
        other => {
            return Err(Error::Config(format!(
                "gripper mixing applies to open/close only, not {other}"
            )))
        }
    };
    if prefixes.is_empty() && mixing {
        return Err(Error::Config(format!("{main_task} has no prefix sub-tasks")));
    }
    let prefix_len = if task == TaskId::OpenGripper {
        OPEN_PREFIX
    } else {
        CLOSE_PREFIX
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CollectReport::default();
    let mut episodes = Vec::new();
    let mut stored = 0;
    while stored < n_pairs {
        let mut s = reset(cfg, rng.random(), main_task.reset_variant());
        let mut pairs = Vec::new();
        if mixing {
            let p = prefixes[report.episodes % prefixes.len()];
            pairs = run_fixed(cfg, p, &mut s, prefix_len);
        }
        let held = s.held_block().is_some();
        let trace = run_expert(cfg, task, &s, cfg.episode_len - pairs.len());
        report.episodes += 1;
        if trace.succeeded {
            report.prefix_lengths.push(pairs.len());
            report.held_at_switch += held as usize;
            pairs.extend(trace.pairs);
            stored += pairs.len();
            episodes.push(pairs);
        } else {
            report.failures += 1;
            if report.failures >= 10 {
                check_failures(task, report.failures, report.episodes)?;
            }
        }
    }
    check_failures(task, report.failures, report.episodes)?;
    Ok((assemble(task, &episodes, n_pairs)?, report))
}

/// Uniformly sample the next task from the main task plus its auxiliaries
/// and run its expert from wherever the last one stopped. The world resets
/// every `episode_len` steps; a segment cut by a reset is discarded.
/// Stops once `n_pairs` pairs are stored across all tasks.
pub fn collect_play_based(
    cfg: &EnvConfig,
    main_task: TaskId,
    n_pairs: usize,
    seed: u64,
) -> Result<(BTreeMap<TaskId, ExpertDataset>, CollectReport)> {
    check_pairs(n_pairs)?;
    let mut tasks = main_task.default_auxiliaries();
    tasks.push(main_task);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CollectReport::default();
    let mut out: BTreeMap<TaskId, ExpertDataset> = tasks
        .iter()
        .map(|&t| (t, ExpertDataset::new(t, OBS_DIM, ACT_DIM)))
        .collect();
    let mut stored = 0;
    let mut s = reset(cfg, rng.random(), main_task.reset_variant());
    report.episodes += 1;
    while stored < n_pairs {
        let task = tasks[rng.random_range(0..tasks.len())];
        *report.task_draws.entry(task).or_default() += 1;
        let left = cfg.episode_len - s.t;
        let trace = run_expert(cfg, task, &s, left);
        if trace.succeeded {
            s = trace.states.last().expect("successful segment has states").clone();
            let ds = out.get_mut(&task).expect("task in map");
            let keep = (n_pairs - stored).min(trace.pairs.len());
            for (o, a) in &trace.pairs[trace.pairs.len() - keep..] {
                ds.push_pair(o, a)?;
            }
            ds.end_episode();
            stored += keep;
        } else {
            report.interrupted += 1;
        }
        if s.t >= cfg.episode_len || !trace.succeeded {
            s = reset(cfg, rng.random(), main_task.reset_variant());
            report.episodes += 1;
        }
    }
    Ok((out, report))
}
