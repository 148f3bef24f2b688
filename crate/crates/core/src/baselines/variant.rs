//! Maps an algorithm name to the task set, scheduler and data budget it trains with.

use crate::env::TaskId;
use crate::error::{Error, Result};
use crate::orchestrator::{Algorithm, Auxiliaries, RunConfig};
use crate::scheduler::SchedulerVariant;

#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    /// Discriminator rewards, intentions, and a scheduler choosing among `tasks`.
    Adversarial { scheduler: SchedulerVariant },
    /// Behavioural cloning with a train/validation split.
    Cloning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantPlan {
    pub algorithm: Algorithm,
    pub main_task: TaskId,
    /// Head order: auxiliaries first, main task last.
    pub tasks: Vec<TaskId>,
    pub learner: Learner,
    /// Expert pairs loaded from the front of each task's dataset. Single-task
    /// variants get the whole multitask budget unless they are the less-data kind.
    pub pairs_per_task: usize,
}

impl VariantPlan {
    pub fn main_index(&self) -> usize {
        self.tasks.len() - 1
    }
}

pub fn make_variant(cfg: &RunConfig) -> Result<VariantPlan> {
    cfg.validate()?;
    let main = cfg.main_task;
    let full = cfg.task_list();
    let single_task = |name: &str| -> Result<Vec<TaskId>> {
        match &cfg.auxiliary_tasks {
            Auxiliaries::List(l) if !l.is_empty() => Err(Error::Config(format!(
                "{name} is single-task but auxiliary_tasks lists {l:?}"
            ))),
            _ => Ok(vec![main]),
        }
    };
    let per_task = cfg.expert_pairs;
    let pooled = per_task * full.len();
    let (tasks, learner, pairs_per_task) = match cfg.algorithm {
        Algorithm::Lfgp => (
            full,
            Learner::Adversarial {
                scheduler: cfg.scheduler,
            },
            per_task,
        ),
        Algorithm::LfgpNs => (
            full,
            Learner::Adversarial {
                scheduler: SchedulerVariant::MainOnly,
            },
            per_task,
        ),
        Algorithm::Dac => (
            single_task("dac")?,
            Learner::Adversarial {
                scheduler: SchedulerVariant::MainOnly,
            },
            pooled,
        ),
        Algorithm::Bc => (single_task("bc")?, Learner::Cloning, pooled),
        Algorithm::BcLess => (single_task("bc-less")?, Learner::Cloning, per_task),
        Algorithm::MultiBc => (full, Learner::Cloning, per_task),
    };
    Ok(VariantPlan {
        algorithm: cfg.algorithm,
        main_task: main,
        tasks,
        learner,
        pairs_per_task,
    })
}
