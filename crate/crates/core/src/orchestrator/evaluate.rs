//! Fixed-seed evaluation episodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{observe, reset, step, EnvAction, EnvConfig, ResetVariant, SuccessTracker, TaskId, WorldState};
use crate::error::Result;
use crate::intention::{ActMode, IntentionModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub successes: usize,
    pub episodes: usize,
}

impl EvalResult {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.episodes.max(1) as f64
    }
}

/// Runs `episodes` fresh episodes of `task`, each ending at success or the
/// episode length. Reset seeds come from `seed` alone.
pub fn evaluate<F>(
    env: &EnvConfig,
    task: TaskId,
    variant: ResetVariant,
    episodes: usize,
    seed: u64,
    mut policy: F,
) -> Result<EvalResult>
where
    F: FnMut(&WorldState) -> Result<EnvAction>,
{
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0;
    for _ in 0..episodes {
        let mut s = reset(env, seeds.random(), variant);
        let mut tracker = SuccessTracker::new();
        for _ in 0..env.episode_len {
            let a = policy(&s)?;
            s = step(env, &s, a);
            if tracker.observe(env, task, &s) {
                successes += 1;
                break;
            }
        }
    }
    Ok(EvalResult { successes, episodes })
}

/// Mean-action rollouts of one intention.
pub fn evaluate_intention(
    model: &IntentionModel<f64>,
    env: &EnvConfig,
    task: TaskId,
    variant: ResetVariant,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    model.head_index(task)?;
    // the mean action consumes no randomness
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    evaluate(env, task, variant, episodes, seed, |s| {
        let a = model.act(task, &observe(env, s), ActMode::Mean, &mut unused)?;
        Ok(EnvAction::from_slice(&a))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::expert_action;
    use crate::intention::IntentionConfig;
    use crate::env::{ACT_DIM, OBS_DIM};

    #[test]
    fn scripted_experts_score_high() {
        let env = EnvConfig::default();
        for task in [TaskId::Lift, TaskId::Stack, TaskId::Insert] {
            let r = evaluate(&env, task, task.reset_variant(), 50, 1, |s| Ok(expert_action(&env, task, s))).unwrap();
            assert!(r.rate() >= 0.98, "{task}: {}", r.rate());
        }
    }

    #[test]
    fn untrained_policy_fails_stack_and_is_repeatable() {
        let env = EnvConfig::default();
        let cfg = IntentionConfig {
            width: 32,
            ..IntentionConfig::for_action_dim(ACT_DIM)
        };
        let m = IntentionModel::new(&[TaskId::Stack], OBS_DIM, ACT_DIM, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = evaluate_intention(&m, &env, TaskId::Stack, ResetVariant::Standard, 50, 3).unwrap();
        assert!(a.rate() <= 0.02);
        let b = evaluate_intention(&m, &env, TaskId::Stack, ResetVariant::Standard, 50, 3).unwrap();
        assert_eq!(a, b);
    }
}
