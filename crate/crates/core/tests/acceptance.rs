//! Acceptance criteria, one test per criterion. Every test writes a single
//! `criterion N [PASS|FAIL] ...` line to stderr before asserting.
//!
//! Criteria 3, 4, 5, 8 and 10 train for hundreds of thousands of steps and
//! are `#[ignore]`d; run them with
//! `cargo test --release -p lfgp --test acceptance -- --ignored --test-threads 1`.
//! Their curves land in `target/acceptance/`.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use lfgp::data::{load_dataset, save_dataset, ExpertDataset};
use lfgp::discriminator::{DiscriminatorBank, DiscriminatorConfig};
use lfgp::env::{observe, reset, step, success, EnvConfig, TaskId, WorldState};
use lfgp::expert::{
    collect_gripper_mixed, collect_play_based, collect_reset_based, expert_action, CLOSE_PREFIX,
    OPEN_PREFIX,
};
use lfgp::intention::{draw_noise, IntentionConfig, IntentionModel};
use lfgp::numeric::{
    gaussian_backward, gaussian_head, routed_input_gradient_penalty, Activation, Mlp, MultiHeadNet,
    HeadSpec, ParamSet, Route, Tensor,
};
use lfgp::orchestrator::{dataset_file, train, transfer_checkpoint, Algorithm, Auxiliaries, RunConfig, Trainer};
use lfgp::scheduler::{Scheduler, SchedulerConfig, SchedulerVariant};

fn report(n: u32, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n:>2} [{verdict}] {detail}\n");
    // straight to the handle so the line survives libtest's output capture
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

// ---------------------------------------------------------------- criterion 1

const FD_STEP: f64 = 1e-6;
const FD_ABS: f64 = 1e-5;
const FD_REL: f64 = 1e-4;

#[derive(Default)]
struct GradCheck {
    nets: usize,
    entries: usize,
    worst: f64,
    failures: Vec<String>,
}

impl GradCheck {
    fn compare(&mut self, what: &str, fd: f64, an: f64) {
        self.entries += 1;
        let err = (fd - an).abs();
        let scale = fd.abs().max(an.abs());
        let rel = if scale > 0.0 { err / scale } else { 0.0 };
        self.worst = self.worst.max(err.min(rel));
        if err > FD_ABS && rel > FD_REL && self.failures.len() < 5 {
            self.failures.push(format!("{what}: fd {fd:e} vs analytic {an:e}"));
        }
    }

    /// Central differences of `loss` over every parameter exposed by `params`.
    fn params<P: ParamSet<f64> + Clone>(
        &mut self,
        what: &str,
        base: &P,
        analytic: &[&[f64]],
        loss: impl Fn(&P) -> f64,
    ) {
        for (si, slice) in analytic.iter().enumerate() {
            for (j, &an) in slice.iter().enumerate() {
                let mut up = base.clone();
                up.param_slices_mut()[si][j] += FD_STEP;
                let mut dn = base.clone();
                dn.param_slices_mut()[si][j] -= FD_STEP;
                let fd = (loss(&up) - loss(&dn)) / (2.0 * FD_STEP);
                self.compare(&format!("{what} slice {si}[{j}]"), fd, an);
            }
        }
    }

    fn vector(&mut self, what: &str, x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) {
        for (j, &an) in analytic.iter().enumerate() {
            let mut up = x.to_vec();
            up[j] += FD_STEP;
            let mut dn = x.to_vec();
            dn[j] -= FD_STEP;
            let fd = (loss(&up) - loss(&dn)) / (2.0 * FD_STEP);
            self.compare(&format!("{what} input[{j}]"), fd, an);
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_net(rng: &mut ChaCha8Rng, smooth: bool, in_dim: usize, out_dim: usize) -> Mlp<f64> {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![in_dim];
    for _ in 1..depth {
        sizes.push(rng.random_range(2..=5));
    }
    sizes.push(out_dim);
    let pool: &[Activation] = if smooth {
        &[Activation::Tanh, Activation::Linear]
    } else {
        &[Activation::Tanh, Activation::Linear, Activation::Relu]
    };
    let acts: Vec<Activation> = (0..depth).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    Mlp::new(&sizes, &acts, rng).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_plain_backprop(g: &mut GradCheck, rng: &mut ChaCha8Rng) {
    let (i, o, rows) = (rng.random_range(1..=4), rng.random_range(1..=3), rng.random_range(1..=4));
    let net = random_net(rng, false, i, o);
    let x = uniform(rng, rows * i, -1.5, 1.5);
    let up = uniform(rng, rows * o, -1.0, 1.0);
    let xt = Tensor::from_rows(rows, i, x.clone()).unwrap();
    let (grads, gin) = net.backward(&net.forward_cached(&xt).unwrap(), &up).unwrap();
    let loss = |n: &Mlp<f64>, x: &[f64]| dot(n.forward(&Tensor::from_rows(rows, i, x.to_vec()).unwrap()).unwrap().data(), &up);
    g.params("mlp", &net, &grads.param_slices(), |n| loss(n, &x));
    g.vector("mlp", &x, &gin, |xx| loss(&net, xx));
    g.nets += 1;
}

fn check_penalty(g: &mut GradCheck, rng: &mut ChaCha8Rng) {
    let (i, o, rows) = (rng.random_range(1..=4), rng.random_range(1..=3), rng.random_range(1..=5));
    let net = random_net(rng, true, i, o);
    let x = Tensor::from_rows(rows, i, uniform(rng, rows * i, -1.5, 1.5)).unwrap();
    let heads: Vec<usize> = (0..rows).map(|_| rng.random_range(0..o)).collect();
    let w = uniform(rng, rows, 0.1, 2.0);
    let out = routed_input_gradient_penalty(&net, &x, &heads, &w).unwrap();
    g.params("penalty", &net, &out.grads.param_slices(), |n| {
        routed_input_gradient_penalty(n, &x, &heads, &w).unwrap().penalty
    });
    g.nets += 1;
}

fn check_multihead(g: &mut GradCheck, rng: &mut ChaCha8Rng) {
    let (i, w, o, n_heads) = (rng.random_range(1..=4), rng.random_range(2..=4), rng.random_range(1..=3), rng.random_range(1..=3));
    let acts = [Activation::Tanh, Activation::Relu][rng.random_range(0..2)];
    let head = HeadSpec {
        sizes: vec![w, 3, o],
        activations: vec![acts, Activation::Linear],
    };
    let net = MultiHeadNet::<f64>::new(&[i, w], &[Activation::Tanh], &head, n_heads, rng).unwrap();
    let rows = 2 * n_heads;
    let routes: Vec<Route> = (0..n_heads)
        .map(|h| Route {
            head: (h + 1) % n_heads,
            rows: 2 * h..2 * h + 2,
        })
        .collect();
    let x = uniform(rng, rows * i, -1.0, 1.0);
    let ups: Vec<Vec<f64>> = routes.iter().map(|_| uniform(rng, 2 * o, -1.0, 1.0)).collect();
    let loss = |n: &MultiHeadNet<f64>, x: &[f64]| -> f64 {
        let c = n.forward_routed(&Tensor::from_rows(rows, i, x.to_vec()).unwrap(), &routes).unwrap();
        (0..routes.len()).map(|r| dot(c.output(r), &ups[r])).sum()
    };
    let cache = net.forward_routed(&Tensor::from_rows(rows, i, x.clone()).unwrap(), &routes).unwrap();
    let (grads, gin) = net.backward(&cache, &ups).unwrap();
    g.params("multihead", &net, &grads.param_slices(), |n| loss(n, &x));
    g.vector("multihead", &x, &gin, |xx| loss(&net, xx));
    g.nets += 1;
}

fn check_gaussian(g: &mut GradCheck, rng: &mut ChaCha8Rng) {
    let (rows, act) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let out = uniform(rng, rows * 2 * act, -1.5, 1.5);
    let noise: Vec<f64> = (0..rows * act).map(|_| StandardNormal.sample(rng)).collect();
    let wa = uniform(rng, rows * act, -1.0, 1.0);
    let wl = uniform(rng, rows, -1.0, 1.0);
    let loss = |o: &[f64]| {
        let s = gaussian_head(o, rows, act, &noise).unwrap();
        dot(&s.action, &wa) + dot(&s.log_prob, &wl)
    };
    let s = gaussian_head(&out, rows, act, &noise).unwrap();
    let d = gaussian_backward(&s, &out, &wa, &wl);
    g.vector("gaussian head", &out, &d, loss);
}

fn check_discriminator(g: &mut GradCheck, rng: &mut ChaCha8Rng) {
    let tasks = [TaskId::Reach, TaskId::Lift, TaskId::Stack];
    let k = rng.random_range(1..=3);
    let d = rng.random_range(2..=4);
    let net = random_net(rng, true, d, k);
    let cfg = DiscriminatorConfig {
        input_scale: rng.random_range(0.5..10.0),
        ..DiscriminatorConfig::default()
    };
    let n_pol = rng.random_range(1..=4);
    let policy = uniform(rng, n_pol * d, -1.0, 1.0);
    let expert: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let rows = rng.random_range(1..=4);
            uniform(rng, rows * d, -1.0, 1.0)
        })
        .collect();
    let eps = uniform(rng, k * n_pol, 0.0, 1.0);
    let bank = DiscriminatorBank::from_net(&tasks[..k], net.clone(), &cfg).unwrap();
    let (_, grads) = bank.loss_and_gradients(&policy, &expert, &eps).unwrap();
    g.params("discriminator", &net, &grads.param_slices(), |n| {
        let b = DiscriminatorBank::from_net(&tasks[..k], n.clone(), &cfg).unwrap();
        b.loss_and_gradients(&policy, &expert, &eps).unwrap().0.total
    });
    g.nets += 1;
}

fn check_policy_objective(g: &mut GradCheck, rng: &mut ChaCha8Rng) {
    let tasks = [TaskId::Reach, TaskId::Lift];
    let (obs, act, rows) = (rng.random_range(1..=3), rng.random_range(1..=2), rng.random_range(1..=3));
    let cfg = IntentionConfig {
        width: 4,
        ..IntentionConfig::for_action_dim(act)
    };
    let model = IntentionModel::<f64>::new(&tasks, obs, act, &cfg, rng).unwrap();
    let states = uniform(rng, rows * obs, -1.0, 1.0);
    let noise = draw_noise(rng, 2, rows, act);
    let (_, grads) = model.policy_objective(&states, &noise).unwrap();
    let total = |p: &MultiHeadNet<f64>| -> f64 {
        let mut m = model.clone();
        m.policy = p.clone();
        m.policy_objective(&states, &noise).unwrap().0.per_task.iter().sum()
    };
    g.params("policy objective", &model.policy, &grads.param_slices(), total);
    g.nets += 1;
}

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let start = std::time::Instant::now();
    let mut g = GradCheck::default();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check_plain_backprop(&mut g, &mut rng);
        check_penalty(&mut g, &mut rng);
        check_multihead(&mut g, &mut rng);
        check_gaussian(&mut g, &mut rng);
        check_discriminator(&mut g, &mut rng);
        if seed % 4 == 0 {
            check_policy_objective(&mut g, &mut rng);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        g.failures.is_empty() && g.nets >= 100 && secs < 60.0,
        format!(
            "{} random nets, {} gradient entries, worst min(abs, rel) error {:.1e} (limits {FD_ABS:e} abs / {FD_REL:e} rel), {secs:.1}s{}",
            g.nets,
            g.entries,
            g.worst,
            if g.failures.is_empty() { String::new() } else { format!("; first mismatches: {:?}", g.failures) }
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

fn cluster(rng: &mut ChaCha8Rng, rows: usize, centre: &[f64], spread: f64) -> Vec<f64> {
    (0..rows)
        .flat_map(|_| {
            centre
                .iter()
                .map(|c| {
                    let z: f64 = StandardNormal.sample(&mut *rng);
                    c + spread * z
                })
                .collect::<Vec<f64>>()
        })
        .collect()
}

fn mean_score(bank: &DiscriminatorBank<f64>, rows: &[f64], head: usize) -> f64 {
    let r = bank.rewards(rows).unwrap();
    (0..r.rows()).map(|i| r.row(i)[head]).sum::<f64>() / r.rows() as f64
}

#[test]
fn criterion_02_discriminator_separates_and_stays_calibrated() {
    let start = std::time::Instant::now();
    let cfg = DiscriminatorConfig {
        width: 64,
        ..DiscriminatorConfig::default()
    };
    let tasks = [TaskId::Reach, TaskId::Lift];
    let (dim, batch, steps, tail) = (4, 64, 3000, 500);
    let expert_centres = [[2.5, 2.5, 2.5, 2.5], [2.5, -2.5, 2.5, -2.5]];
    let policy_centre = [-2.5; 4];

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut bank = DiscriminatorBank::<f64>::new(&tasks, dim, &cfg, &mut rng).unwrap();
    let mut norms = [0.0; 2];
    for s in 0..steps {
        let policy = cluster(&mut rng, batch, &policy_centre, 0.3);
        let expert: Vec<Vec<f64>> = expert_centres.iter().map(|c| cluster(&mut rng, batch, c, 0.3)).collect();
        let loss = bank.train_step(&policy, &expert, &mut rng).unwrap();
        if s >= steps - tail {
            for h in 0..2 {
                norms[h] += loss.interp_grad_norm[h] / tail as f64;
            }
        }
    }
    let held_policy = cluster(&mut rng, 500, &policy_centre, 0.3);
    let expert_scores: Vec<f64> = (0..2)
        .map(|h| mean_score(&bank, &cluster(&mut rng, 500, &expert_centres[h], 0.3), h))
        .collect();
    let policy_scores: Vec<f64> = (0..2).map(|h| mean_score(&bank, &held_policy, h)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut same = DiscriminatorBank::<f64>::new(&tasks, dim, &cfg, &mut rng).unwrap();
    let mut bce = [0.0; 2];
    for s in 0..steps {
        let policy = cluster(&mut rng, batch, &policy_centre, 0.3);
        let expert: Vec<Vec<f64>> = (0..2).map(|_| cluster(&mut rng, batch, &policy_centre, 0.3)).collect();
        let loss = same.train_step(&policy, &expert, &mut rng).unwrap();
        if s >= steps - tail {
            for h in 0..2 {
                bce[h] += loss.bce[h] / tail as f64;
            }
        }
    }
    let target = 2.0 * std::f64::consts::LN_2;
    let secs = start.elapsed().as_secs_f64();
    let pass = expert_scores.iter().all(|&s| s > 0.9)
        && policy_scores.iter().all(|&s| s < 0.1)
        && bce.iter().all(|&l| (l - target).abs() <= 0.05 * target)
        && norms.iter().all(|&n| (n - 1.0).abs() <= 0.2)
        && secs < 120.0;
    report(
        2,
        pass,
        format!(
            "expert scores {expert_scores:.3?} (> 0.9), policy scores {policy_scores:.3?} (< 0.1), \
             identical-data loss {bce:.4?} vs 2 ln 2 = {target:.4} (5%), interpolate grad norm {norms:.3?} (1 +- 0.2), {secs:.1}s"
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_06_scheduler_algebra() {
    let tasks = [TaskId::OpenGripper, TaskId::CloseGripper, TaskId::Reach, TaskId::Lift, TaskId::MoveObject, TaskId::Stack];
    let mut notes = Vec::new();
    let mut ok = true;

    // Boltzmann normalisation over a table filled by random returns
    let mut s = Scheduler::new(&tasks, TaskId::Stack, 360, &SchedulerConfig::default(), None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    for episode in 0..200 {
        let chosen: Vec<usize> = (0..8).map(|_| rng.random_range(0..6)).collect();
        let rewards = uniform(&mut rng, 360, 0.0, 1.0);
        s.update(&chosen, &rewards).unwrap();
        if episode % 20 == 0 {
            for h in 0..8 {
                for prev in std::iter::once(None).chain((0..6).map(Some)) {
                    let p = s.probabilities(h, prev).unwrap();
                    worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
    }
    ok &= worst <= 1e-12;
    notes.push(format!("normalisation error {worst:.1e}"));

    // hand-computed slot returns with xi = 2 over 4 steps, rewards 0.5
    let small = SchedulerConfig {
        xi: 2,
        ..SchedulerConfig::default()
    };
    let mut s = Scheduler::new(&[TaskId::Reach, TaskId::Lift], TaskId::Lift, 4, &small, None).unwrap();
    let gm = 0.99_f64;
    let want = [0.5 + 0.5 * gm + 0.5 * gm * gm + 0.5 * gm.powi(3), 0.5 * gm * gm + 0.5 * gm.powi(3)];
    let got = s.update(&[1, 0], &[0.5; 4]).unwrap();
    let g_err = (got[0] - want[0]).abs().max((got[1] - want[1]).abs());
    ok &= g_err <= 1e-12;
    notes.push(format!("G_h error {g_err:.1e}"));

    // EMA with phi 0 keeps the table, phi 1 copies the latest return
    for phi in [0.0, 1.0] {
        let cfg = SchedulerConfig { phi, ..small.clone() };
        let mut s = Scheduler::new(&[TaskId::Reach, TaskId::Lift], TaskId::Lift, 4, &cfg, None).unwrap();
        s.update(&[0, 1], &[0.2, 0.4, 0.6, 0.8]).unwrap();
        let g = s.update(&[0, 1], &[1.0, 0.0, 0.5, 0.25]).unwrap();
        let q0 = s.q_values(0, None)[0];
        let q1 = s.q_values(1, Some(0))[1];
        let exact = if phi == 0.0 { q0 == 0.0 && q1 == 0.0 } else { q0 == g[0] && q1 == g[1] };
        ok &= exact;
        notes.push(format!("phi {phi} exact: {exact}"));
    }

    // temperature floor
    let mut s = Scheduler::new(&tasks, TaskId::Stack, 360, &SchedulerConfig::default(), None).unwrap();
    let mut reached = None;
    for k in 1..=20_000 {
        s.update(&[5; 8], &[0.0; 360]).unwrap();
        if reached.is_none() && s.temperature() == 0.1 {
            reached = Some(k);
        }
        ok &= s.temperature() >= 0.1;
    }
    let held = s.temperature() == 0.1;
    ok &= held && reached.is_some();
    notes.push(format!("floor 0.1 reached after {reached:?} updates, held: {held}"));

    // all-zero table gives uniform choices
    let mut s = Scheduler::new(&tasks, TaskId::Stack, 360, &SchedulerConfig::default(), None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut counts = [0u64; 6];
    let n = 10_000;
    for _ in 0..n {
        counts[s.choose(0, None, &mut rng).unwrap()] += 1;
    }
    let p = 1.0 / 6.0;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    let max_dev = counts.iter().map(|&c| (c as f64 - n as f64 * p).abs() / sd).fold(0.0, f64::max);
    ok &= max_dev < 3.0;
    notes.push(format!("uniform counts {counts:?}, max deviation {max_dev:.2} sd"));

    let mut main_only = Scheduler::new(
        &tasks,
        TaskId::Stack,
        360,
        &SchedulerConfig {
            variant: SchedulerVariant::MainOnly,
            ..SchedulerConfig::default()
        },
        None,
    )
    .unwrap();
    ok &= (0..8).all(|h| main_only.choose(h, Some(2), &mut rng).unwrap() == 5);

    report(6, ok, notes.join("; "));
}

// ---------------------------------------------------------------- criterion 7

const ALL_TASKS: [TaskId; 9] = [
    TaskId::OpenGripper,
    TaskId::CloseGripper,
    TaskId::Reach,
    TaskId::Lift,
    TaskId::MoveObject,
    TaskId::Bring,
    TaskId::Stack,
    TaskId::UnstackStack,
    TaskId::Insert,
];

/// Rolls the scripted expert out from `start`, judging success from the
/// stored state window rather than the collector's streaming tracker.
fn rollout(cfg: &EnvConfig, task: TaskId, start: &WorldState) -> (Vec<Vec<f64>>, bool) {
    let mut s = start.clone();
    let mut rows = Vec::new();
    let mut states = Vec::new();
    for _ in 0..cfg.episode_len {
        let a = expert_action(cfg, task, &s);
        let mut row = observe(cfg, &s).to_vec();
        row.extend_from_slice(&a.to_array());
        rows.push(row);
        s = step(cfg, &s, a);
        states.push(s.clone());
        if states.len() >= task.hold_steps() && success(cfg, task, &states).unwrap() {
            return (rows, true);
        }
    }
    (rows, false)
}

/// Every stored episode must be the tail of a successful rollout from the
/// collector's reset sequence, in order, with failed rollouts absent.
fn reset_dataset_is_all_successes(cfg: &EnvConfig, ds: &ExpertDataset, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ep in ds.episodes() {
        loop {
            let start = reset(cfg, rng.random(), ds.task().reset_variant());
            let (rows, ok) = rollout(cfg, ds.task(), &start);
            if !ok {
                continue;
            }
            if rows.len() < ep.len() {
                return false;
            }
            let tail = &rows[rows.len() - ep.len()..];
            if !tail.iter().zip(ep.clone()).all(|(r, i)| r.as_slice() == ds.row(i)) {
                return false;
            }
            break;
        }
    }
    true
}

#[test]
fn criterion_07_expert_protocols() {
    let cfg = EnvConfig::default();
    let mut ok = true;
    let mut notes = Vec::new();

    let mut worst = (TaskId::Reach, 100);
    for task in ALL_TASKS {
        let wins = (0..100u64)
            .filter(|&seed| rollout(&cfg, task, &reset(&cfg, seed, task.reset_variant())).1)
            .count();
        if wins < worst.1 {
            worst = (task, wins);
        }
        ok &= wins >= 99;
    }
    notes.push(format!("weakest expert {} at {}/100", worst.0, worst.1));

    let mut all_success = true;
    for task in [TaskId::Reach, TaskId::Lift, TaskId::Stack, TaskId::Insert] {
        let (ds, _) = collect_reset_based(&cfg, task, 900, 13).unwrap();
        all_success &= ds.len() == 900 && reset_dataset_is_all_successes(&cfg, &ds, 13);
    }
    ok &= all_success;
    notes.push(format!("reset-based episodes all successful: {all_success}"));

    let (_, play) = collect_play_based(&cfg, TaskId::Stack, 20_000, 4).unwrap();
    let n: usize = play.task_draws.values().sum();
    let k = play.task_draws.len() as f64;
    let p = 1.0 / k;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    let dev = play
        .task_draws
        .values()
        .map(|&c| (c as f64 - n as f64 * p).abs() / sd)
        .fold(0.0, f64::max);
    ok &= dev < 3.0 && play.task_draws.len() == 6;
    notes.push(format!("play draws over {n} picks: max deviation {dev:.2} sd"));

    let (_, open) = collect_gripper_mixed(&cfg, TaskId::OpenGripper, TaskId::Stack, 900, 2, true).unwrap();
    let (_, close) = collect_gripper_mixed(&cfg, TaskId::CloseGripper, TaskId::Stack, 900, 2, true).unwrap();
    let prefixes = open.prefix_lengths.iter().all(|&l| l == 45)
        && close.prefix_lengths.iter().all(|&l| l == 15)
        && OPEN_PREFIX == 45
        && CLOSE_PREFIX == 15
        && !open.prefix_lengths.is_empty()
        && !close.prefix_lengths.is_empty();
    ok &= prefixes;
    notes.push(format!("gripper prefixes 45/15 exact: {prefixes}"));

    report(7, ok, notes.join("; "));
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_09_round_trips_resume_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();

    let (ds, _) = collect_reset_based(&EnvConfig::default(), TaskId::Stack, 900, 3).unwrap();
    let path = dir.path().join("stack.lfgp");
    save_dataset(&ds, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    let dataset_ok = back.to_bytes() == ds.to_bytes() && std::fs::read(&path).unwrap() == ds.to_bytes();
    notes.push(format!("dataset round trip: {dataset_ok}"));

    let mut cfg = common::small_run(dir.path(), Algorithm::Lfgp, TaskId::Lift, 12_000, 2_000);
    cfg.width = 8;
    cfg.batch_size = 8;
    let mut straight = Trainer::new(&cfg).unwrap();
    straight.run_until(2_000).unwrap();
    let saved = straight.to_bytes();
    let checkpoint_ok = Trainer::from_bytes(&saved).unwrap().to_bytes() == saved;
    notes.push(format!("checkpoint round trip: {checkpoint_ok}"));
    straight.run_until(12_000).unwrap();
    let mut resumed = Trainer::resume(&saved, &cfg).unwrap();
    resumed.run_until(12_000).unwrap();
    let resume_ok = resumed.to_bytes() == straight.to_bytes();
    notes.push(format!("10k-step resume identical: {resume_ok}"));

    let mut short = common::small_run(dir.path(), Algorithm::Lfgp, TaskId::Lift, 2_000, 1_000);
    let csvs: Vec<Vec<u8>> = ["a.csv", "b.csv"]
        .iter()
        .map(|name| {
            let p = dir.path().join(name);
            short.metrics_path = p.display().to_string();
            train(&short).unwrap();
            std::fs::read(p).unwrap()
        })
        .collect();
    let csv_ok = csvs[0] == csvs[1] && !csvs[0].is_empty();
    notes.push(format!("metrics CSV identical: {csv_ok}"));

    report(9, dataset_ok && checkpoint_ok && resume_ok && csv_ok, notes.join("; "));
}

// ---------------------------------------------------------------- heavy runs

fn out_dir() -> PathBuf {
    let d = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance");
    std::fs::create_dir_all(&d).unwrap();
    d
}

// Pinned budgets of the training criteria.
const REACH_BUDGET: u64 = 100_000;
const STACK_BUDGET: u64 = 400_000;
const STACK_TARGET: f64 = 0.7;
const MOVE_BUDGET: u64 = 200_000;
const BRING_BUDGET: u64 = 200_000;
const PAIRS: usize = 900;
const SEEDS: [u64; 3] = [1, 2, 3];

#[derive(Clone, Copy, PartialEq)]
enum Scheme {
    Reset,
    Play,
}

/// Expert data for `main` and its auxiliaries under `group`, collected once.
/// `main_pairs` covers the pooled single-task budgets.
fn datasets(group: &str, main: TaskId, aux: &[TaskId], main_pairs: usize, scheme: Scheme) -> PathBuf {
    let dir = out_dir().join("data").join(group);
    std::fs::create_dir_all(&dir).unwrap();
    let env = EnvConfig::default();
    let have = |t: TaskId, n: usize| {
        load_dataset(&dataset_file(&dir, t)).map(|d| d.len() >= n).unwrap_or(false)
    };
    let mut tasks = aux.to_vec();
    tasks.push(main);
    if scheme == Scheme::Play {
        if tasks.iter().all(|&t| have(t, PAIRS)) {
            return dir;
        }
        // grow the total until every task has its share
        let mut total = PAIRS * tasks.len();
        loop {
            let (sets, _) = collect_play_based(&env, main, total, 5).unwrap();
            if tasks.iter().all(|t| sets.get(t).is_some_and(|d| d.len() >= PAIRS)) {
                for (t, d) in &sets {
                    save_dataset(d, &dataset_file(&dir, *t)).unwrap();
                }
                return dir;
            }
            total += total / 4;
        }
    }
    for &t in &tasks {
        let n = if t == main { main_pairs } else { PAIRS };
        if have(t, n) {
            continue;
        }
        let seed = 100 + t.code() as u64;
        let ds = match t {
            TaskId::OpenGripper | TaskId::CloseGripper => {
                collect_gripper_mixed(&env, t, main, n, seed, true).unwrap().0
            }
            _ => collect_reset_based(&env, t, n, seed).unwrap().0,
        };
        save_dataset(&ds, &dataset_file(&dir, t)).unwrap();
    }
    dir
}

/// Desk-scale settings shared by every training criterion.
fn heavy(main: TaskId, algorithm: Algorithm, seed: u64, total: u64, data: &Path) -> RunConfig {
    RunConfig {
        algorithm,
        main_task: main,
        seed,
        total_interactions: total,
        width: 64,
        batch_size: 64,
        target_entropy: -3.0,
        dataset_dir: data.display().to_string(),
        ..RunConfig::default()
    }
}

type Curve = Vec<(u64, f64)>;

fn read_curve(path: &Path, main: TaskId) -> Option<Curve> {
    let mut r = csv::Reader::from_path(path).ok()?;
    let col = r.headers().ok()?.iter().position(|h| h == format!("success_{main}"))?;
    r.records()
        .map(|rec| {
            let rec = rec.ok()?;
            Some((rec[0].parse().ok()?, rec[col].parse().ok()?))
        })
        .collect()
}

/// Trains `cfg` unless a finished run with the same configuration text (and
/// `key`, for runs that depend on another run) is already on disk.
fn cached_run(name: &str, mut cfg: RunConfig, key: &str) -> Curve {
    let runs = out_dir().join("runs");
    std::fs::create_dir_all(&runs).unwrap();
    let csv = runs.join(format!("{name}.csv"));
    let stamp = runs.join(format!("{name}.cfg"));
    cfg.metrics_path = csv.display().to_string();
    let text = format!("{}{key}", cfg.to_text());
    if std::fs::read_to_string(&stamp).ok().as_deref() == Some(text.as_str()) {
        if let Some(c) = read_curve(&csv, cfg.main_task) {
            return c;
        }
    }
    let _ = std::fs::remove_file(&stamp);
    let start = std::time::Instant::now();
    train(&cfg).unwrap();
    std::fs::write(&stamp, &text).unwrap();
    let c = read_curve(&csv, cfg.main_task).unwrap();
    let _ = writeln!(
        std::io::stderr(),
        "  run {name}: best {:.2}, last {:.2}, {:.0} min",
        best(&c),
        c.last().map_or(0.0, |p| p.1),
        start.elapsed().as_secs_f64() / 60.0
    );
    c
}

fn mean_curve(curves: &[Curve]) -> Curve {
    let n = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..n)
        .map(|i| {
            let step = curves[0][i].0;
            assert!(curves.iter().all(|c| c[i].0 == step), "misaligned curves");
            (step, curves.iter().map(|c| c[i].1).sum::<f64>() / curves.len() as f64)
        })
        .collect()
}

fn best(c: &Curve) -> f64 {
    c.iter().map(|p| p.1).fold(0.0, f64::max)
}

/// Mean of the last three evaluation points.
fn late(c: &Curve) -> f64 {
    let tail = &c[c.len().saturating_sub(3)..];
    tail.iter().map(|p| p.1).sum::<f64>() / tail.len().max(1) as f64
}

fn first_at(c: &Curve, level: f64) -> Option<u64> {
    c.iter().find(|p| p.1 >= level).map(|p| p.0)
}

/// One CSV with a step column and one column per named curve.
fn write_curves(file: &str, named: &[(&str, &Curve)]) {
    let path = out_dir().join(file);
    let mut w = csv::Writer::from_path(&path).unwrap();
    let mut head = vec!["step".to_string()];
    head.extend(named.iter().map(|(n, _)| n.to_string()));
    w.write_record(&head).unwrap();
    let rows = named.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for i in 0..rows {
        let step = named.iter().find_map(|(_, c)| c.get(i).map(|p| p.0)).unwrap();
        let mut rec = vec![step.to_string()];
        for (_, c) in named {
            // single-row curves (cloning) are held flat
            let v = c.get(i).or(c.last()).map_or(f64::NAN, |p| p.1);
            rec.push(format!("{v}"));
        }
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
}

fn seed_runs(prefix: &str, make: impl Fn(u64) -> RunConfig) -> Vec<Curve> {
    SEEDS.iter().map(|&s| cached_run(&format!("{prefix}-s{s}"), make(s), "")).collect()
}

fn stack_reset_data() -> PathBuf {
    let aux = TaskId::Stack.default_auxiliaries();
    datasets("stack-reset", TaskId::Stack, &aux, PAIRS * (aux.len() + 1), Scheme::Reset)
}

fn lfgp_stack() -> Vec<Curve> {
    let data = stack_reset_data();
    seed_runs("stack-lfgp", |s| heavy(TaskId::Stack, Algorithm::Lfgp, s, STACK_BUDGET, &data))
}

#[test]
#[ignore]
fn criterion_03_single_task_reach() {
    let data = datasets("reach", TaskId::Reach, &[], PAIRS, Scheme::Reset);
    let curves = seed_runs("reach", |s| {
        let mut cfg = heavy(TaskId::Reach, Algorithm::Lfgp, s, REACH_BUDGET, &data);
        cfg.auxiliary_tasks = Auxiliaries::List(vec![]);
        cfg
    });
    let mean = mean_curve(&curves);
    write_curves("criterion03_reach.csv", &[("s1", &curves[0]), ("s2", &curves[1]), ("s3", &curves[2]), ("mean", &mean)]);
    let b = best(&mean);
    report(
        3,
        b >= 0.9,
        format!("Reach, {PAIRS} pairs, {REACH_BUDGET} steps: best 3-seed mean success {b:.3} (needs >= 0.9)"),
    );
}

#[test]
#[ignore]
fn criterion_04_lfgp_stack() {
    let curves = lfgp_stack();
    let mean = mean_curve(&curves);
    write_curves("criterion04_stack_lfgp.csv", &[("s1", &curves[0]), ("s2", &curves[1]), ("s3", &curves[2]), ("mean", &mean)]);
    let b = best(&mean);
    report(
        4,
        b >= STACK_TARGET,
        format!("LfGP Stack, {PAIRS} pairs/task, {STACK_BUDGET} steps: best 3-seed mean {b:.3} (needs >= {STACK_TARGET})"),
    );
}

#[test]
#[ignore]
fn criterion_05_baselines_below_lfgp() {
    let data = stack_reset_data();
    let lfgp = mean_curve(&lfgp_stack());
    let dac = mean_curve(&seed_runs("stack-dac", |s| heavy(TaskId::Stack, Algorithm::Dac, s, STACK_BUDGET, &data)));
    let ns = mean_curve(&seed_runs("stack-lfgp-ns", |s| heavy(TaskId::Stack, Algorithm::LfgpNs, s, STACK_BUDGET, &data)));
    let bc = mean_curve(&seed_runs("stack-multi-bc", |s| heavy(TaskId::Stack, Algorithm::MultiBc, s, STACK_BUDGET, &data)));
    write_curves(
        "criterion05_stack_baselines.csv",
        &[("lfgp", &lfgp), ("dac", &dac), ("lfgp-ns", &ns), ("multi-bc", &bc)],
    );
    let (l, d, n, b) = (late(&lfgp), late(&dac), late(&ns), late(&bc));
    report(
        5,
        d < l && n < l && b < l,
        format!("late Stack success (3-seed means, last 3 evals): lfgp {l:.3}, dac {d:.3}, lfgp-ns {n:.3}, multi-bc {b:.3}"),
    );
}

#[test]
#[ignore]
fn criterion_08_transfer_beats_scratch() {
    let aux = TaskId::Bring.default_auxiliaries();
    let data = datasets("bring", TaskId::Bring, &aux, PAIRS, Scheme::Reset);
    let ckpts = out_dir().join("runs");
    std::fs::create_dir_all(&ckpts).unwrap();
    let mut transferred = Vec::new();
    for s in SEEDS {
        let src_path = ckpts.join(format!("move-s{s}.ckpt"));
        let mut src = heavy(TaskId::MoveObject, Algorithm::Lfgp, s, MOVE_BUDGET, &data);
        src.checkpoint_path = src_path.display().to_string();
        let fresh = !src_path.exists();
        if fresh {
            let _ = std::fs::remove_file(ckpts.join(format!("move-s{s}.cfg")));
        }
        cached_run(&format!("move-s{s}"), src.clone(), "");
        let out = ckpts.join(format!("bring-from-move-s{s}.ckpt"));
        let mut cfg = transfer_checkpoint(&src_path, TaskId::Bring, &out).unwrap();
        cfg.total_interactions = BRING_BUDGET;
        transferred.push(cached_run(&format!("bring-transfer-s{s}"), cfg, &src.to_text()));
    }
    let scratch = seed_runs("bring-scratch", |s| heavy(TaskId::Bring, Algorithm::Lfgp, s, BRING_BUDGET, &data));
    let (t, sc) = (mean_curve(&transferred), mean_curve(&scratch));
    write_curves("criterion08_bring_transfer.csv", &[("transfer", &t), ("scratch", &sc)]);
    let (ft, fs) = (first_at(&t, 0.5), first_at(&sc, 0.5));
    let pass = match (ft, fs) {
        (Some(a), Some(b)) => a <= b,
        (Some(_), None) => true,
        _ => false,
    };
    let show = |f: Option<u64>| f.map_or("never".to_string(), |v| v.to_string());
    report(
        8,
        pass,
        format!("Bring reaches 50% (3-seed mean) at step {} with transfer vs {} from scratch", show(ft), show(fs)),
    );
}

#[test]
#[ignore]
fn criterion_10_play_and_reset_data_both_train() {
    let aux = TaskId::Stack.default_auxiliaries();
    let play = datasets("stack-play", TaskId::Stack, &aux, PAIRS, Scheme::Play);
    let reset = mean_curve(&lfgp_stack());
    let played = mean_curve(&seed_runs("stack-play", |s| heavy(TaskId::Stack, Algorithm::Lfgp, s, STACK_BUDGET, &play)));
    write_curves("criterion10_play_vs_reset.csv", &[("reset", &reset), ("play", &played)]);
    let rows = (STACK_BUDGET / RunConfig::default().eval_interval + 1) as usize;
    report(
        10,
        reset.len() == rows && played.len() == rows,
        format!(
            "Stack LfGP, {rows} evaluation points each: best mean reset {:.3}, play {:.3}; late reset {:.3}, play {:.3}",
            best(&reset),
            best(&played),
            late(&reset),
            late(&played)
        ),
    );
}
