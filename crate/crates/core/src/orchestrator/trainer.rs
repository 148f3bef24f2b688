//! The interaction loop: slot-wise task selection, one environment step,
//! then discriminator, critic, actor and temperature updates.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{bc_train, make_variant, BcConfig, BcModel, Learner, VariantPlan};
use crate::data::{load_dataset, Decoder, Encoder, ExpertDataset, ReplayBuffer};
use crate::discriminator::{DiscriminatorBank, DiscriminatorConfig};
use crate::env::{
    observe, reset, step, Block, EnvAction, EnvConfig, TaskId, WorldState, ACT_DIM, OBS_DIM,
};
use crate::error::{Error, Result};
use crate::intention::{ActMode, IntentionConfig, IntentionModel};
use crate::orchestrator::config::{Algorithm, RunConfig};
use crate::orchestrator::evaluate::{evaluate, evaluate_intention};
use crate::orchestrator::metrics::{write_csv, MetricsRow};
use crate::record::{get_rng, put_rng};
use crate::scheduler::{Scheduler, WeightTable};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LFGK";
pub const CHECKPOINT_VERSION: u32 = 2;

const KIND_ADVERSARIAL: u8 = 0;
const KIND_CLONING: u8 = 1;

/// Independent random streams, all derived from the run seed.
#[derive(Debug, Clone, PartialEq)]
struct Streams {
    env: ChaCha8Rng,
    action: ChaCha8Rng,
    sample: ChaCha8Rng,
    scheduler: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self {
            env: stream(1),
            action: stream(2),
            sample: stream(3),
            scheduler: stream(4),
        }
    }
}

/// Loss sums since the last evaluation point.
#[derive(Debug, Clone, PartialEq, Default)]
struct Accumulator {
    updates: u64,
    discriminator: Vec<f64>,
    policy: f64,
    q: f64,
}

impl Accumulator {
    fn new(tasks: usize) -> Self {
        Self {
            discriminator: vec![0.0; tasks],
            ..Self::default()
        }
    }

    fn mean(&self, sum: f64) -> f64 {
        if self.updates == 0 {
            f64::NAN
        } else {
            sum / self.updates as f64
        }
    }
}

fn derived_seed(seed: u64, salt: u64) -> u64 {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15)).random()
}

/// Loads every task's dataset, keeping its first `pairs` pairs.
pub fn load_expert_data(cfg: &RunConfig, tasks: &[TaskId], pairs: usize) -> Result<Vec<ExpertDataset>> {
    tasks
        .iter()
        .map(|&t| {
            let path = cfg.dataset_path(t);
            let mut ds = load_dataset(&path)?;
            if ds.task() != t {
                return Err(Error::Config(format!("{} holds {} data, expected {t}", path.display(), ds.task())));
            }
            if ds.obs_dim() != OBS_DIM || ds.act_dim() != ACT_DIM {
                return Err(Error::Shape(format!(
                    "{}: dataset dims ({}, {}) differ from environment ({OBS_DIM}, {ACT_DIM})",
                    path.display(),
                    ds.obs_dim(),
                    ds.act_dim()
                )));
            }
            if ds.len() < pairs {
                return Err(Error::Config(format!(
                    "{} has {} pairs, the budget needs {pairs}",
                    path.display(),
                    ds.len()
                )));
            }
            ds.truncate(pairs);
            Ok(ds)
        })
        .collect()
}

/// Adversarial training state; everything needed to continue bit-exactly.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: RunConfig,
    plan: VariantPlan,
    env: EnvConfig,
    experts: Vec<ExpertDataset>,
    model: IntentionModel<f64>,
    bank: DiscriminatorBank<f64>,
    scheduler: Scheduler,
    buffer: ReplayBuffer,
    world: WorldState,
    current: usize,
    chosen: Vec<usize>,
    episode_rows: Vec<f64>,
    interactions: u64,
    streams: Streams,
    acc: Accumulator,
    rows: Vec<MetricsRow>,
}

fn intention_config(cfg: &RunConfig) -> IntentionConfig {
    IntentionConfig {
        width: cfg.width,
        policy_lr: cfg.policy_lr,
        q_lr: cfg.q_lr,
        alpha_lr: cfg.alpha_lr,
        initial_alpha: cfg.initial_alpha,
        target_entropy: cfg.target_entropy,
        gamma: cfg.gamma,
        polyak: cfg.polyak,
        max_grad_norm: cfg.max_grad_norm,
    }
}

fn discriminator_config(cfg: &RunConfig) -> DiscriminatorConfig {
    DiscriminatorConfig {
        width: cfg.width,
        lr: cfg.discriminator_lr,
        lambda_gp: cfg.lambda_gp,
        max_grad_norm: cfg.max_grad_norm,
        input_scale: cfg.discriminator_input_scale,
    }
}

fn build_scheduler(cfg: &RunConfig, plan: &VariantPlan) -> Result<Scheduler> {
    let Learner::Adversarial { scheduler } = plan.learner else {
        return Err(Error::Config(format!("{} does not use a scheduler", plan.algorithm)));
    };
    let weights = if cfg.scheduler_weights.is_empty() {
        None
    } else {
        let p = Path::new(&cfg.scheduler_weights);
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Some(WeightTable::parse(&text, &plan.tasks)?)
    };
    Scheduler::new(
        &plan.tasks,
        plan.main_task,
        cfg.env_episode_len,
        &cfg.scheduler_config(scheduler),
        weights,
    )
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let plan = make_variant(cfg)?;
        if !matches!(plan.learner, Learner::Adversarial { .. }) {
            return Err(Error::Config(format!("{} is trained by behavioural cloning", cfg.algorithm)));
        }
        let experts = load_expert_data(cfg, &plan.tasks, plan.pairs_per_task)?;
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = IntentionModel::new(&plan.tasks, OBS_DIM, ACT_DIM, &intention_config(cfg), &mut init)?;
        let bank = DiscriminatorBank::new(&plan.tasks, OBS_DIM + ACT_DIM, &discriminator_config(cfg), &mut init)?;
        let scheduler = build_scheduler(cfg, &plan)?;
        let env = cfg.env();
        let mut streams = Streams::new(cfg.seed);
        let world = reset(&env, streams.env.random(), plan.main_task.reset_variant());
        let mut t = Self {
            acc: Accumulator::new(plan.tasks.len()),
            buffer: ReplayBuffer::new(OBS_DIM, ACT_DIM, cfg.buffer_capacity)?,
            cfg: cfg.clone(),
            env,
            experts,
            model,
            bank,
            scheduler,
            world,
            current: plan.main_index(),
            chosen: Vec::new(),
            episode_rows: Vec::new(),
            interactions: 0,
            streams,
            rows: Vec::new(),
            plan,
        };
        t.record_row()?;
        Ok(t)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &VariantPlan {
        &self.plan
    }

    pub fn model(&self) -> &IntentionModel<f64> {
        &self.model
    }

    pub fn bank(&self) -> &DiscriminatorBank<f64> {
        &self.bank
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn interactions(&self) -> u64 {
        self.interactions
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    /// One environment interaction plus, once warm, one round of updates.
    pub fn step(&mut self) -> Result<()> {
        let xi = self.scheduler.xi();
        if self.world.t % xi == 0 {
            let prev = self.chosen.last().copied();
            self.current = self
                .scheduler
                .choose(self.world.t / xi, prev, &mut self.streams.scheduler)?;
            self.chosen.push(self.current);
        }
        let obs = observe(&self.env, &self.world);
        let action: Vec<f64> = if self.interactions < self.cfg.initial_exploration {
            (0..ACT_DIM)
                .map(|_| self.streams.action.random_range(-1.0..=1.0))
                .collect()
        } else {
            self.model.act(
                self.plan.tasks[self.current],
                &obs,
                ActMode::Stochastic,
                &mut self.streams.action,
            )?
        };
        let next = step(&self.env, &self.world, EnvAction::from_slice(&action));
        let boundary = next.t >= self.env.episode_len;
        self.buffer.push_parts(&obs, &action, &observe(&self.env, &next), boundary)?;
        self.episode_rows.extend_from_slice(&obs);
        self.episode_rows.extend_from_slice(&action);
        self.world = next;
        self.interactions += 1;
        if self.buffer.len() >= self.cfg.buffer_warmup.max(1) {
            self.update()?;
        }
        if boundary {
            self.end_episode()?;
        }
        if self.interactions % self.cfg.eval_interval == 0 {
            self.record_row()?;
        }
        Ok(())
    }

    fn update(&mut self) -> Result<()> {
        let n = self.cfg.batch_size;
        let batch = self.buffer.sample_non_boundary(n, &mut self.streams.sample)?;
        let policy_rows = batch.state_actions();
        let expert = self
            .experts
            .iter()
            .map(|ds| ds.sample_batch(n, &mut self.streams.sample))
            .collect::<Result<Vec<_>>>()?;
        let dl = self.bank.train_step(&policy_rows, &expert, &mut self.streams.sample)?;
        let rewards = self.bank.rewards(&policy_rows)?;
        let ql = self.model.q_update(&batch, &rewards, &mut self.streams.sample)?;
        let pl = self.model.policy_update(&batch.states, &mut self.streams.sample)?;
        self.model.alpha_update(&pl.log_prob)?;
        let q: f64 = ql.per_task.iter().sum();
        let p: f64 = pl.per_task.iter().sum();
        for (what, v) in [("discriminator loss", dl.total), ("critic loss", q), ("actor loss", p)] {
            if !v.is_finite() {
                return Err(self.abort(what));
            }
        }
        self.acc.updates += 1;
        for (a, b) in self.acc.discriminator.iter_mut().zip(&dl.bce) {
            *a += b;
        }
        self.acc.q += q;
        self.acc.policy += p;
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        let rewards = self.bank.rewards(&self.episode_rows)?;
        let main = self.plan.main_index();
        let trace: Vec<f64> = (0..rewards.rows()).map(|i| rewards.row(i)[main]).collect();
        self.scheduler.update(&self.chosen, &trace)?;
        self.chosen.clear();
        self.episode_rows.clear();
        self.world = reset(&self.env, self.streams.env.random(), self.plan.main_task.reset_variant());
        Ok(())
    }

    /// Writes a diagnostic checkpoint and builds the error to return.
    fn abort(&self, what: &str) -> Error {
        let path = if self.cfg.checkpoint_path.is_empty() {
            std::env::temp_dir().join(format!("lfgp-nan-seed{}.ckpt", self.cfg.seed))
        } else {
            PathBuf::from(format!("{}.nan-dump", self.cfg.checkpoint_path))
        };
        let dump = std::fs::write(&path, self.to_bytes()).ok().map(|_| path);
        Error::NonFinite {
            step: self.interactions,
            what: what.into(),
            dump,
        }
    }

    fn record_row(&mut self) -> Result<()> {
        if !self.model.is_finite() {
            return Err(self.abort("intention parameters"));
        }
        let eval_seed = derived_seed(self.cfg.seed, self.interactions.wrapping_add(1));
        let variant = self.plan.main_task.reset_variant();
        let success = self
            .plan
            .tasks
            .iter()
            .map(|&t| {
                evaluate_intention(&self.model, &self.env, t, variant, self.cfg.eval_episodes, eval_seed)
                    .map(|r| r.rate())
            })
            .collect::<Result<Vec<_>>>()?;
        let acc = std::mem::replace(&mut self.acc, Accumulator::new(self.plan.tasks.len()));
        self.rows.push(MetricsRow {
            step: self.interactions,
            success,
            discriminator_loss: acc.discriminator.iter().map(|&s| acc.mean(s)).collect(),
            policy_loss: acc.mean(acc.policy),
            q_loss: acc.mean(acc.q),
            alpha: self.model.alphas(),
            temperature: self.scheduler.temperature(),
            selections: self.scheduler.selections().to_vec(),
        });
        Ok(())
    }

    /// Steps until the interaction count reaches `target`.
    pub fn run_until(&mut self, target: u64) -> Result<()> {
        while self.interactions < target {
            self.step()?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_until(self.cfg.total_interactions)
    }

    pub fn success_rate(&self, task: TaskId, episodes: usize, seed: u64) -> Result<f64> {
        Ok(evaluate_intention(&self.model, &self.env, task, self.plan.main_task.reset_variant(), episodes, seed)?.rate())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = header(KIND_ADVERSARIAL, &self.cfg);
        e.u64(self.interactions);
        self.model.encode(&mut e);
        self.bank.encode(&mut e);
        self.scheduler.encode(&mut e);
        self.buffer.encode(&mut e);
        put_world(&mut e, &self.world);
        e.u64(self.current as u64);
        e.u32(self.chosen.len() as u32);
        for &c in &self.chosen {
            e.u64(c as u64);
        }
        e.f64s(&self.episode_rows);
        for r in [&self.streams.env, &self.streams.action, &self.streams.sample, &self.streams.scheduler] {
            put_rng(&mut e, r);
        }
        e.u64(self.acc.updates);
        e.f64s(&self.acc.discriminator);
        e.f64(self.acc.policy);
        e.f64(self.acc.q);
        e.u32(self.rows.len() as u32);
        for r in &self.rows {
            r.encode(&mut e);
        }
        e.into_bytes()
    }

    fn decode_body(cfg: RunConfig, d: &mut Decoder<'_>) -> Result<Self> {
        let plan = make_variant(&cfg)?;
        let interactions = d.u64()?;
        let model = IntentionModel::decode(d)?;
        let bank = DiscriminatorBank::decode(d)?;
        let scheduler = Scheduler::decode(d)?;
        let buffer = ReplayBuffer::decode(d)?;
        let world = get_world(d)?;
        let current = d.u64()? as usize;
        let n = d.u32()?;
        let chosen = (0..n).map(|_| d.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let episode_rows = d.f64s()?;
        let streams = Streams {
            env: get_rng(d)?,
            action: get_rng(d)?,
            sample: get_rng(d)?,
            scheduler: get_rng(d)?,
        };
        let acc = Accumulator {
            updates: d.u64()?,
            discriminator: d.f64s()?,
            policy: d.f64()?,
            q: d.f64()?,
        };
        let n = d.u32()?;
        let rows = (0..n).map(|_| MetricsRow::decode(d)).collect::<Result<Vec<_>>>()?;
        if model.tasks() != plan.tasks || bank.tasks() != plan.tasks || scheduler.tasks() != plan.tasks {
            return Err(d.error("checkpoint task heads do not match its configuration"));
        }
        let experts = load_expert_data(&cfg, &plan.tasks, plan.pairs_per_task)?;
        let t = Self {
            env: cfg.env(),
            cfg,
            plan,
            experts,
            model,
            bank,
            scheduler,
            buffer,
            world,
            current,
            chosen,
            episode_rows,
            interactions,
            streams,
            acc,
            rows,
        };
        t.check_dims()?;
        Ok(t)
    }

    /// Rejects networks or buffers whose widths differ from the environment.
    fn check_dims(&self) -> Result<()> {
        let found = [
            self.model.obs_dim(),
            self.model.act_dim(),
            self.bank.in_dim(),
            self.buffer.obs_dim(),
            self.buffer.act_dim(),
        ];
        let want = [OBS_DIM, ACT_DIM, OBS_DIM + ACT_DIM, OBS_DIM, ACT_DIM];
        if found != want {
            return Err(Error::Shape(format!(
                "checkpoint widths (obs, act, disc, buffer obs, buffer act) = {found:?}, environment needs {want:?}"
            )));
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match Checkpoint::from_bytes(bytes)? {
            Checkpoint::Adversarial(t) => Ok(*t),
            Checkpoint::Cloning { .. } => Err(Error::Config("checkpoint holds a cloning model".into())),
        }
    }

    /// Continues a saved run under `cfg`. Only budget, cadence and output
    /// settings may differ from the saved configuration.
    pub fn resume(bytes: &[u8], cfg: &RunConfig) -> Result<Self> {
        let mut t = Self::from_bytes(bytes)?;
        let mut saved = t.cfg.clone();
        saved.total_interactions = cfg.total_interactions;
        saved.metrics_path = cfg.metrics_path.clone();
        saved.checkpoint_path = cfg.checkpoint_path.clone();
        saved.init_checkpoint = cfg.init_checkpoint.clone();
        if &saved != cfg {
            let diff: Vec<_> = saved
                .entries()
                .into_iter()
                .zip(cfg.entries())
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.0)
                .collect();
            return Err(Error::Config(format!("config differs from checkpoint in {diff:?}")));
        }
        t.cfg = cfg.clone();
        Ok(t)
    }

    /// Adds heads for `new_main` and makes it the main task. Parameters,
    /// optimiser state, buffer and random streams carry over; the scheduler,
    /// counters and metrics start fresh.
    pub fn transfer(mut self, new_main: TaskId) -> Result<Self> {
        self.check_dims()?;
        if !matches!(self.plan.algorithm, Algorithm::Lfgp | Algorithm::LfgpNs) {
            return Err(Error::Config(format!("{} models have a single head and cannot transfer", self.plan.algorithm)));
        }
        let old = self.plan.tasks.clone();
        if old.contains(&new_main) {
            return Err(Error::Config(format!("{new_main} already has heads in this checkpoint")));
        }
        let allowed = new_main.default_auxiliaries();
        if let Some(t) = old.iter().find(|t| !allowed.contains(t)) {
            return Err(Error::Config(format!("{t} is not an auxiliary of {new_main}")));
        }
        let mut cfg = self.cfg.clone();
        cfg.main_task = new_main;
        cfg.auxiliary_tasks = crate::orchestrator::Auxiliaries::List(old);
        cfg.init_checkpoint.clear();
        let plan = make_variant(&cfg)?;
        let mut init = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, new_main.code() as u64 + 1000));
        self.model.add_task(new_main, cfg.initial_alpha, &mut init)?;
        self.bank.add_task(new_main, &mut init)?;
        self.scheduler = build_scheduler(&cfg, &plan)?;
        self.experts = load_expert_data(&cfg, &plan.tasks, plan.pairs_per_task)?;
        self.env = cfg.env();
        self.world = reset(&self.env, self.streams.env.random(), new_main.reset_variant());
        self.current = plan.main_index();
        self.chosen.clear();
        self.episode_rows.clear();
        self.interactions = 0;
        self.acc = Accumulator::new(plan.tasks.len());
        self.rows.clear();
        self.cfg = cfg;
        self.plan = plan;
        self.record_row()?;
        Ok(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn header(kind: u8, cfg: &RunConfig) -> Encoder {
    let mut e = Encoder::new();
    e.raw(CHECKPOINT_MAGIC);
    e.u32(CHECKPOINT_VERSION);
    e.u8(kind);
    e.str(&cfg.to_text());
    e
}

fn put_pair(e: &mut Encoder, v: [f64; 2]) {
    e.f64(v[0]);
    e.f64(v[1]);
}

fn get_pair(d: &mut Decoder<'_>) -> Result<[f64; 2]> {
    Ok([d.f64()?, d.f64()?])
}

fn put_world(e: &mut Encoder, s: &WorldState) {
    put_pair(e, s.gripper);
    put_pair(e, s.gripper_vel);
    e.f64(s.aperture);
    put_pair(e, s.aperture_history);
    for b in &s.blocks {
        put_pair(e, b.pos);
        put_pair(e, b.vel);
        e.f64(b.accel);
        e.bool(b.held);
    }
    put_pair(e, s.grasp_offset);
    e.f64(s.last_grip);
    e.u64(s.t as u64);
}

fn get_world(d: &mut Decoder<'_>) -> Result<WorldState> {
    let gripper = get_pair(d)?;
    let gripper_vel = get_pair(d)?;
    let aperture = d.f64()?;
    let aperture_history = get_pair(d)?;
    let mut block = || -> Result<Block> {
        Ok(Block {
            pos: get_pair(d)?,
            vel: get_pair(d)?,
            accel: d.f64()?,
            held: d.bool()?,
        })
    };
    let blocks = [block()?, block()?];
    Ok(WorldState {
        gripper,
        gripper_vel,
        aperture,
        aperture_history,
        blocks,
        grasp_offset: get_pair(d)?,
        last_grip: d.f64()?,
        t: d.u64()? as usize,
    })
}

/// Any saved model: a full adversarial run or a cloning policy.
#[derive(Debug, Clone)]
pub enum Checkpoint {
    Adversarial(Box<Trainer>),
    Cloning { cfg: RunConfig, model: BcModel<f64> },
}

impl Checkpoint {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes);
        let magic = d.raw(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {magic:?}, expected \"LFGK\""),
            });
        }
        let version = d.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let kind = d.u8()?;
        let cfg = RunConfig::parse(&d.str()?)?;
        let out = match kind {
            KIND_ADVERSARIAL => Checkpoint::Adversarial(Box::new(Trainer::decode_body(cfg, &mut d)?)),
            KIND_CLONING => Checkpoint::Cloning {
                cfg,
                model: BcModel::decode(&mut d)?,
            },
            k => return Err(d.error(format!("unknown checkpoint kind {k}"))),
        };
        d.finish()?;
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn config(&self) -> &RunConfig {
        match self {
            Checkpoint::Adversarial(t) => &t.cfg,
            Checkpoint::Cloning { cfg, .. } => cfg,
        }
    }

    /// Mean-action success rate of `task` over `episodes` seeded episodes.
    pub fn evaluate(&self, task: TaskId, episodes: usize, seed: u64) -> Result<f64> {
        let cfg = self.config();
        let env = cfg.env();
        let variant = cfg.main_task.reset_variant();
        match self {
            Checkpoint::Adversarial(t) => {
                Ok(evaluate_intention(&t.model, &env, task, variant, episodes, seed)?.rate())
            }
            Checkpoint::Cloning { model, .. } => {
                model.act(task, &[0.0; OBS_DIM]).map(|_| ())?;
                Ok(evaluate(&env, task, variant, episodes, seed, |s| {
                    Ok(EnvAction::from_slice(&model.act(task, &observe(&env, s))?))
                })?
                .rate())
            }
        }
    }
}

pub fn save_cloning(path: &Path, cfg: &RunConfig, model: &BcModel<f64>) -> Result<()> {
    let mut e = header(KIND_CLONING, cfg);
    model.encode(&mut e);
    std::fs::write(path, e.into_bytes()).map_err(|e| Error::io(path, e))
}

/// Result of a full `train` invocation.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub tasks: Vec<TaskId>,
    pub rows: Vec<MetricsRow>,
}

impl TrainOutcome {
    pub fn final_success(&self, task: TaskId) -> Option<f64> {
        let i = self.tasks.iter().position(|&t| t == task)?;
        self.rows.last().map(|r| r.success[i])
    }
}

fn train_cloning(cfg: &RunConfig, plan: &VariantPlan, pairs: usize) -> Result<(BcModel<f64>, MetricsRow)> {
    let data = load_expert_data(cfg, &plan.tasks, pairs)?;
    let bc = BcConfig {
        width: cfg.width,
        lr: cfg.bc_lr,
        batch_size: cfg.bc_batch_size,
        patience: cfg.bc_patience,
        max_epochs: cfg.bc_max_epochs,
        ..BcConfig::default()
    };
    let refs: Vec<&ExpertDataset> = data.iter().collect();
    let (model, report) = bc_train::<f64>(&refs, &bc, cfg.seed)?;
    let env = cfg.env();
    let variant = plan.main_task.reset_variant();
    let seed = derived_seed(cfg.seed, 1);
    let success = plan
        .tasks
        .iter()
        .map(|&t| {
            evaluate(&env, t, variant, cfg.eval_episodes, seed, |s| {
                Ok(EnvAction::from_slice(&model.act(t, &observe(&env, s))?))
            })
            .map(|r| r.rate())
        })
        .collect::<Result<Vec<_>>>()?;
    let n = plan.tasks.len();
    let row = MetricsRow {
        step: 0,
        success,
        discriminator_loss: vec![f64::NAN; n],
        policy_loss: report.best_val_mse,
        q_loss: f64::NAN,
        alpha: vec![f64::NAN; n],
        temperature: f64::NAN,
        selections: vec![0; n],
    };
    Ok((model, row))
}

/// Runs a configuration to completion, writing metrics and the final
/// checkpoint when their paths are set. Cloning variants report a single row.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let plan = make_variant(cfg)?;
    let outcome = match plan.learner {
        Learner::Cloning => {
            let (model, row) = train_cloning(cfg, &plan, plan.pairs_per_task)?;
            if !cfg.checkpoint_path.is_empty() {
                save_cloning(Path::new(&cfg.checkpoint_path), cfg, &model)?;
            }
            TrainOutcome {
                tasks: plan.tasks.clone(),
                rows: vec![row],
            }
        }
        Learner::Adversarial { .. } => {
            let mut t = if cfg.init_checkpoint.is_empty() {
                Trainer::new(cfg)?
            } else {
                let p = Path::new(&cfg.init_checkpoint);
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                Trainer::resume(&bytes, cfg)?
            };
            // metrics are rewritten at every evaluation point so long runs can be watched
            let total = t.cfg.total_interactions;
            let every = t.cfg.eval_interval;
            while t.interactions < total {
                t.run_until(total.min((t.interactions / every + 1) * every))?;
                if !cfg.metrics_path.is_empty() {
                    write_csv(Path::new(&cfg.metrics_path), &t.plan.tasks, &t.rows)?;
                }
            }
            if !cfg.checkpoint_path.is_empty() {
                t.save(Path::new(&cfg.checkpoint_path))?;
            }
            TrainOutcome {
                tasks: t.plan.tasks.clone(),
                rows: t.rows.clone(),
            }
        }
    };
    if !cfg.metrics_path.is_empty() {
        write_csv(Path::new(&cfg.metrics_path), &outcome.tasks, &outcome.rows)?;
    }
    Ok(outcome)
}

/// Loads an adversarial checkpoint, adds `new_main`, and writes the new
/// checkpoint to `out` plus a ready-to-train config to `out` + `.cfg`.
pub fn transfer_checkpoint(from: &Path, new_main: TaskId, out: &Path) -> Result<RunConfig> {
    let bytes = std::fs::read(from).map_err(|e| Error::io(from, e))?;
    let t = Trainer::from_bytes(&bytes)?.transfer(new_main)?;
    t.save(out)?;
    let mut cfg = t.cfg.clone();
    cfg.init_checkpoint = out.display().to_string();
    let cfg_path = PathBuf::from(format!("{}.cfg", out.display()));
    std::fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(cfg)
}
