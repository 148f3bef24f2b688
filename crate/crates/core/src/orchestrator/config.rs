//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::env::{format_task_list, parse_task_list, EnvConfig, TaskId};
use crate::error::{Error, Result};
use crate::scheduler::{SchedulerConfig, SchedulerVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Lfgp,
    LfgpNs,
    Dac,
    Bc,
    BcLess,
    MultiBc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Lfgp,
        Algorithm::LfgpNs,
        Algorithm::Dac,
        Algorithm::Bc,
        Algorithm::BcLess,
        Algorithm::MultiBc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lfgp => "lfgp",
            Algorithm::LfgpNs => "lfgp-ns",
            Algorithm::Dac => "dac",
            Algorithm::Bc => "bc",
            Algorithm::BcLess => "bc-less",
            Algorithm::MultiBc => "multi-bc",
        }
    }

    pub fn is_bc(self) -> bool {
        matches!(self, Algorithm::Bc | Algorithm::BcLess | Algorithm::MultiBc)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// The main task's standard auxiliaries, or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Auxiliaries {
    Default,
    List(Vec<TaskId>),
}

impl Auxiliaries {
    pub fn resolve(&self, main: TaskId) -> Vec<TaskId> {
        match self {
            Auxiliaries::Default => main.default_auxiliaries(),
            Auxiliaries::List(l) => l.clone(),
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self> {
                s.parse().map_err(|_| Error::Config(format!("cannot parse {s:?} as {}", stringify!($t))))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(u64, usize, f64);

macro_rules! named_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self> {
                s.parse()
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

named_value!(TaskId, Algorithm, SchedulerVariant);

impl ConfigValue for String {
    fn parse_value(s: &str) -> Result<Self> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl ConfigValue for Option<f64> {
    fn parse_value(s: &str) -> Result<Self> {
        if s == "none" {
            Ok(None)
        } else {
            f64::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "none".into(), |v| v.to_string())
    }
}

impl ConfigValue for Auxiliaries {
    fn parse_value(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Auxiliaries::Default),
            "none" => Ok(Auxiliaries::List(Vec::new())),
            list => parse_task_list(list).map(Auxiliaries::List),
        }
    }
    fn render(&self) -> String {
        match self {
            Auxiliaries::Default => "default".into(),
            Auxiliaries::List(l) if l.is_empty() => "none".into(),
            Auxiliaries::List(l) => format_task_list(l),
        }
    }
}

macro_rules! run_config {
    ($( $(#[$doc:meta])* $key:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Every setting of a run. Serialised verbatim into checkpoints.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $( $(#[$doc])* pub $key: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $key: $default, )* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            /// Sets one field from its text form; unknown keys are errors.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $( stringify!($key) => {
                        self.$key = <$ty as ConfigValue>::parse_value(value)
                            .map_err(|e| Error::Config(format!("{key}: {e}")))?;
                    } )*
                    other => return Err(Error::Config(format!("unknown config key {other:?}"))),
                }
                Ok(())
            }

            /// `(key, value)` for every field, in declaration order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$( (stringify!($key), ConfigValue::render(&self.$key)) ),*]
            }
        }
    };
}

run_config! {
    algorithm: Algorithm = Algorithm::Lfgp,
    main_task: TaskId = TaskId::Stack,
    auxiliary_tasks: Auxiliaries = Auxiliaries::Default,
    seed: u64 = 0,
    total_interactions: u64 = 400_000,
    buffer_capacity: usize = 500_000,
    /// No updates until this many transitions are stored.
    buffer_warmup: usize = 1000,
    /// Uniform-random actions for this many environment steps.
    initial_exploration: u64 = 1000,
    scheduler: SchedulerVariant = SchedulerVariant::QTable,
    /// Conditional probability table for the weighted scheduler; empty means
    /// the self-biased default.
    scheduler_weights: String = String::new(),
    xi: usize = 45,
    phi: f64 = 0.6,
    initial_temperature: f64 = 360.0,
    temperature_decay: f64 = 0.9995,
    min_temperature: f64 = 0.1,
    batch_size: usize = 128,
    width: usize = 256,
    policy_lr: f64 = 1e-5,
    q_lr: f64 = 3e-4,
    alpha_lr: f64 = 3e-4,
    discriminator_lr: f64 = 3e-4,
    bc_lr: f64 = 3e-4,
    initial_alpha: f64 = 1.0,
    target_entropy: f64 = 3.0,
    gamma: f64 = 0.99,
    polyak: f64 = 0.005,
    lambda_gp: f64 = 10.0,
    /// Gain applied to `state‖action` before the discriminator sees it.
    discriminator_input_scale: f64 = 10.0,
    max_grad_norm: Option<f64> = Some(10.0),
    /// Directory holding `<task>.lfgp` expert datasets.
    dataset_dir: String = "data".into(),
    /// Expert pairs per task.
    expert_pairs: usize = 900,
    eval_interval: u64 = 10_000,
    eval_episodes: usize = 50,
    metrics_path: String = String::new(),
    checkpoint_path: String = String::new(),
    /// Checkpoint to continue from (resume or transfer); empty starts fresh.
    init_checkpoint: String = String::new(),
    bc_patience: usize = 100,
    bc_batch_size: usize = 128,
    bc_max_epochs: usize = 5000,
    env_episode_len: usize = 360,
    env_max_step: f64 = 0.05,
    env_grasp_radius: f64 = 0.06,
    env_bring_tol: f64 = 0.08,
    env_insert_tol: f64 = 0.012,
    env_reach_tol: f64 = 0.015,
    env_lift_height: f64 = 0.15,
    env_move_min_speed: f64 = 0.01,
    env_move_max_accel: f64 = 0.02,
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides, then re-validates.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let aux = self.auxiliary_tasks.resolve(self.main_task);
        if aux.contains(&self.main_task) {
            return bad(format!("{} listed as its own auxiliary", self.main_task));
        }
        let mut sorted = aux.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != aux.len() {
            return bad("duplicate auxiliary task".into());
        }
        if self.xi == 0 || self.env_episode_len % self.xi != 0 {
            return bad(format!("xi = {} must divide env_episode_len = {}", self.xi, self.env_episode_len));
        }
        if self.batch_size == 0 || self.width == 0 || self.bc_batch_size == 0 {
            return bad("batch sizes and width must be positive".into());
        }
        if self.eval_interval == 0 || self.total_interactions % self.eval_interval != 0 {
            return bad(format!(
                "eval_interval = {} must divide total_interactions = {}",
                self.eval_interval, self.total_interactions
            ));
        }
        if self.expert_pairs == 0 || self.eval_episodes == 0 {
            return bad("expert_pairs and eval_episodes must be positive".into());
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity smaller than batch_size".into());
        }
        if !(self.discriminator_input_scale.is_finite() && self.discriminator_input_scale > 0.0) {
            return bad("discriminator_input_scale must be positive".into());
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.polyak) {
            return bad("gamma must be in [0,1) and polyak in [0,1]".into());
        }
        Ok(())
    }

    /// Auxiliary tasks followed by the main task: the head order.
    pub fn task_list(&self) -> Vec<TaskId> {
        let mut t = self.auxiliary_tasks.resolve(self.main_task);
        t.push(self.main_task);
        t
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig {
            episode_len: self.env_episode_len,
            max_step: self.env_max_step,
            grasp_radius: self.env_grasp_radius,
            bring_tol: self.env_bring_tol,
            insert_tol: self.env_insert_tol,
            reach_tol: self.env_reach_tol,
            lift_height: self.env_lift_height,
            move_min_speed: self.env_move_min_speed,
            move_max_accel: self.env_move_max_accel,
            ..EnvConfig::default()
        }
    }

    pub fn scheduler_config(&self, variant: SchedulerVariant) -> SchedulerConfig {
        SchedulerConfig {
            variant,
            xi: self.xi,
            phi: self.phi,
            gamma: self.gamma,
            initial_temperature: self.initial_temperature,
            temperature_decay: self.temperature_decay,
            min_temperature: self.min_temperature,
        }
    }

    pub fn dataset_path(&self, task: TaskId) -> PathBuf {
        dataset_file(Path::new(&self.dataset_dir), task)
    }
}

/// `<dir>/<task>.lfgp`.
pub fn dataset_file(dir: &Path, task: TaskId) -> PathBuf {
    dir.join(format!("{}.lfgp", task.name()))
}
