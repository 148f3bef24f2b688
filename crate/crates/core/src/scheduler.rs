//! High-level task selection over fixed-length slots of an episode.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::data::{Decoder, Encoder};
use crate::discriminator::decode_tasks;
use crate::env::TaskId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerVariant {
    QTable,
    MainOnly,
    Weighted,
    Uniform,
}

impl SchedulerVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::QTable => "qtable",
            Self::MainOnly => "main-only",
            Self::Weighted => "weighted",
            Self::Uniform => "uniform",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(t: u8) -> Option<Self> {
        [Self::QTable, Self::MainOnly, Self::Weighted, Self::Uniform]
            .get(t as usize)
            .copied()
    }
}

impl fmt::Display for SchedulerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "qtable" => Ok(Self::QTable),
            "main-only" => Ok(Self::MainOnly),
            "weighted" => Ok(Self::Weighted),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Config(format!("unknown scheduler variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    pub variant: SchedulerVariant,
    pub xi: usize,
    pub phi: f64,
    pub gamma: f64,
    pub initial_temperature: f64,
    pub temperature_decay: f64,
    pub min_temperature: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            variant: SchedulerVariant::QTable,
            xi: 45,
            phi: 0.6,
            gamma: 0.99,
            initial_temperature: 360.0,
            temperature_decay: 0.9995,
            min_temperature: 0.1,
        }
    }
}

/// Fixed conditional probabilities `P(task | previous task)`; the `None`
/// row is used at the first slot.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    rows: BTreeMap<Option<usize>, Vec<f64>>,
}

impl WeightTable {
    /// `P(t | t) = bias + (1 - bias) / n`, every other task `(1 - bias) / n`;
    /// uniform at the first slot.
    pub fn self_biased(n: usize, bias: f64) -> Self {
        let mut rows = BTreeMap::new();
        rows.insert(None, vec![1.0 / n as f64; n]);
        for prev in 0..n {
            let mut row = vec![(1.0 - bias) / n as f64; n];
            row[prev] += bias;
            rows.insert(Some(prev), row);
        }
        Self { rows }
    }

    /// One line per previous task (`start` for the first slot), e.g.
    /// `start reach=0.5 lift=0.5`. Unlisted tasks get zero weight; every
    /// row must be present and sum to one.
    pub fn parse(text: &str, tasks: &[TaskId]) -> Result<Self> {
        let mut rows = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: String| Error::Config(format!("weight table line {}: {m}", no + 1));
            let mut parts = line.split_whitespace();
            let head = parts.next().expect("non-empty line");
            let prev = if head == "start" {
                None
            } else {
                let t: TaskId = head.parse()?;
                Some(index_of(tasks, t).ok_or_else(|| bad(format!("{t} not scheduled")))?)
            };
            let mut row = vec![0.0; tasks.len()];
            for item in parts {
                let (name, p) = item
                    .split_once('=')
                    .ok_or_else(|| bad(format!("expected task=probability, got {item:?}")))?;
                let t: TaskId = name.parse()?;
                let i = index_of(tasks, t).ok_or_else(|| bad(format!("{t} not scheduled")))?;
                let p: f64 = p.parse().map_err(|_| bad(format!("bad probability {p:?}")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad(format!("probability {p} outside [0, 1]")));
                }
                row[i] = p;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(bad(format!("row sums to {sum}")));
            }
            if rows.insert(prev, row).is_some() {
                return Err(bad("duplicate row".into()));
            }
        }
        if rows.len() != tasks.len() + 1 {
            return Err(Error::Config(format!(
                "weight table has {} rows, needs start plus one per task ({})",
                rows.len(),
                tasks.len() + 1
            )));
        }
        Ok(Self { rows })
    }

    pub fn row(&self, prev: Option<usize>) -> &[f64] {
        &self.rows[&prev]
    }
}

fn index_of(tasks: &[TaskId], t: TaskId) -> Option<usize> {
    tasks.iter().position(|&x| x == t)
}

/// Q-table keyed by slot and previous task, Boltzmann selection, EMA update.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduler {
    variant: SchedulerVariant,
    tasks: Vec<TaskId>,
    main: usize,
    xi: usize,
    slots: usize,
    phi: f64,
    gamma: f64,
    temperature: f64,
    decay: f64,
    floor: f64,
    table: BTreeMap<(usize, Option<usize>), Vec<f64>>,
    weights: Option<WeightTable>,
    selections: Vec<u64>,
}

impl Scheduler {
    pub fn new(
        tasks: &[TaskId],
        main_task: TaskId,
        episode_len: usize,
        cfg: &SchedulerConfig,
        weights: Option<WeightTable>,
    ) -> Result<Self> {
        let main = index_of(tasks, main_task)
            .ok_or_else(|| Error::Config(format!("main task {main_task} not among scheduled tasks")))?;
        if cfg.xi == 0 || episode_len % cfg.xi != 0 {
            return Err(Error::Config(format!(
                "slot length {} must divide episode length {episode_len}",
                cfg.xi
            )));
        }
        if !(0.0..=1.0).contains(&cfg.phi) || cfg.min_temperature <= 0.0 {
            return Err(Error::Config("scheduler phi must be in [0,1], temperature floor > 0".into()));
        }
        let weights = match (cfg.variant, weights) {
            (SchedulerVariant::Weighted, Some(w)) => Some(w),
            (SchedulerVariant::Weighted, None) => Some(WeightTable::self_biased(tasks.len(), 0.3)),
            _ => None,
        };
        Ok(Self {
            variant: cfg.variant,
            tasks: tasks.to_vec(),
            main,
            xi: cfg.xi,
            slots: episode_len / cfg.xi,
            phi: cfg.phi,
            gamma: cfg.gamma,
            temperature: cfg.initial_temperature.max(cfg.min_temperature),
            decay: cfg.temperature_decay,
            floor: cfg.min_temperature,
            table: BTreeMap::new(),
            weights,
            selections: vec![0; tasks.len()],
        })
    }

    pub fn variant(&self) -> SchedulerVariant {
        self.variant
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.tasks
    }

    pub fn main_index(&self) -> usize {
        self.main
    }

    pub fn xi(&self) -> usize {
        self.xi
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn selections(&self) -> &[u64] {
        &self.selections
    }

    pub fn q_values(&self, h: usize, prev: Option<usize>) -> Vec<f64> {
        self.table
            .get(&(h, prev))
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.tasks.len()])
    }

    fn check_slot(&self, h: usize) -> Result<()> {
        if h >= self.slots {
            return Err(Error::Config(format!("slot {h} out of range (H = {})", self.slots)));
        }
        Ok(())
    }

    /// Selection probabilities for slot `h` after `prev`.
    pub fn probabilities(&self, h: usize, prev: Option<usize>) -> Result<Vec<f64>> {
        self.check_slot(h)?;
        let n = self.tasks.len();
        Ok(match self.variant {
            SchedulerVariant::QTable => {
                let q = self.q_values(h, prev);
                let top = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = q.iter().map(|v| ((v - top) / self.temperature).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|x| x / z).collect()
            }
            SchedulerVariant::MainOnly => {
                let mut p = vec![0.0; n];
                p[self.main] = 1.0;
                p
            }
            SchedulerVariant::Weighted => self.weights.as_ref().expect("weighted table").row(prev).to_vec(),
            SchedulerVariant::Uniform => vec![1.0 / n as f64; n],
        })
    }

    /// Task index for slot `h`. The main-only variant draws no randomness.
    pub fn choose<R: Rng + ?Sized>(&mut self, h: usize, prev: Option<usize>, rng: &mut R) -> Result<usize> {
        let i = if self.variant == SchedulerVariant::MainOnly {
            self.check_slot(h)?;
            self.main
        } else {
            let p = self.probabilities(h, prev)?;
            WeightedIndex::new(&p)
                .map_err(|e| Error::Config(format!("scheduler probabilities {p:?}: {e}")))?
                .sample(rng)
        };
        self.selections[i] += 1;
        Ok(i)
    }

    /// Main-task returns from each slot to the end of the episode, with the
    /// discount counted from the episode's first step.
    pub fn slot_returns(&self, rewards: &[f64]) -> Result<Vec<f64>> {
        if rewards.len() != self.slots * self.xi {
            return Err(Error::Config(format!(
                "reward trace has {} steps, expected {}",
                rewards.len(),
                self.slots * self.xi
            )));
        }
        let mut g = vec![0.0; self.slots];
        let mut acc = 0.0;
        for t in (0..rewards.len()).rev() {
            acc += self.gamma.powi(t as i32) * rewards[t];
            if t % self.xi == 0 {
                g[t / self.xi] = acc;
            }
        }
        Ok(g)
    }

    /// EMA update of every visited entry, then one temperature decay.
    pub fn update(&mut self, chosen: &[usize], rewards: &[f64]) -> Result<Vec<f64>> {
        if chosen.len() != self.slots || chosen.iter().any(|&c| c >= self.tasks.len()) {
            return Err(Error::Config(format!(
                "expected {} valid slot choices, got {chosen:?}",
                self.slots
            )));
        }
        let g = self.slot_returns(rewards)?;
        let n = self.tasks.len();
        for h in 0..self.slots {
            let prev = if h == 0 { None } else { Some(chosen[h - 1]) };
            let row = self.table.entry((h, prev)).or_insert_with(|| vec![0.0; n]);
            let v = &mut row[chosen[h]];
            *v = (1.0 - self.phi) * *v + self.phi * g[h];
        }
        self.temperature = (self.temperature * self.decay).max(self.floor);
        Ok(g)
    }

    /// Registers a new task with zero-valued entries and no selections.
    pub fn add_task(&mut self, task: TaskId, make_main: bool) -> Result<()> {
        if self.tasks.contains(&task) {
            return Err(Error::Config(format!("scheduler already has {task}")));
        }
        self.tasks.push(task);
        for row in self.table.values_mut() {
            row.push(0.0);
        }
        self.selections.push(0);
        if make_main {
            self.main = self.tasks.len() - 1;
        }
        if self.weights.is_some() {
            self.weights = Some(WeightTable::self_biased(self.tasks.len(), 0.3));
        }
        Ok(())
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.u32(self.tasks.len() as u32);
        for t in &self.tasks {
            e.u32(t.code());
        }
        e.u8(self.variant.tag());
        e.u64(self.main as u64);
        e.u64(self.xi as u64);
        e.u64(self.slots as u64);
        for v in [self.phi, self.gamma, self.temperature, self.decay, self.floor] {
            e.f64(v);
        }
        e.u32(self.table.len() as u32);
        for ((h, prev), row) in &self.table {
            e.u64(*h as u64);
            e.u64(prev.map_or(u64::MAX, |p| p as u64));
            e.f64s(row);
        }
        match &self.weights {
            Some(w) => {
                e.bool(true);
                e.u32(w.rows.len() as u32);
                for (prev, row) in &w.rows {
                    e.u64(prev.map_or(u64::MAX, |p| p as u64));
                    e.f64s(row);
                }
            }
            None => e.bool(false),
        }
        for &s in &self.selections {
            e.u64(s);
        }
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let tasks = decode_tasks(d)?;
        let n = tasks.len();
        let tag = d.u8()?;
        let variant =
            SchedulerVariant::from_tag(tag).ok_or_else(|| d.error(format!("unknown scheduler variant {tag}")))?;
        let main = d.u64()? as usize;
        let xi = d.u64()? as usize;
        let slots = d.u64()? as usize;
        let phi = d.f64()?;
        let gamma = d.f64()?;
        let temperature = d.f64()?;
        let decay = d.f64()?;
        let floor = d.f64()?;
        let prev_of = |v: u64| if v == u64::MAX { None } else { Some(v as usize) };
        let mut table = BTreeMap::new();
        for _ in 0..d.u32()? {
            let h = d.u64()? as usize;
            let prev = prev_of(d.u64()?);
            let row = d.f64s()?;
            if row.len() != n || h >= slots {
                return Err(d.error("scheduler table entry is inconsistent"));
            }
            table.insert((h, prev), row);
        }
        let weights = if d.bool()? {
            let mut rows = BTreeMap::new();
            for _ in 0..d.u32()? {
                let prev = prev_of(d.u64()?);
                rows.insert(prev, d.f64s()?);
            }
            Some(WeightTable { rows })
        } else {
            None
        };
        let selections = (0..n).map(|_| d.u64()).collect::<Result<Vec<_>>>()?;
        if main >= n || xi == 0 {
            return Err(d.error("scheduler record is inconsistent"));
        }
        Ok(Self {
            variant,
            tasks,
            main,
            xi,
            slots,
            phi,
            gamma,
            temperature,
            decay,
            floor,
            table,
            weights,
            selections,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stack_tasks() -> Vec<TaskId> {
        let mut t = TaskId::Stack.default_auxiliaries();
        t.push(TaskId::Stack);
        t
    }

    fn sched(variant: SchedulerVariant) -> Scheduler {
        let cfg = SchedulerConfig {
            variant,
            ..SchedulerConfig::default()
        };
        Scheduler::new(&stack_tasks(), TaskId::Stack, 360, &cfg, None).unwrap()
    }

    #[test]
    fn eight_slots_per_episode() {
        let s = sched(SchedulerVariant::QTable);
        assert_eq!(s.slots(), 8);
        assert_eq!(s.slots() * s.xi(), 360);
        assert!(Scheduler::new(&stack_tasks(), TaskId::Stack, 350, &SchedulerConfig::default(), None).is_err());
    }

    #[test]
    fn slot_out_of_range() {
        let mut s = sched(SchedulerVariant::QTable);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(s.choose(8, None, &mut rng).is_err());
        assert!(s.choose(7, Some(2), &mut rng).is_ok());
        let mut m = sched(SchedulerVariant::MainOnly);
        assert!(m.choose(8, None, &mut rng).is_err());
    }

    #[test]
    fn hand_computed_slot_returns() {
        let cfg = SchedulerConfig {
            xi: 2,
            ..SchedulerConfig::default()
        };
        let tasks = [TaskId::Reach, TaskId::Lift];
        let mut s = Scheduler::new(&tasks, TaskId::Lift, 4, &cfg, None).unwrap();
        let g = 0.99_f64;
        let g0 = 0.5 * (1.0 + g + g * g + g * g * g);
        let g1 = 0.5 * (g * g + g * g * g);
        let got = s.update(&[1, 0], &[0.5; 4]).unwrap();
        assert!((got[0] - g0).abs() < 1e-12);
        assert!((got[1] - g1).abs() < 1e-12);
        assert!((s.q_values(0, None)[1] - 0.6 * g0).abs() < 1e-12);
        assert_eq!(s.q_values(0, None)[0], 0.0);
        assert!((s.q_values(1, Some(1))[0] - 0.6 * g1).abs() < 1e-12);
        assert_eq!(s.q_values(1, Some(0)), vec![0.0, 0.0]);
        assert!(s.update(&[1, 0], &[0.5; 3]).is_err());
    }

    #[test]
    fn ema_degenerate_rates() {
        let tasks = [TaskId::Reach, TaskId::Lift];
        for phi in [0.0, 1.0] {
            let cfg = SchedulerConfig {
                xi: 2,
                phi,
                ..SchedulerConfig::default()
            };
            let mut s = Scheduler::new(&tasks, TaskId::Lift, 4, &cfg, None).unwrap();
            s.update(&[0, 0], &[0.25; 4]).unwrap();
            let g = s.update(&[0, 0], &[0.75; 4]).unwrap();
            let want = if phi == 1.0 { g[0] } else { 0.0 };
            assert_eq!(s.q_values(0, None)[0], want);
        }
    }

    #[test]
    fn zero_table_is_uniform_over_10k_draws() {
        let mut s = sched(SchedulerVariant::QTable);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[s.choose(0, None, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / 6.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
        assert_eq!(s.selections().iter().sum::<u64>(), n as u64);
    }

    #[test]
    fn temperature_reaches_and_holds_floor() {
        let mut s = sched(SchedulerVariant::QTable);
        let chosen = vec![5; 8];
        let rewards = vec![0.0; 360];
        // 360 * 0.9995^k < 0.1 after ln(3600)/-ln(0.9995) ≈ 16375 updates
        for _ in 0..16_400 {
            s.update(&chosen, &rewards).unwrap();
            assert!(s.temperature() >= 0.1);
        }
        assert_eq!(s.temperature(), 0.1);
        s.update(&chosen, &rewards).unwrap();
        assert_eq!(s.temperature(), 0.1);
    }

    #[test]
    fn low_temperature_picks_argmax() {
        let mut s = sched(SchedulerVariant::QTable);
        s.temperature = 0.1;
        s.table.insert((0, None), vec![0.0, 0.0, 10.0, 0.0, 0.0, 0.0]);
        let p = s.probabilities(0, None).unwrap();
        assert!(p[2] >= 1.0 - 1e-6);
    }

    #[test]
    fn main_only_always_main() {
        let mut s = sched(SchedulerVariant::MainOnly);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let before = rng.clone();
        for h in 0..8 {
            for prev in [None, Some(0), Some(3)] {
                assert_eq!(s.choose(h, prev, &mut rng).unwrap(), 5);
            }
        }
        assert_eq!(rng, before);
    }

    #[test]
    fn self_biased_weights() {
        let w = WeightTable::self_biased(4, 0.3);
        assert_eq!(w.row(None), &[0.25; 4]);
        let r = w.row(Some(2));
        assert!((r[2] - (0.3 + 0.7 / 4.0)).abs() < 1e-15);
        assert!((r[0] - 0.7 / 4.0).abs() < 1e-15);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_table_parse() {
        let tasks = [TaskId::Reach, TaskId::Lift];
        let text = "# comment\nstart reach=1\nreach reach=0.5 lift=0.5\nlift lift=1.0\n";
        let w = WeightTable::parse(text, &tasks).unwrap();
        assert_eq!(w.row(None), &[1.0, 0.0]);
        assert_eq!(w.row(Some(0)), &[0.5, 0.5]);
        assert!(WeightTable::parse("start reach=0.7\nreach reach=1\nlift lift=1", &tasks).is_err());
        assert!(WeightTable::parse("start reach=1\nreach reach=1", &tasks).is_err());
        assert!(WeightTable::parse("start stack=1\nreach reach=1\nlift lift=1", &tasks).is_err());
    }

    #[test]
    fn encode_round_trip() {
        let mut s = sched(SchedulerVariant::Weighted);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut chosen = Vec::new();
        let mut prev = None;
        for h in 0..8 {
            let c = s.choose(h, prev, &mut rng).unwrap();
            chosen.push(c);
            prev = Some(c);
        }
        s.update(&chosen, &vec![0.4; 360]).unwrap();
        let mut e = Encoder::new();
        s.encode(&mut e);
        let bytes = e.into_bytes();
        let mut d = Decoder::new(&bytes);
        assert_eq!(Scheduler::decode(&mut d).unwrap(), s);
        d.finish().unwrap();
    }

    proptest! {
        #[test]
        fn probabilities_normalise(q in prop::collection::vec(-50.0..50.0f64, 6), tau in 0.1..400.0f64) {
            let mut s = sched(SchedulerVariant::QTable);
            s.temperature = tau;
            s.table.insert((3, Some(1)), q);
            let p = s.probabilities(3, Some(1)).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn table_stays_in_return_range(
            rewards in prop::collection::vec(1e-6..(1.0 - 1e-6), 360),
            picks in prop::collection::vec(0usize..6, 8),
        ) {
            let mut s = sched(SchedulerVariant::QTable);
            for _ in 0..3 {
                s.update(&picks, &rewards).unwrap();
            }
            for row in s.table.values() {
                for &v in row {
                    prop_assert!((0.0..=1.0 / (1.0 - 0.99)).contains(&v));
                }
            }
        }
    }
}
