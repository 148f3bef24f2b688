use rand::Rng;

use crate::data::codec::{Decoder, Encoder};
use crate::error::{Error, Result};

/// One environment step. Rewards are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    /// The environment was reset after this step.
    pub episode_boundary: bool,
}

/// Rows drawn from a replay buffer, row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionBatch {
    pub len: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub next_states: Vec<f64>,
    pub boundary: Vec<bool>,
}

impl TransitionBatch {
    /// `state‖action` rows, the discriminator input layout.
    pub fn state_actions(&self) -> Vec<f64> {
        let od = self.states.len() / self.len.max(1);
        let ad = self.actions.len() / self.len.max(1);
        let mut out = Vec::with_capacity(self.len * (od + ad));
        for i in 0..self.len {
            out.extend_from_slice(&self.states[i * od..(i + 1) * od]);
            out.extend_from_slice(&self.actions[i * ad..(i + 1) * ad]);
        }
        out
    }
}

/// Fixed-capacity FIFO of transitions in flat storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    obs_dim: usize,
    act_dim: usize,
    capacity: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    next_states: Vec<f64>,
    boundary: Vec<bool>,
    head: usize,
    insertions: u64,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, act_dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            obs_dim,
            act_dim,
            capacity,
            states: Vec::new(),
            actions: Vec::new(),
            next_states: Vec::new(),
            boundary: Vec::new(),
            head: 0,
            insertions: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    pub fn insertions(&self) -> u64 {
        self.insertions
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        self.push_parts(&t.state, &t.action, &t.next_state, t.episode_boundary)
    }

    pub fn push_parts(
        &mut self,
        state: &[f64],
        action: &[f64],
        next_state: &[f64],
        boundary: bool,
    ) -> Result<()> {
        if state.len() != self.obs_dim
            || next_state.len() != self.obs_dim
            || action.len() != self.act_dim
        {
            return Err(Error::Shape(format!(
                "transition dims ({}, {}, {}) do not match buffer ({}, {})",
                state.len(),
                action.len(),
                next_state.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        if self.len() < self.capacity {
            self.states.extend_from_slice(state);
            self.actions.extend_from_slice(action);
            self.next_states.extend_from_slice(next_state);
            self.boundary.push(boundary);
        } else {
            let (o, a, h) = (self.obs_dim, self.act_dim, self.head);
            self.states[h * o..(h + 1) * o].copy_from_slice(state);
            self.actions[h * a..(h + 1) * a].copy_from_slice(action);
            self.next_states[h * o..(h + 1) * o].copy_from_slice(next_state);
            self.boundary[h] = boundary;
        }
        self.head = (self.head + 1) % self.capacity;
        self.insertions += 1;
        Ok(())
    }

    /// Storage slot of the `i`-th oldest transition.
    fn slot(&self, i: usize) -> usize {
        if self.len() < self.capacity {
            i
        } else {
            (self.head + i) % self.capacity
        }
    }

    /// The `i`-th oldest transition.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len() {
            return None;
        }
        let s = self.slot(i);
        let (o, a) = (self.obs_dim, self.act_dim);
        Some(Transition {
            state: self.states[s * o..(s + 1) * o].to_vec(),
            action: self.actions[s * a..(s + 1) * a].to_vec(),
            next_state: self.next_states[s * o..(s + 1) * o].to_vec(),
            episode_boundary: self.boundary[s],
        })
    }

    fn gather(&self, slots: &[usize]) -> TransitionBatch {
        let (o, a) = (self.obs_dim, self.act_dim);
        let mut b = TransitionBatch {
            len: slots.len(),
            states: Vec::with_capacity(slots.len() * o),
            actions: Vec::with_capacity(slots.len() * a),
            next_states: Vec::with_capacity(slots.len() * o),
            boundary: Vec::with_capacity(slots.len()),
        };
        for &s in slots {
            b.states.extend_from_slice(&self.states[s * o..(s + 1) * o]);
            b.actions.extend_from_slice(&self.actions[s * a..(s + 1) * a]);
            b.next_states
                .extend_from_slice(&self.next_states[s * o..(s + 1) * o]);
            b.boundary.push(self.boundary[s]);
        }
        b
    }

    /// `n` uniform draws with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TransitionBatch> {
        if self.is_empty() {
            return Err(Error::EmptySource("replay buffer"));
        }
        let slots: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len())).collect();
        Ok(self.gather(&slots))
    }

    /// Uniform draws restricted to transitions that are not followed by a
    /// reset, so `next_state` is a genuine successor.
    pub fn sample_non_boundary<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<TransitionBatch> {
        if !self.boundary.iter().any(|b| !b) {
            return Err(Error::EmptySource("replay buffer (non-boundary)"));
        }
        let mut slots = Vec::with_capacity(n);
        while slots.len() < n {
            let s = rng.random_range(0..self.len());
            if !self.boundary[s] {
                slots.push(s);
            }
        }
        Ok(self.gather(&slots))
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.u64(self.obs_dim as u64);
        e.u64(self.act_dim as u64);
        e.u64(self.capacity as u64);
        e.u64(self.head as u64);
        e.u64(self.insertions);
        e.f64s(&self.states);
        e.f64s(&self.actions);
        e.f64s(&self.next_states);
        e.u64(self.boundary.len() as u64);
        for &b in &self.boundary {
            e.bool(b);
        }
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let obs_dim = d.u64()? as usize;
        let act_dim = d.u64()? as usize;
        let capacity = d.u64()? as usize;
        let head = d.u64()? as usize;
        let insertions = d.u64()?;
        let states = d.f64s()?;
        let actions = d.f64s()?;
        let next_states = d.f64s()?;
        let n = d.len_prefix(1)?;
        let boundary = (0..n).map(|_| d.bool()).collect::<Result<Vec<_>>>()?;
        let consistent = capacity > 0
            && n <= capacity
            && head < capacity
            && states.len() == n * obs_dim
            && next_states.len() == n * obs_dim
            && actions.len() == n * act_dim
            && n as u64 == insertions.min(capacity as u64);
        if !consistent {
            return Err(d.error("inconsistent replay buffer record"));
        }
        Ok(Self {
            obs_dim,
            act_dim,
            capacity,
            states,
            actions,
            next_states,
            boundary,
            head,
            insertions,
        })
    }
}
