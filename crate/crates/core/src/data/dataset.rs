use std::path::Path;

use rand::Rng;

use crate::data::codec::{Decoder, Encoder};
use crate::env::TaskId;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LFGP";
pub const FORMAT_VERSION: u32 = 1;

/// Expert `(state, action)` pairs for one task, stored as `state‖action` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertDataset {
    task: TaskId,
    obs_dim: usize,
    act_dim: usize,
    rows: Vec<f64>,
    /// End index (exclusive) of each episode, strictly increasing.
    boundaries: Vec<u64>,
}

impl ExpertDataset {
    pub fn new(task: TaskId, obs_dim: usize, act_dim: usize) -> Self {
        Self {
            task,
            obs_dim,
            act_dim,
            rows: Vec::new(),
            boundaries: Vec::new(),
        }
    }

    pub fn from_parts(
        task: TaskId,
        obs_dim: usize,
        act_dim: usize,
        rows: Vec<f64>,
        boundaries: Vec<u64>,
    ) -> Result<Self> {
        let w = obs_dim + act_dim;
        if w == 0 || rows.len() % w != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form rows of width {w}",
                rows.len()
            )));
        }
        let ds = Self {
            task,
            obs_dim,
            act_dim,
            rows,
            boundaries,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if let Some(i) = self.rows.iter().position(|x| !x.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite value at row {}",
                i / self.width()
            )));
        }
        let count = self.len() as u64;
        let mut prev = None;
        for &b in &self.boundaries {
            if b > count || prev.is_some_and(|p| b <= p) {
                return Err(Error::Config(format!(
                    "boundary {b} is not strictly increasing within 0..={count}"
                )));
            }
            prev = Some(b);
        }
        Ok(())
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn width(&self) -> usize {
        self.obs_dim + self.act_dim
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn boundaries(&self) -> &[u64] {
        &self.boundaries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.rows[i * w..(i + 1) * w]
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.row(i)[self.obs_dim..]
    }

    /// Index ranges of the stored episodes. Pairs after the last boundary
    /// form a trailing open episode.
    pub fn episodes(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for &b in &self.boundaries {
            out.push(start..b as usize);
            start = b as usize;
        }
        if start < self.len() {
            out.push(start..self.len());
        }
        out
    }

    pub fn push_pair(&mut self, state: &[f64], action: &[f64]) -> Result<()> {
        if state.len() != self.obs_dim || action.len() != self.act_dim {
            return Err(Error::Shape(format!(
                "pair dims ({}, {}) do not match dataset ({}, {})",
                state.len(),
                action.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        if !state.iter().chain(action).all(|x| x.is_finite()) {
            return Err(Error::Config("non-finite expert pair".into()));
        }
        self.rows.extend_from_slice(state);
        self.rows.extend_from_slice(action);
        Ok(())
    }

    /// Closes the current episode; a no-op when it is empty.
    pub fn end_episode(&mut self) {
        let n = self.len() as u64;
        if n > 0 && self.boundaries.last() != Some(&n) {
            self.boundaries.push(n);
        }
    }

    /// Drops pairs beyond `n`, keeping boundaries consistent.
    pub fn truncate(&mut self, n: usize) {
        if n >= self.len() {
            return;
        }
        self.rows.truncate(n * self.width());
        self.boundaries.retain(|&b| b < n as u64);
        self.end_episode();
    }

    /// Rows `idx` in order, e.g. for a train/validation split.
    pub fn select(&self, idx: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(idx.len() * self.width());
        for &i in idx {
            out.extend_from_slice(self.row(i));
        }
        out
    }

    /// `n` uniform draws with replacement, as `state‖action` rows.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::EmptySource("expert dataset"));
        }
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len())).collect();
        Ok(self.select(&idx))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.raw(MAGIC);
        e.u32(FORMAT_VERSION);
        e.u32(self.task.code());
        e.u32(self.obs_dim as u32);
        e.u32(self.act_dim as u32);
        e.u64(self.len() as u64);
        e.u64(self.boundaries.len() as u64);
        for &x in &self.rows {
            e.f64(x);
        }
        for &b in &self.boundaries {
            e.u64(b);
        }
        e.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes);
        let magic = d.raw(4)?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {magic:?}, expected \"LFGP\""),
            });
        }
        let at = d.offset();
        let version = d.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format {
                offset: at,
                message: format!("unsupported version {version}, expected {FORMAT_VERSION}"),
            });
        }
        let at = d.offset();
        let code = d.u32()?;
        let task = TaskId::from_code(code).ok_or(Error::Format {
            offset: at,
            message: format!("unknown task id {code}"),
        })?;
        let obs_dim = d.u32()? as usize;
        let act_dim = d.u32()? as usize;
        let width = obs_dim + act_dim;
        if width == 0 {
            return Err(d.error("zero row width"));
        }
        let count = d.u64()?;
        let n_bound = d.u64()?;
        let need = count
            .checked_mul(width as u64 * 8)
            .and_then(|r| n_bound.checked_mul(8).and_then(|b| r.checked_add(b)));
        match need {
            Some(n) if n == d.remaining() as u64 => {}
            Some(n) if n > d.remaining() as u64 => {
                return Err(d.error(format!(
                    "truncated: header declares {n} payload bytes, {} remain",
                    d.remaining()
                )))
            }
            _ => {
                return Err(d.error(format!(
                    "payload size mismatch: {} bytes remain",
                    d.remaining()
                )))
            }
        }
        let mut rows = Vec::with_capacity(count as usize * width);
        for _ in 0..count as usize * width {
            let at = d.offset();
            let x = d.f64()?;
            if !x.is_finite() {
                return Err(Error::Format {
                    offset: at,
                    message: "non-finite pair value".into(),
                });
            }
            rows.push(x);
        }
        let mut boundaries = Vec::with_capacity(n_bound as usize);
        for _ in 0..n_bound {
            let at = d.offset();
            let b = d.u64()?;
            if b > count || boundaries.last().is_some_and(|&p| b <= p) {
                return Err(Error::Format {
                    offset: at,
                    message: format!("boundary {b} out of order or beyond {count}"),
                });
            }
            boundaries.push(b);
        }
        d.finish()?;
        Ok(Self {
            task,
            obs_dim,
            act_dim,
            rows,
            boundaries,
        })
    }
}

pub fn save_dataset(ds: &ExpertDataset, path: &Path) -> Result<()> {
    std::fs::write(path, ds.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<ExpertDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ExpertDataset::from_bytes(&bytes)
}
