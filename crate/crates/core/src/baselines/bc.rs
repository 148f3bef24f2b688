//! Behavioural cloning on mean actions, single-task or with a shared trunk.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Decoder, Encoder, ExpertDataset};
use crate::discriminator::decode_tasks;
use crate::env::TaskId;
use crate::error::{Error, Result};
use crate::numeric::{
    Activation, AdamState, HeadSpec, MultiHeadCache, MultiHeadGrads, MultiHeadNet, Route, Scalar,
    Tensor,
};
use crate::record::{get_adam, get_multihead, put_adam, put_multihead};

/// Smallest dataset accepted for training.
pub const MIN_BC_PAIRS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BcConfig {
    pub width: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub train_fraction: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            width: 256,
            lr: 3e-4,
            batch_size: 128,
            patience: 100,
            max_epochs: 5000,
            train_fraction: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BcReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

/// Mean-action regressor. A single task uses one tanh output layer on the
/// two-layer trunk; several tasks get a three-layer head each.
#[derive(Debug, Clone, PartialEq)]
pub struct BcModel<S> {
    tasks: Vec<TaskId>,
    act_dim: usize,
    pub net: MultiHeadNet<S>,
    adam: AdamState<S>,
}

impl<S: Scalar> BcModel<S> {
    pub fn new<R: Rng + ?Sized>(
        tasks: &[TaskId],
        obs_dim: usize,
        act_dim: usize,
        cfg: &BcConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Config("behavioural cloning needs a task".into()));
        }
        let w = cfg.width;
        let head = if tasks.len() == 1 {
            HeadSpec {
                sizes: vec![w, act_dim],
                activations: vec![Activation::Tanh],
            }
        } else {
            HeadSpec {
                sizes: vec![w, w, w, act_dim],
                activations: vec![Activation::Relu, Activation::Relu, Activation::Tanh],
            }
        };
        let net = MultiHeadNet::new(
            &[obs_dim, w, w],
            &[Activation::Relu, Activation::Relu],
            &head,
            tasks.len(),
            rng,
        )?;
        Ok(Self {
            tasks: tasks.to_vec(),
            act_dim,
            adam: AdamState::new(&net, S::lit(cfg.lr)),
            net,
        })
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.tasks
    }

    pub fn act(&self, task: TaskId, obs: &[f64]) -> Result<Vec<f64>> {
        let h = self
            .tasks
            .iter()
            .position(|&t| t == task)
            .ok_or(Error::UnknownTask(task))?;
        let x = Tensor::from_f64(1, obs.len(), obs)?;
        let c = self.net.forward_routed(&x, &[Route { head: h, rows: 0..1 }])?;
        Ok(c.output(0).iter().map(|v| v.to_f64_lossy()).collect())
    }

    /// Forward pass over per-task row blocks of `(state ‖ action)` rows.
    fn forward(&self, blocks: &[Vec<f64>], obs_dim: usize) -> Result<(MultiHeadCache<S>, Vec<usize>)> {
        let width = obs_dim + self.act_dim;
        let mut states = Vec::new();
        let mut routes = Vec::new();
        let mut counts = Vec::new();
        let mut start = 0;
        for (h, b) in blocks.iter().enumerate() {
            let n = b.len() / width;
            for r in b.chunks_exact(width) {
                states.extend_from_slice(&r[..obs_dim]);
            }
            routes.push(Route {
                head: h,
                rows: start..start + n,
            });
            counts.push(n);
            start += n;
        }
        let x = Tensor::from_f64(start, obs_dim, &states)?;
        Ok((self.net.forward_routed(&x, &routes)?, counts))
    }

    /// Per-task mean squared error over rows and action dimensions, and the
    /// gradient of their sum. `blocks[h]` holds task `h`'s rows.
    pub fn loss_and_gradients(
        &self,
        blocks: &[Vec<f64>],
        obs_dim: usize,
    ) -> Result<(Vec<f64>, MultiHeadGrads<S>)> {
        let (cache, counts) = self.forward(blocks, obs_dim)?;
        let width = obs_dim + self.act_dim;
        let mut mse = Vec::with_capacity(blocks.len());
        let mut upstream = Vec::with_capacity(blocks.len());
        for (h, b) in blocks.iter().enumerate() {
            let out = cache.output(h);
            let denom = (counts[h] * self.act_dim).max(1) as f64;
            let k = S::lit(2.0 / denom);
            let mut up = Vec::with_capacity(out.len());
            let mut sq = 0.0;
            for (i, r) in b.chunks_exact(width).enumerate() {
                for j in 0..self.act_dim {
                    let diff = out[i * self.act_dim + j] - S::lit(r[obs_dim + j]);
                    sq += diff.to_f64_lossy().powi(2);
                    up.push(diff * k);
                }
            }
            mse.push(sq / denom);
            upstream.push(up);
        }
        let (grads, _) = self.net.backward(&cache, &upstream)?;
        Ok((mse, grads))
    }

    pub fn mse(&self, blocks: &[Vec<f64>], obs_dim: usize) -> Result<Vec<f64>> {
        let (cache, _) = self.forward(blocks, obs_dim)?;
        let width = obs_dim + self.act_dim;
        Ok(blocks
            .iter()
            .enumerate()
            .map(|(h, b)| {
                let out = cache.output(h);
                let n = b.len() / width;
                let sq: f64 = b
                    .chunks_exact(width)
                    .enumerate()
                    .flat_map(|(i, r)| {
                        (0..self.act_dim).map(move |j| (out[i * self.act_dim + j].to_f64_lossy() - r[obs_dim + j]).powi(2))
                    })
                    .sum();
                sq / (n * self.act_dim).max(1) as f64
            })
            .collect())
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.u32(self.tasks.len() as u32);
        for t in &self.tasks {
            e.u32(t.code());
        }
        e.u64(self.act_dim as u64);
        put_multihead(e, &self.net);
        put_adam(e, &self.adam);
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let tasks = decode_tasks(d)?;
        let act_dim = d.u64()? as usize;
        let net: MultiHeadNet<S> = get_multihead(d)?;
        let adam = get_adam(d)?;
        if net.n_heads() != tasks.len() || net.head_out_dim() != act_dim {
            return Err(d.error("behavioural cloning record is inconsistent"));
        }
        Ok(Self {
            tasks,
            act_dim,
            net,
            adam,
        })
    }
}

fn gather(ds: &ExpertDataset, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| ds.row(i).iter().copied()).collect()
}

/// Trains on a 70/30 split of each dataset and keeps the parameters with the
/// best summed validation error; stops after `patience` epochs without
/// improvement.
pub fn bc_train<S: Scalar>(
    datasets: &[&ExpertDataset],
    cfg: &BcConfig,
    seed: u64,
) -> Result<(BcModel<S>, BcReport)> {
    let first = datasets.first().ok_or(Error::EmptySource("behavioural cloning datasets"))?;
    let (obs_dim, act_dim) = (first.obs_dim(), first.act_dim());
    let mut tasks = Vec::with_capacity(datasets.len());
    for ds in datasets {
        if ds.len() < MIN_BC_PAIRS {
            return Err(Error::Config(format!(
                "{} dataset has {} pairs, behavioural cloning needs at least {MIN_BC_PAIRS}",
                ds.task(),
                ds.len()
            )));
        }
        if ds.obs_dim() != obs_dim || ds.act_dim() != act_dim {
            return Err(Error::Shape(format!("{} dataset dimensions differ", ds.task())));
        }
        if tasks.contains(&ds.task()) {
            return Err(Error::Config(format!("two datasets for {}", ds.task())));
        }
        tasks.push(ds.task());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = BcModel::<S>::new(&tasks, obs_dim, act_dim, cfg, &mut rng)?;
    let mut train_idx = Vec::new();
    let mut val_blocks = Vec::new();
    for ds in datasets {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.shuffle(&mut rng);
        let n_train = ((ds.len() as f64 * cfg.train_fraction).round() as usize).clamp(1, ds.len() - 1);
        val_blocks.push(gather(ds, &idx[n_train..]));
        idx.truncate(n_train);
        train_idx.push(idx);
    }
    let mut report = BcReport {
        best_val_mse: f64::INFINITY,
        ..BcReport::default()
    };
    let mut best = model.net.clone();
    for epoch in 0..cfg.max_epochs {
        for idx in &mut train_idx {
            idx.shuffle(&mut rng);
        }
        let steps = train_idx
            .iter()
            .map(|i| i.len().div_ceil(cfg.batch_size))
            .max()
            .unwrap_or(0);
        let mut train_sum = 0.0;
        for k in 0..steps {
            let blocks: Vec<Vec<f64>> = train_idx
                .iter()
                .zip(datasets)
                .map(|(idx, ds)| {
                    let lo = (k * cfg.batch_size).min(idx.len());
                    let hi = ((k + 1) * cfg.batch_size).min(idx.len());
                    gather(ds, &idx[lo..hi])
                })
                .collect();
            let (mse, grads) = model.loss_and_gradients(&blocks, obs_dim)?;
            train_sum += mse.iter().sum::<f64>();
            model.adam.step(&mut model.net, &grads, None)?;
        }
        let val: f64 = model.mse(&val_blocks, obs_dim)?.iter().sum();
        if !val.is_finite() {
            return Err(Error::NonFinite {
                step: epoch as u64,
                what: "behavioural cloning validation error".into(),
                dump: None,
            });
        }
        report.epochs.push(EpochStats {
            train_mse: train_sum / steps.max(1) as f64,
            val_mse: val,
        });
        if val < report.best_val_mse {
            report.best_val_mse = val;
            report.best_epoch = epoch;
            best = model.net.clone();
        } else if epoch - report.best_epoch >= cfg.patience {
            break;
        }
    }
    model.net = best;
    Ok((model, report))
}
