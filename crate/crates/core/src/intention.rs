//! Multitask soft actor-critic: a shared-trunk tanh-Gaussian policy, twin Q
//! networks with Polyak targets, and one learned temperature per task.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Decoder, Encoder, TransitionBatch};
use crate::discriminator::decode_tasks;
use crate::env::TaskId;
use crate::error::{Error, Result};
use crate::numeric::{
    gaussian_backward, gaussian_head, global_norm, mean_action, Activation, AdamState,
    GaussianSample, HeadSpec, MultiHeadGrads, MultiHeadNet, Route, Scalar, Tensor,
};
use crate::record::{get_adam, get_multihead, get_tensor, put_adam, put_multihead, put_tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct IntentionConfig {
    pub width: usize,
    pub policy_lr: f64,
    pub q_lr: f64,
    pub alpha_lr: f64,
    pub initial_alpha: f64,
    pub target_entropy: f64,
    pub gamma: f64,
    pub polyak: f64,
    pub max_grad_norm: Option<f64>,
}

impl IntentionConfig {
    pub fn for_action_dim(act_dim: usize) -> Self {
        Self {
            width: 256,
            policy_lr: 1e-5,
            q_lr: 3e-4,
            alpha_lr: 3e-4,
            initial_alpha: 1.0,
            target_entropy: act_dim as f64,
            gamma: 0.99,
            polyak: 0.005,
            max_grad_norm: Some(10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QLoss {
    /// Mean squared residual, summed over both twins.
    pub per_task: Vec<f64>,
    pub mean_target: Vec<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyLoss {
    /// `mean(alpha * log_pi - min Q)` per task.
    pub per_task: Vec<f64>,
    /// Mean log-probability of the reparameterised samples.
    pub log_prob: Vec<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentionModel<S> {
    tasks: Vec<TaskId>,
    obs_dim: usize,
    act_dim: usize,
    pub policy: MultiHeadNet<S>,
    pub q: [MultiHeadNet<S>; 2],
    pub q_target: [MultiHeadNet<S>; 2],
    log_alpha: Vec<S>,
    policy_adam: AdamState<S>,
    q_adam: [AdamState<S>; 2],
    alpha_adam: AdamState<S>,
    gamma: S,
    polyak: S,
    target_entropy: S,
    max_grad_norm: Option<S>,
}

/// Standard-normal noise, one `rows x act_dim` block per head.
pub fn draw_noise<S: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    heads: usize,
    rows: usize,
    act_dim: usize,
) -> Vec<Vec<S>> {
    (0..heads)
        .map(|_| {
            (0..rows * act_dim)
                .map(|_| S::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect()
        })
        .collect()
}

fn stacked_routes(heads: usize, rows: usize) -> Vec<Route> {
    (0..heads)
        .map(|h| Route {
            head: h,
            rows: h * rows..(h + 1) * rows,
        })
        .collect()
}

/// `[s ‖ a_h]` for every head, stacked head-major.
fn stack_state_actions<S: Scalar>(
    states: &Tensor<S>,
    actions: &[&[S]],
    act_dim: usize,
) -> Result<Tensor<S>> {
    let n = states.rows();
    let o = states.cols();
    let mut data = Vec::with_capacity(actions.len() * n * (o + act_dim));
    for a in actions {
        for i in 0..n {
            data.extend_from_slice(states.row(i));
            data.extend_from_slice(&a[i * act_dim..(i + 1) * act_dim]);
        }
    }
    Tensor::from_rows(actions.len() * n, o + act_dim, data)
}

fn mlp_layout(width: usize, hidden: Activation, out: usize) -> HeadSpec {
    HeadSpec {
        sizes: vec![width, width, width, out],
        activations: vec![hidden, hidden, Activation::Linear],
    }
}

/// Scales two gradient sets so their joint norm is at most `max`.
fn clip_pair<S: Scalar>(grads: &mut [MultiHeadGrads<S>; 2], max: Option<S>) -> S {
    let n0 = global_norm(&grads[0]);
    let n1 = global_norm(&grads[1]);
    let norm = (n0 * n0 + n1 * n1).sqrt();
    if let Some(max) = max {
        if norm > max {
            let k = max / norm;
            for g in grads.iter_mut() {
                for s in crate::numeric::ParamSet::param_slices_mut(g) {
                    s.iter_mut().for_each(|x| *x = *x * k);
                }
            }
        }
    }
    norm
}

impl<S: Scalar> IntentionModel<S> {
    pub fn new<R: Rng + ?Sized>(
        tasks: &[TaskId],
        obs_dim: usize,
        act_dim: usize,
        cfg: &IntentionConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Config("intention model needs at least one task".into()));
        }
        let w = cfg.width;
        let relu2 = [Activation::Relu, Activation::Relu];
        let policy = MultiHeadNet::new(
            &[obs_dim, w, w],
            &relu2,
            &mlp_layout(w, Activation::Relu, 2 * act_dim),
            tasks.len(),
            rng,
        )?;
        let mut make_q = || {
            MultiHeadNet::new(
                &[obs_dim + act_dim, w, w],
                &relu2,
                &mlp_layout(w, Activation::Relu, 1),
                tasks.len(),
                rng,
            )
        };
        let q = [make_q()?, make_q()?];
        let q_target = q.clone();
        let log_alpha = vec![S::lit(cfg.initial_alpha.ln()); tasks.len()];
        Ok(Self {
            tasks: tasks.to_vec(),
            obs_dim,
            act_dim,
            policy_adam: AdamState::new(&policy, S::lit(cfg.policy_lr)),
            q_adam: [
                AdamState::new(&q[0], S::lit(cfg.q_lr)),
                AdamState::new(&q[1], S::lit(cfg.q_lr)),
            ],
            alpha_adam: AdamState::new(&log_alpha, S::lit(cfg.alpha_lr)),
            policy,
            q,
            q_target,
            log_alpha,
            gamma: S::lit(cfg.gamma),
            polyak: S::lit(cfg.polyak),
            target_entropy: S::lit(cfg.target_entropy),
            max_grad_norm: cfg.max_grad_norm.map(S::lit),
        })
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.tasks
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn head_index(&self, task: TaskId) -> Result<usize> {
        self.tasks
            .iter()
            .position(|&t| t == task)
            .ok_or(Error::UnknownTask(task))
    }

    pub fn alpha(&self, head: usize) -> S {
        self.log_alpha[head].exp()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.log_alpha.iter().map(|l| l.exp().to_f64_lossy()).collect()
    }

    pub fn set_log_alpha(&mut self, head: usize, value: S) {
        self.log_alpha[head] = value;
    }

    pub fn set_gamma(&mut self, gamma: S) {
        self.gamma = gamma;
    }

    pub fn set_polyak(&mut self, rho: S) {
        self.polyak = rho;
    }

    /// Action for one observation.
    pub fn act<R: Rng + ?Sized>(
        &self,
        task: TaskId,
        obs: &[f64],
        mode: ActMode,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let h = self.head_index(task)?;
        let x = Tensor::from_f64(1, self.obs_dim, obs)?;
        let cache = self.policy.forward_routed(&x, &[Route { head: h, rows: 0..1 }])?;
        let out = cache.output(0);
        let a = match mode {
            ActMode::Mean => mean_action(out, 1, self.act_dim),
            ActMode::Stochastic => {
                let noise: Vec<S> = (0..self.act_dim)
                    .map(|_| S::lit(rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                gaussian_head(out, 1, self.act_dim, &noise)?.action
            }
        };
        Ok(a.iter().map(|x| x.to_f64_lossy()).collect())
    }

    fn samples(
        &self,
        states: &Tensor<S>,
        noise: &[Vec<S>],
    ) -> Result<(crate::numeric::MultiHeadCache<S>, Vec<GaussianSample<S>>)> {
        let n = states.rows();
        let heads = self.tasks.len();
        if noise.len() != heads {
            return Err(Error::Shape(format!("{} noise blocks for {heads} heads", noise.len())));
        }
        let cache = self.policy.forward_routed(states, &self.policy.all_routes(n))?;
        let samples = (0..heads)
            .map(|h| gaussian_head(cache.output(h), n, self.act_dim, &noise[h]))
            .collect::<Result<Vec<_>>>()?;
        Ok((cache, samples))
    }

    /// Soft Bellman targets `r + gamma * (min target-Q(s', a') - alpha log pi(a'|s'))`,
    /// one vector per head. `rewards` is `(rows, heads)`.
    pub fn bellman_targets(
        &self,
        next_states: &[f64],
        rewards: &Tensor<S>,
        noise: &[Vec<S>],
    ) -> Result<Vec<Vec<S>>> {
        let heads = self.tasks.len();
        let n = rewards.rows();
        if rewards.cols() != heads || next_states.len() != n * self.obs_dim {
            return Err(Error::Shape(format!(
                "rewards {:?} and {} next-state values for {heads} heads",
                rewards.shape(),
                next_states.len()
            )));
        }
        let s2 = Tensor::from_f64(n, self.obs_dim, next_states)?;
        let (_, samples) = self.samples(&s2, noise)?;
        let acts: Vec<&[S]> = samples.iter().map(|s| s.action.as_slice()).collect();
        let x2 = stack_state_actions(&s2, &acts, self.act_dim)?;
        let routes = stacked_routes(heads, n);
        let t0 = self.q_target[0].forward_routed(&x2, &routes)?;
        let t1 = self.q_target[1].forward_routed(&x2, &routes)?;
        Ok((0..heads)
            .map(|h| {
                let alpha = self.alpha(h);
                (0..n)
                    .map(|i| {
                        let q = t0.output(h)[i].min(t1.output(h)[i]);
                        let soft = q - alpha * samples[h].log_prob[i];
                        rewards.row(i)[h] + self.gamma * soft
                    })
                    .collect()
            })
            .collect())
    }

    /// One step on the summed squared Bellman residuals of every head and
    /// both twins, then a Polyak update of the targets.
    pub fn q_update<R: Rng + ?Sized>(
        &mut self,
        batch: &TransitionBatch,
        rewards: &Tensor<S>,
        rng: &mut R,
    ) -> Result<QLoss> {
        if batch.len == 0 {
            return Err(Error::EmptySource("transition batch"));
        }
        let noise = draw_noise(rng, self.tasks.len(), batch.len, self.act_dim);
        let targets = self.bellman_targets(&batch.next_states, rewards, &noise)?;
        self.q_step(&batch.states, &batch.actions, &targets)
    }

    /// Regression step of both online twins toward fixed `targets`.
    pub fn q_step(&mut self, states: &[f64], actions: &[f64], targets: &[Vec<S>]) -> Result<QLoss> {
        let heads = self.tasks.len();
        let n = states.len() / self.obs_dim;
        let s = Tensor::from_f64(n, self.obs_dim, states)?;
        let a = Tensor::from_f64(n, self.act_dim, actions)?;
        let x = Tensor::hcat(&s, &a)?;
        let routes = self.q[0].all_routes(n);
        let scale = S::lit(2.0 / n as f64);
        let mut report = QLoss {
            per_task: vec![0.0; heads],
            mean_target: targets
                .iter()
                .map(|t| t.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n as f64)
                .collect(),
            grad_norm: 0.0,
        };
        let mut grads = Vec::with_capacity(2);
        for k in 0..2 {
            let cache = self.q[k].forward_routed(&x, &routes)?;
            let mut upstream = Vec::with_capacity(heads);
            for h in 0..heads {
                let q = cache.output(h);
                let mut up = Vec::with_capacity(n);
                let mut sq = 0.0;
                for i in 0..n {
                    let r = q[i] - targets[h][i];
                    sq += r.to_f64_lossy().powi(2);
                    up.push(r * scale);
                }
                report.per_task[h] += sq / n as f64;
                upstream.push(up);
            }
            grads.push(self.q[k].backward(&cache, &upstream)?.0);
        }
        let mut grads: [MultiHeadGrads<S>; 2] = grads.try_into().expect("two twins");
        report.grad_norm = clip_pair(&mut grads, self.max_grad_norm).to_f64_lossy();
        for k in 0..2 {
            self.q_adam[k].step(&mut self.q[k], &grads[k], None)?;
        }
        for k in 0..2 {
            self.q_target[k].polyak_from(&self.q[k], self.polyak);
        }
        Ok(report)
    }

    /// Objective `sum_h mean(alpha_h log pi_h - min Q_h(s, a_h))` and its
    /// policy gradient, for explicit reparameterisation noise.
    pub fn policy_objective(
        &self,
        states: &[f64],
        noise: &[Vec<S>],
    ) -> Result<(PolicyLoss, MultiHeadGrads<S>)> {
        let heads = self.tasks.len();
        let n = states.len() / self.obs_dim;
        if n == 0 {
            return Err(Error::EmptySource("state batch"));
        }
        let s = Tensor::from_f64(n, self.obs_dim, states)?;
        let (pcache, samples) = self.samples(&s, noise)?;
        let acts: Vec<&[S]> = samples.iter().map(|x| x.action.as_slice()).collect();
        let x = stack_state_actions(&s, &acts, self.act_dim)?;
        let routes = stacked_routes(heads, n);
        let c0 = self.q[0].forward_routed(&x, &routes)?;
        let c1 = self.q[1].forward_routed(&x, &routes)?;
        let inv_n = S::one() / S::lit(n as f64);
        let mut report = PolicyLoss {
            per_task: vec![0.0; heads],
            log_prob: vec![0.0; heads],
            grad_norm: 0.0,
        };
        let mut up0 = Vec::with_capacity(heads);
        let mut up1 = Vec::with_capacity(heads);
        for h in 0..heads {
            let alpha = self.alpha(h);
            let (q0, q1) = (c0.output(h), c1.output(h));
            let mut u0 = vec![S::zero(); n];
            let mut u1 = vec![S::zero(); n];
            let (mut loss, mut lp) = (0.0, 0.0);
            for i in 0..n {
                let l = samples[h].log_prob[i];
                let q = if q0[i] <= q1[i] {
                    u0[i] = -inv_n;
                    q0[i]
                } else {
                    u1[i] = -inv_n;
                    q1[i]
                };
                loss += (alpha * l - q).to_f64_lossy();
                lp += l.to_f64_lossy();
            }
            report.per_task[h] = loss / n as f64;
            report.log_prob[h] = lp / n as f64;
            up0.push(u0);
            up1.push(u1);
        }
        let (_, gx0) = self.q[0].backward(&c0, &up0)?;
        let (_, gx1) = self.q[1].backward(&c1, &up1)?;
        let width = self.obs_dim + self.act_dim;
        let mut d_heads = Vec::with_capacity(heads);
        for h in 0..heads {
            let mut d_action = Vec::with_capacity(n * self.act_dim);
            for i in 0..n {
                let r = (h * n + i) * width + self.obs_dim;
                for j in 0..self.act_dim {
                    d_action.push(gx0[r + j] + gx1[r + j]);
                }
            }
            let d_lp = vec![self.alpha(h) * inv_n; n];
            d_heads.push(gaussian_backward(&samples[h], pcache.output(h), &d_action, &d_lp));
        }
        let (grads, _) = self.policy.backward(&pcache, &d_heads)?;
        Ok((report, grads))
    }

    pub fn policy_update<R: Rng + ?Sized>(&mut self, states: &[f64], rng: &mut R) -> Result<PolicyLoss> {
        let n = states.len() / self.obs_dim;
        let noise = draw_noise(rng, self.tasks.len(), n, self.act_dim);
        let (mut report, grads) = self.policy_objective(states, &noise)?;
        report.grad_norm = self
            .policy_adam
            .step(&mut self.policy, &grads, self.max_grad_norm)?
            .to_f64_lossy();
        Ok(report)
    }

    /// Gradient of `alpha_h * (-log pi_h - H_target)` with respect to `log alpha_h`.
    pub fn alpha_gradient(&self, log_prob: &[f64]) -> Vec<S> {
        log_prob
            .iter()
            .enumerate()
            .map(|(h, &lp)| self.alpha(h) * (S::lit(-lp) - self.target_entropy))
            .collect()
    }

    pub fn alpha_update(&mut self, log_prob: &[f64]) -> Result<()> {
        if log_prob.len() != self.tasks.len() {
            return Err(Error::Shape(format!(
                "{} log-prob estimates for {} tasks",
                log_prob.len(),
                self.tasks.len()
            )));
        }
        let g = self.alpha_gradient(log_prob);
        self.alpha_adam.step(&mut self.log_alpha, &g, None)?;
        Ok(())
    }

    /// Appends fresh policy and Q heads for `task`; the new target head
    /// starts as a copy of the online one.
    pub fn add_task<R: Rng + ?Sized>(
        &mut self,
        task: TaskId,
        initial_alpha: f64,
        rng: &mut R,
    ) -> Result<()> {
        if self.tasks.contains(&task) {
            return Err(Error::Config(format!("model already has {task}")));
        }
        self.policy.push_head(rng)?;
        self.policy_adam.grow_to(&self.policy)?;
        for k in 0..2 {
            self.q[k].push_head(rng)?;
            let fresh = self.q[k].heads.last().expect("just pushed").clone();
            self.q_target[k].heads.push(fresh);
            self.q_adam[k].grow_to(&self.q[k])?;
        }
        self.log_alpha.push(S::lit(initial_alpha.ln()));
        self.alpha_adam.grow_to(&self.log_alpha)?;
        self.tasks.push(task);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite()
            && self.q.iter().all(|q| q.is_finite())
            && self.log_alpha.iter().all(|x| x.is_finite())
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.u32(self.tasks.len() as u32);
        for t in &self.tasks {
            e.u32(t.code());
        }
        e.u64(self.obs_dim as u64);
        e.u64(self.act_dim as u64);
        for v in [self.gamma, self.polyak, self.target_entropy] {
            e.f64(v.to_f64_lossy());
        }
        match self.max_grad_norm {
            Some(m) => {
                e.bool(true);
                e.f64(m.to_f64_lossy());
            }
            None => e.bool(false),
        }
        put_multihead(e, &self.policy);
        for net in self.q.iter().chain(&self.q_target) {
            put_multihead(e, net);
        }
        put_tensor(e, &[self.log_alpha.len()], &self.log_alpha);
        put_adam(e, &self.policy_adam);
        put_adam(e, &self.q_adam[0]);
        put_adam(e, &self.q_adam[1]);
        put_adam(e, &self.alpha_adam);
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let tasks = decode_tasks(d)?;
        let obs_dim = d.u64()? as usize;
        let act_dim = d.u64()? as usize;
        let gamma = S::lit(d.f64()?);
        let polyak = S::lit(d.f64()?);
        let target_entropy = S::lit(d.f64()?);
        let max_grad_norm = if d.bool()? { Some(S::lit(d.f64()?)) } else { None };
        let policy = get_multihead(d)?;
        let q = [get_multihead(d)?, get_multihead(d)?];
        let q_target = [get_multihead(d)?, get_multihead(d)?];
        let (_, log_alpha) = get_tensor(d, 1)?;
        let policy_adam = get_adam(d)?;
        let q_adam = [get_adam(d)?, get_adam(d)?];
        let alpha_adam = get_adam(d)?;
        let heads = tasks.len();
        let consistent = policy.n_heads() == heads
            && q.iter().chain(&q_target).all(|n| n.n_heads() == heads)
            && log_alpha.len() == heads
            && policy.in_dim() == obs_dim
            && policy.head_out_dim() == 2 * act_dim
            && q[0].in_dim() == obs_dim + act_dim;
        if !consistent {
            return Err(d.error("intention model record is inconsistent"));
        }
        Ok(Self {
            tasks,
            obs_dim,
            act_dim,
            policy,
            q,
            q_target,
            log_alpha,
            policy_adam,
            q_adam,
            alpha_adam,
            gamma,
            polyak,
            target_entropy,
            max_grad_norm,
        })
    }
}
