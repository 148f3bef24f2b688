//! Per-task discriminators sharing one tanh trunk; each head's sigmoid output
//! is that task's reward.

use rand::Rng;

use crate::data::{Decoder, Encoder};
use crate::env::TaskId;
use crate::error::{Error, Result};
use crate::numeric::{
    routed_input_gradient_penalty, sigmoid, softplus, Activation, AdamState, Mlp, MlpGrads, Scalar,
    Tensor,
};
use crate::record::{get_adam, get_mlp, put_adam, put_mlp};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub width: usize,
    pub lr: f64,
    pub lambda_gp: f64,
    pub max_grad_norm: Option<f64>,
    /// Every input row is multiplied by this before the network.
    pub input_scale: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            width: 256,
            lr: 3e-4,
            lambda_gp: 10.0,
            max_grad_norm: Some(10.0),
            input_scale: 1.0,
        }
    }
}

/// Per-head terms of one training step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscriminatorLoss {
    /// Policy-side plus expert-side mean BCE.
    pub bce: Vec<f64>,
    /// Mean `(||grad|| - 1)^2` over the interpolates, before `lambda_gp`.
    pub penalty: Vec<f64>,
    /// Mean input-gradient norm at the interpolates.
    pub interp_grad_norm: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorBank<S> {
    tasks: Vec<TaskId>,
    net: Mlp<S>,
    adam: AdamState<S>,
    lambda_gp: S,
    max_grad_norm: Option<S>,
    input_scale: f64,
}

/// Numerically stable `-log sigmoid(-z)`, the BCE of label 0.
fn bce_zero<S: Scalar>(z: S) -> S {
    softplus(z)
}

impl<S: Scalar> DiscriminatorBank<S> {
    pub fn new<R: Rng + ?Sized>(
        tasks: &[TaskId],
        in_dim: usize,
        cfg: &DiscriminatorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let w = cfg.width;
        let net = Mlp::new(
            &[in_dim, w, w, tasks.len()],
            &[Activation::Tanh, Activation::Tanh, Activation::Linear],
            rng,
        )?;
        Self::from_net(tasks, net, cfg)
    }

    pub fn from_net(tasks: &[TaskId], net: Mlp<S>, cfg: &DiscriminatorConfig) -> Result<Self> {
        if tasks.is_empty() || net.out_dim() != tasks.len() {
            return Err(Error::Config(format!(
                "{} tasks for a network with {} logits",
                tasks.len(),
                net.out_dim()
            )));
        }
        let adam = AdamState::new(&net, S::lit(cfg.lr));
        Ok(Self {
            tasks: tasks.to_vec(),
            net,
            adam,
            lambda_gp: S::lit(cfg.lambda_gp),
            max_grad_norm: cfg.max_grad_norm.map(S::lit),
            input_scale: cfg.input_scale,
        })
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.tasks
    }

    pub fn net(&self) -> &Mlp<S> {
        &self.net
    }

    pub fn in_dim(&self) -> usize {
        self.net.in_dim()
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    fn scaled(&self, rows: &[f64]) -> Vec<f64> {
        rows.iter().map(|x| x * self.input_scale).collect()
    }

    pub fn head_index(&self, task: TaskId) -> Result<usize> {
        self.tasks
            .iter()
            .position(|&t| t == task)
            .ok_or(Error::UnknownTask(task))
    }

    /// Logits for `state‖action` rows, `(rows, heads)`.
    pub fn logits(&self, rows: &[f64]) -> Result<Tensor<S>> {
        let d = self.in_dim();
        if rows.len() % d != 0 {
            return Err(Error::Shape(format!("{} values are not rows of {d}", rows.len())));
        }
        self.net.forward(&Tensor::from_f64(rows.len() / d, d, &self.scaled(rows))?)
    }

    /// Rewards of every head for each row, `(rows, heads)`.
    pub fn rewards(&self, rows: &[f64]) -> Result<Tensor<S>> {
        Ok(self.logits(rows)?.map(sigmoid))
    }

    pub fn reward(&self, task: TaskId, state: &[f64], action: &[f64]) -> Result<f64> {
        let h = self.head_index(task)?;
        let row: Vec<f64> = state.iter().chain(action).copied().collect();
        Ok(self.rewards(&row)?.data()[h].to_f64_lossy())
    }

    /// One Adam step on the summed BCE of every head plus the gradient
    /// penalty. The policy batch is shared; `expert[h]` feeds head `h`.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        policy: &[f64],
        expert: &[Vec<f64>],
        rng: &mut R,
    ) -> Result<DiscriminatorLoss> {
        let d = self.in_dim().max(1);
        let n_pol = policy.len() / d;
        let n_interp: usize = expert.iter().map(|e| n_pol.min(e.len() / d)).sum();
        let eps: Vec<f64> = (0..n_interp).map(|_| rng.random()).collect();
        let (report, grads) = self.loss_and_gradients(policy, expert, &eps)?;
        self.adam.step(&mut self.net, &grads, self.max_grad_norm)?;
        Ok(report)
    }

    /// Loss report and parameter gradients of the joint objective, with the
    /// interpolation coefficients given explicitly (head by head, row by row).
    pub fn loss_and_gradients(
        &self,
        policy: &[f64],
        expert: &[Vec<f64>],
        eps: &[f64],
    ) -> Result<(DiscriminatorLoss, MlpGrads<S>)> {
        let d = self.in_dim();
        let heads = self.tasks.len();
        if expert.len() != heads {
            return Err(Error::Shape(format!(
                "{} expert batches for {heads} heads",
                expert.len()
            )));
        }
        if policy.is_empty() {
            return Err(Error::EmptySource("policy batch"));
        }
        if expert.iter().any(|e| e.is_empty()) {
            return Err(Error::EmptySource("expert batch"));
        }
        if policy.len() % d != 0 || expert.iter().any(|e| e.len() % d != 0) {
            return Err(Error::Shape(format!("batches are not rows of width {d}")));
        }
        // the penalty is taken with respect to the scaled inputs
        let policy = self.scaled(policy);
        let expert: Vec<Vec<f64>> = expert.iter().map(|e| self.scaled(e)).collect();
        let n_pol = policy.len() / d;
        let mut stacked = policy.clone();
        let mut offsets = Vec::with_capacity(heads);
        for e in &expert {
            offsets.push(stacked.len() / d);
            stacked.extend_from_slice(e);
        }
        let total_rows = stacked.len() / d;
        let x = Tensor::from_f64(total_rows, d, &stacked)?;
        let cache = self.net.forward_cached(&x)?;
        let z = cache.output();

        let mut upstream = vec![S::zero(); total_rows * heads];
        let mut report = DiscriminatorLoss {
            bce: vec![0.0; heads],
            penalty: vec![0.0; heads],
            interp_grad_norm: vec![0.0; heads],
            total: 0.0,
        };
        let inv_pol = S::one() / S::lit(n_pol as f64);
        for h in 0..heads {
            let mut loss = S::zero();
            for i in 0..n_pol {
                let zi = z[i * heads + h];
                loss = loss + bce_zero(zi) * inv_pol;
                upstream[i * heads + h] = sigmoid(zi) * inv_pol;
            }
            let n_exp = expert[h].len() / d;
            let inv_exp = S::one() / S::lit(n_exp as f64);
            for i in offsets[h]..offsets[h] + n_exp {
                let zi = z[i * heads + h];
                loss = loss + bce_zero(-zi) * inv_exp;
                upstream[i * heads + h] = (sigmoid(zi) - S::one()) * inv_exp;
            }
            report.bce[h] = loss.to_f64_lossy();
        }
        let (mut grads, _) = self.net.backward(&cache, &upstream)?;

        // interpolates between matched expert/policy rows
        let mut interp = Vec::new();
        let mut eps = eps.iter();
        let mut head_of = Vec::new();
        let mut weights = Vec::new();
        let mut counts = Vec::with_capacity(heads);
        for h in 0..heads {
            let m = n_pol.min(expert[h].len() / d);
            counts.push(m);
            let w = self.lambda_gp / S::lit(m as f64);
            for i in 0..m {
                let t = *eps
                    .next()
                    .ok_or_else(|| Error::Shape("too few interpolation coefficients".into()))?;
                let e = &expert[h][i * d..(i + 1) * d];
                let p = &policy[i * d..(i + 1) * d];
                interp.extend(e.iter().zip(p).map(|(&a, &b)| t * a + (1.0 - t) * b));
                head_of.push(h);
                weights.push(w);
            }
        }
        let xi = Tensor::from_f64(head_of.len(), d, &interp)?;
        let pen = routed_input_gradient_penalty(&self.net, &xi, &head_of, &weights)?;
        grads.add_assign(&pen.grads);
        let mut row = 0;
        for h in 0..heads {
            let (mut sq, mut nsum) = (0.0, 0.0);
            for &g in &pen.norms[row..row + counts[h]] {
                let g = g.to_f64_lossy();
                sq += (g - 1.0) * (g - 1.0);
                nsum += g;
            }
            report.penalty[h] = sq / counts[h] as f64;
            report.interp_grad_norm[h] = nsum / counts[h] as f64;
            row += counts[h];
        }
        report.total = report.bce.iter().sum::<f64>()
            + self.lambda_gp.to_f64_lossy() * report.penalty.iter().sum::<f64>();
        Ok((report, grads))
    }

    /// Adds a freshly initialised head; existing heads are untouched.
    pub fn add_task<R: Rng + ?Sized>(&mut self, task: TaskId, rng: &mut R) -> Result<()> {
        if self.tasks.contains(&task) {
            return Err(Error::Config(format!("discriminator already has {task}")));
        }
        let last = self.net.layers.last_mut().expect("non-empty network");
        last.append_outputs(1, rng);
        self.adam.grow_to(&self.net)?;
        self.tasks.push(task);
        Ok(())
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.u32(self.tasks.len() as u32);
        for t in &self.tasks {
            e.u32(t.code());
        }
        e.f64(self.lambda_gp.to_f64_lossy());
        match self.max_grad_norm {
            Some(m) => {
                e.bool(true);
                e.f64(m.to_f64_lossy());
            }
            None => e.bool(false),
        }
        e.f64(self.input_scale);
        put_mlp(e, &self.net);
        put_adam(e, &self.adam);
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let tasks = decode_tasks(d)?;
        let lambda_gp = S::lit(d.f64()?);
        let max_grad_norm = if d.bool()? { Some(S::lit(d.f64()?)) } else { None };
        let input_scale = d.f64()?;
        let net: Mlp<S> = get_mlp(d)?;
        let adam = get_adam(d)?;
        if net.out_dim() != tasks.len() || adam.first.len() != net.layers.len() * 2 {
            return Err(d.error("discriminator record is inconsistent"));
        }
        Ok(Self {
            tasks,
            net,
            adam,
            lambda_gp,
            max_grad_norm,
            input_scale,
        })
    }
}

pub(crate) fn decode_tasks(d: &mut Decoder<'_>) -> Result<Vec<TaskId>> {
    let n = d.u32()? as usize;
    let mut tasks = Vec::with_capacity(n.min(16));
    for _ in 0..n {
        let c = d.u32()?;
        tasks.push(TaskId::from_code(c).ok_or_else(|| d.error(format!("unknown task id {c}")))?);
    }
    Ok(tasks)
}
