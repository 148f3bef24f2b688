//! Tanh-squashed diagonal Gaussian policy head.
//!
//! The head output of width `2 * act_dim` splits into a mean `mu` and a
//! pre-variance `p`; the variance is `softplus(p) + 1e-7`.

use crate::error::{Error, Result};
use crate::numeric::Scalar;

pub const VARIANCE_EPS: f64 = 1e-7;
pub const LOG_PROB_EPS: f64 = 1e-6;

pub fn softplus<S: Scalar>(x: S) -> S {
    x.max(S::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// `sigma = sqrt(softplus(p) + 1e-7)`.
pub fn std_from_pre_variance<S: Scalar>(p: S) -> S {
    (softplus(p) + S::lit(VARIANCE_EPS)).sqrt()
}

#[derive(Debug, Clone)]
pub struct GaussianSample<S> {
    pub rows: usize,
    pub act_dim: usize,
    /// `tanh(u)`, row-major `(rows, act_dim)`.
    pub action: Vec<S>,
    pub log_prob: Vec<S>,
    pub pre_tanh: Vec<S>,
    pub std: Vec<S>,
    pub noise: Vec<S>,
}

/// Reparameterised sample `a = tanh(mu + sigma * noise)` with its log-density.
pub fn gaussian_head<S: Scalar>(
    head_out: &[S],
    rows: usize,
    act_dim: usize,
    noise: &[S],
) -> Result<GaussianSample<S>> {
    if head_out.len() != rows * 2 * act_dim || noise.len() != rows * act_dim {
        return Err(Error::Shape(format!(
            "gaussian head: {} outputs and {} noise values for {rows} rows of {act_dim} actions",
            head_out.len(),
            noise.len()
        )));
    }
    let half_log_2pi = S::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    let half = S::lit(0.5);
    let lp_eps = S::lit(LOG_PROB_EPS);
    let n = rows * act_dim;
    let mut sample = GaussianSample {
        rows,
        act_dim,
        action: Vec::with_capacity(n),
        log_prob: Vec::with_capacity(rows),
        pre_tanh: Vec::with_capacity(n),
        std: Vec::with_capacity(n),
        noise: noise.to_vec(),
    };
    for r in 0..rows {
        let out = &head_out[r * 2 * act_dim..(r + 1) * 2 * act_dim];
        let mut lp = S::zero();
        for i in 0..act_dim {
            let mu = out[i];
            let sigma = std_from_pre_variance(out[act_dim + i]);
            let eps = noise[r * act_dim + i];
            let u = mu + sigma * eps;
            let a = u.tanh();
            lp = lp - half * eps * eps - sigma.ln() - half_log_2pi
                - (S::one() - a * a + lp_eps).ln();
            sample.action.push(a);
            sample.pre_tanh.push(u);
            sample.std.push(sigma);
        }
        sample.log_prob.push(lp);
    }
    Ok(sample)
}

/// Deterministic action `tanh(mu)`.
pub fn mean_action<S: Scalar>(head_out: &[S], rows: usize, act_dim: usize) -> Vec<S> {
    (0..rows)
        .flat_map(|r| {
            head_out[r * 2 * act_dim..r * 2 * act_dim + act_dim]
                .iter()
                .map(|m| m.tanh())
        })
        .collect()
}

/// Pulls gradients on the action and log-probability back onto the head output.
pub fn gaussian_backward<S: Scalar>(
    sample: &GaussianSample<S>,
    head_out: &[S],
    d_action: &[S],
    d_log_prob: &[S],
) -> Vec<S> {
    let act_dim = sample.act_dim;
    let two = S::lit(2.0);
    let lp_eps = S::lit(LOG_PROB_EPS);
    let mut d_out = vec![S::zero(); head_out.len()];
    for r in 0..sample.rows {
        let dl = d_log_prob[r];
        for i in 0..act_dim {
            let k = r * act_dim + i;
            let a = sample.action[k];
            let one_minus = S::one() - a * a;
            let sigma = sample.std[k];
            // d/du of -ln(1 - tanh(u)^2 + eps)
            let corr = two * a * one_minus / (one_minus + lp_eps);
            let du = d_action[k] * one_minus + dl * corr;
            let d_sigma = du * sample.noise[k] - dl / sigma;
            let p = head_out[r * 2 * act_dim + act_dim + i];
            d_out[r * 2 * act_dim + i] = du;
            d_out[r * 2 * act_dim + act_dim + i] = d_sigma * sigmoid(p) / (two * sigma);
        }
    }
    d_out
}
