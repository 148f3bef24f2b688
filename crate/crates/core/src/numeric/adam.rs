use crate::error::{Error, Result};
use crate::numeric::mlp::ParamSet;
use crate::numeric::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam with bias correction and optional global-norm clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub step: u64,
    pub lr: S,
    pub first: Vec<Vec<S>>,
    pub second: Vec<Vec<S>>,
}

/// Global L2 norm across every slice.
pub fn global_norm<S: Scalar, P: ParamSet<S> + ?Sized>(grads: &P) -> S {
    grads
        .param_slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|&g| g * g)
        .sum::<S>()
        .sqrt()
}

impl<S: Scalar> AdamState<S> {
    pub fn new<P: ParamSet<S> + ?Sized>(params: &P, lr: S) -> Self {
        let zeros: Vec<Vec<S>> = params
            .param_slices()
            .iter()
            .map(|s| vec![S::zero(); s.len()])
            .collect();
        Self {
            step: 0,
            lr,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Extends the moment buffers with zeros after parameters were appended
    /// (new heads or output units). Existing entries are untouched.
    pub fn grow_to<P: ParamSet<S> + ?Sized>(&mut self, params: &P) -> Result<()> {
        let slices = params.param_slices();
        if slices.len() < self.first.len() {
            return Err(Error::Shape("parameter set shrank".into()));
        }
        for (i, s) in slices.iter().enumerate() {
            if i >= self.first.len() {
                self.first.push(vec![S::zero(); s.len()]);
                self.second.push(vec![S::zero(); s.len()]);
                continue;
            }
            if s.len() < self.first[i].len() {
                return Err(Error::Shape(format!("parameter slice {i} shrank")));
            }
            self.first[i].resize(s.len(), S::zero());
            self.second[i].resize(s.len(), S::zero());
        }
        Ok(())
    }

    fn check<P: ParamSet<S> + ?Sized, G: ParamSet<S> + ?Sized>(
        &self,
        params: &P,
        grads: &G,
    ) -> Result<()> {
        let p = params.param_slices();
        let g = grads.param_slices();
        if p.len() != g.len() || p.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "adam: {} parameter slices, {} gradient slices, {} moment slices",
                p.len(),
                g.len(),
                self.first.len()
            )));
        }
        for (i, ((a, b), m)) in p.iter().zip(&g).zip(&self.first).enumerate() {
            if a.len() != b.len() || a.len() != m.len() {
                return Err(Error::Shape(format!("adam: slice {i} lengths differ")));
            }
        }
        Ok(())
    }

    /// One update. Returns the gradient norm before clipping.
    pub fn step<P: ParamSet<S> + ?Sized, G: ParamSet<S> + ?Sized>(
        &mut self,
        params: &mut P,
        grads: &G,
        max_norm: Option<S>,
    ) -> Result<S> {
        self.check(params, grads)?;
        let norm = global_norm(grads);
        let scale = match max_norm {
            Some(max) if norm > max => max / norm,
            _ => S::one(),
        };
        self.step += 1;
        let b1 = S::lit(BETA1);
        let b2 = S::lit(BETA2);
        let eps = S::lit(EPS);
        let t = self.step as i32;
        let c1 = S::one() - b1.powi(t);
        let c2 = S::one() - b2.powi(t);
        let lr = self.lr;
        let g = grads.param_slices();
        for (((p, g), m), v) in params
            .param_slices_mut()
            .into_iter()
            .zip(g)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                let gi = g[i] * scale;
                m[i] = b1 * m[i] + (S::one() - b1) * gi;
                v[i] = b2 * v[i] + (S::one() - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(norm)
    }
}

/// Rescales gradients in place so their global norm is at most `max_norm`.
pub fn clip_global_norm<S: Scalar, P: ParamSet<S> + ?Sized>(grads: &mut P, max_norm: S) -> S {
    let norm = global_norm(grads);
    if norm > max_norm {
        let k = max_norm / norm;
        for s in grads.param_slices_mut() {
            s.iter_mut().for_each(|g| *g = *g * k);
        }
    }
    norm
}
