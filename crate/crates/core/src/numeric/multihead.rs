use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::mlp::{Activation, Mlp, MlpCache, MlpGrads, ParamSet};
use crate::numeric::{Scalar, Tensor};

/// Shared trunk followed by one head per task.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadNet<S> {
    pub trunk: Mlp<S>,
    pub heads: Vec<Mlp<S>>,
}

/// Sends a contiguous block of input rows through one head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub head: usize,
    pub rows: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct MultiHeadCache<S> {
    trunk: MlpCache<S>,
    routes: Vec<Route>,
    heads: Vec<MlpCache<S>>,
}

impl<S> MultiHeadCache<S> {
    /// Output of the `i`-th route, row-major `(rows, head_out)`.
    pub fn output(&self, i: usize) -> &[S] {
        self.heads[i].output()
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadGrads<S> {
    pub trunk: MlpGrads<S>,
    pub heads: Vec<MlpGrads<S>>,
}

impl<S: Scalar> MultiHeadGrads<S> {
    pub fn zeros_like(net: &MultiHeadNet<S>) -> Self {
        Self {
            trunk: MlpGrads::zeros_like(&net.trunk),
            heads: net.heads.iter().map(MlpGrads::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.trunk.add_assign(&other.trunk);
        for (a, b) in self.heads.iter_mut().zip(&other.heads) {
            a.add_assign(b);
        }
    }
}

/// Layer layout shared by every per-task head in a family.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl<S: Scalar> MultiHeadNet<S> {
    pub fn new<R: Rng + ?Sized>(
        trunk_sizes: &[usize],
        trunk_acts: &[Activation],
        head: &HeadSpec,
        n_heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let trunk = Mlp::new(trunk_sizes, trunk_acts, rng)?;
        if head.sizes.first() != trunk_sizes.last() {
            return Err(Error::Config(
                "head input width must equal trunk output width".into(),
            ));
        }
        let heads = (0..n_heads)
            .map(|_| Mlp::new(&head.sizes, &head.activations, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { trunk, heads })
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn in_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    pub fn head_out_dim(&self) -> usize {
        self.heads.first().map(|h| h.out_dim()).unwrap_or(0)
    }

    /// Appends a freshly initialised head with the same layout as head 0.
    pub fn push_head<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let template = self
            .heads
            .first()
            .ok_or_else(|| Error::Config("cannot infer head layout from zero heads".into()))?;
        let mut sizes = vec![template.in_dim()];
        sizes.extend(template.layers.iter().map(|l| l.out_dim));
        let acts: Vec<_> = template.layers.iter().map(|l| l.activation).collect();
        let head = Mlp::new(&sizes, &acts, rng)?;
        self.heads.push(head);
        Ok(())
    }

    /// Every head over every row.
    pub fn all_routes(&self, rows: usize) -> Vec<Route> {
        (0..self.n_heads())
            .map(|head| Route { head, rows: 0..rows })
            .collect()
    }

    pub fn forward_routed(&self, input: &Tensor<S>, routes: &[Route]) -> Result<MultiHeadCache<S>> {
        let trunk = self.trunk.forward_cached(input)?;
        let features = trunk.output();
        let width = self.trunk.out_dim();
        let mut heads = Vec::with_capacity(routes.len());
        for route in routes {
            let head = self
                .heads
                .get(route.head)
                .ok_or_else(|| Error::Config(format!("no head {}", route.head)))?;
            if route.rows.end > input.rows() {
                return Err(Error::Shape(format!(
                    "route rows {:?} exceed batch of {}",
                    route.rows,
                    input.rows()
                )));
            }
            let block = &features[route.rows.start * width..route.rows.end * width];
            heads.push(head.forward_cached_raw(block, route.rows.len()));
        }
        Ok(MultiHeadCache {
            trunk,
            routes: routes.to_vec(),
            heads,
        })
    }

    /// Gradients of `sum_i <upstream[i], output(i)>`; returns the input gradient too.
    pub fn backward(
        &self,
        cache: &MultiHeadCache<S>,
        upstream: &[Vec<S>],
    ) -> Result<(MultiHeadGrads<S>, Vec<S>)> {
        if upstream.len() != cache.routes.len() {
            return Err(Error::Shape(format!(
                "{} upstream blocks for {} routes",
                upstream.len(),
                cache.routes.len()
            )));
        }
        let mut grads = MultiHeadGrads::zeros_like(self);
        let width = self.trunk.out_dim();
        let mut feature_grad = vec![S::zero(); cache.trunk.rows * width];
        for ((route, hc), up) in cache.routes.iter().zip(&cache.heads).zip(upstream) {
            let head = &self.heads[route.head];
            let g = head.backward_accumulate(hc, up, &mut grads.heads[route.head])?;
            let dst = &mut feature_grad[route.rows.start * width..route.rows.end * width];
            dst.iter_mut().zip(&g).for_each(|(d, &x)| *d = *d + x);
        }
        let input_grad = self
            .trunk
            .backward_accumulate(&cache.trunk, &feature_grad, &mut grads.trunk)?;
        Ok((grads, input_grad))
    }

    pub fn polyak_from(&mut self, online: &Self, rho: S) {
        self.trunk.polyak_from(&online.trunk, rho);
        for (t, o) in self.heads.iter_mut().zip(&online.heads) {
            t.polyak_from(o, rho);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.trunk.is_finite() && self.heads.iter().all(|h| h.is_finite())
    }
}

impl<S> ParamSet<S> for MultiHeadNet<S> {
    fn param_slices(&self) -> Vec<&[S]> {
        let mut v = self.trunk.param_slices();
        for h in &self.heads {
            v.extend(h.param_slices());
        }
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        let mut v = self.trunk.param_slices_mut();
        for h in &mut self.heads {
            v.extend(h.param_slices_mut());
        }
        v
    }
}

impl<S> ParamSet<S> for MultiHeadGrads<S> {
    fn param_slices(&self) -> Vec<&[S]> {
        let mut v = self.trunk.param_slices();
        for h in &self.heads {
            v.extend(h.param_slices());
        }
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        let mut v = self.trunk.param_slices_mut();
        for h in &mut self.heads {
            v.extend(h.param_slices_mut());
        }
        v
    }
}
