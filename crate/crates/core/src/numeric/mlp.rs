//! Fully connected networks with hand-written reverse mode.
//!
//! Weights are stored row-major with shape `(out, in)` so that appending an
//! output unit (a new task head) only appends to the parameter vectors.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::tensor::{matmul, Mat};
use crate::numeric::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Relu => z.max(S::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    pub fn derivative_from_output<S: Scalar>(self, a: S) -> S {
        match self {
            Activation::Relu => {
                if a > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => S::one() - a * a,
            Activation::Linear => S::one(),
        }
    }

    /// Second derivative through the output; only smooth activations qualify.
    pub fn second_derivative_from_output<S: Scalar>(self, a: S) -> Option<S> {
        match self {
            Activation::Relu => None,
            Activation::Tanh => Some(-S::lit(2.0) * a * (S::one() - a * a)),
            Activation::Linear => Some(S::zero()),
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Linear => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            weights: vec![S::zero(); in_dim * out_dim],
            bias: vec![S::zero(); out_dim],
        }
    }

    /// Uniform `(-1/sqrt(in), 1/sqrt(in))` for weights and bias alike.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw = || S::lit(rng.random_range(-bound..bound));
        let weights = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Self {
            in_dim,
            out_dim,
            activation,
            weights,
            bias,
        }
    }

    /// Appends freshly initialised output units.
    pub fn append_outputs<R: Rng + ?Sized>(&mut self, extra: usize, rng: &mut R) {
        let fresh = Layer::<S>::init(self.in_dim, extra, self.activation, rng);
        self.weights.extend(fresh.weights);
        self.bias.extend(fresh.bias);
        self.out_dim += extra;
    }

    fn forward_into(&self, input: &[S], rows: usize, out: &mut Vec<S>) {
        out.clear();
        out.resize(rows * self.out_dim, S::zero());
        matmul(
            Mat::new(input, rows, self.in_dim),
            Mat::new(&self.weights, self.out_dim, self.in_dim).t(),
            out,
            false,
        );
        for r in 0..rows {
            let row = &mut out[r * self.out_dim..(r + 1) * self.out_dim];
            for (z, &b) in row.iter_mut().zip(&self.bias) {
                *z = self.activation.apply(*z + b);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

/// Gradients congruent with an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<S> {
    pub layers: Vec<LayerGrads<S>>,
}

impl<S: Scalar> MlpGrads<S> {
    pub fn zeros_like(net: &Mlp<S>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![S::zero(); l.weights.len()],
                    bias: vec![S::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, &y)| *x = *x + y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, &y)| *x = *x + y);
        }
    }

    pub fn scale(&mut self, k: S) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x = *x * k);
            l.bias.iter_mut().for_each(|x| *x = *x * k);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<S> {
    pub layers: Vec<Layer<S>>,
}

/// Activations retained by [`Mlp::forward_cached`]; `values[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpCache<S> {
    pub rows: usize,
    pub values: Vec<Vec<S>>,
}

impl<S> MlpCache<S> {
    pub fn output(&self) -> &[S] {
        self.values.last().expect("cache holds at least the input")
    }
}

impl<S: Scalar> Mlp<S> {
    /// `sizes = [in, h1, ..., out]`, one activation per layer.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::Config(format!(
                "mlp needs sizes.len() == activations.len() + 1, got {} and {}",
                sizes.len(),
                activations.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Config("mlp layer widths must be > 0".into()));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| Layer::init(w[0], w[1], act, rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer<S>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("mlp needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Config(format!(
                    "layer dims disagree: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        for l in &layers {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Config("layer parameter length mismatch".into()));
            }
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    fn check_input(&self, input: &Tensor<S>) -> Result<()> {
        if input.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "network expects input width {}, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(input)?;
        let rows = input.rows();
        let mut cur = input.data().to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, rows, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Tensor::from_rows(rows, self.out_dim(), cur)
    }

    pub fn forward_cached(&self, input: &Tensor<S>) -> Result<MlpCache<S>> {
        self.check_input(input)?;
        Ok(self.forward_cached_raw(input.data(), input.rows()))
    }

    pub(crate) fn forward_cached_raw(&self, input: &[S], rows: usize) -> MlpCache<S> {
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let mut out = Vec::new();
            layer.forward_into(values.last().unwrap(), rows, &mut out);
            values.push(out);
        }
        MlpCache { rows, values }
    }

    /// Gradients of `L = sum(upstream * forward(input))`.
    pub fn backward(&self, cache: &MlpCache<S>, upstream: &[S]) -> Result<(MlpGrads<S>, Vec<S>)> {
        let mut grads = MlpGrads::zeros_like(self);
        let input_grad = self.backward_accumulate(cache, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like [`Mlp::backward`] but adds into existing gradients.
    pub fn backward_accumulate(
        &self,
        cache: &MlpCache<S>,
        upstream: &[S],
        grads: &mut MlpGrads<S>,
    ) -> Result<Vec<S>> {
        let rows = cache.rows;
        if upstream.len() != rows * self.out_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries, expected {}x{}",
                upstream.len(),
                rows,
                self.out_dim()
            )));
        }
        let mut g = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &cache.values[l + 1];
            let input = &cache.values[l];
            for (gz, &a) in g.iter_mut().zip(out) {
                *gz = *gz * layer.activation.derivative_from_output(a);
            }
            let lg = &mut grads.layers[l];
            // dW += dZ^T A_in
            matmul(
                Mat::new(&g, rows, layer.out_dim).t(),
                Mat::new(input, rows, layer.in_dim),
                &mut lg.weights,
                true,
            );
            for r in 0..rows {
                for (b, &x) in lg
                    .bias
                    .iter_mut()
                    .zip(&g[r * layer.out_dim..(r + 1) * layer.out_dim])
                {
                    *b = *b + x;
                }
            }
            let mut prev = vec![S::zero(); rows * layer.in_dim];
            matmul(
                Mat::new(&g, rows, layer.out_dim),
                Mat::new(&layer.weights, layer.out_dim, layer.in_dim),
                &mut prev,
                false,
            );
            g = prev;
        }
        Ok(g)
    }

    /// `self <- (1 - rho) self + rho online`.
    pub fn polyak_from(&mut self, online: &Self, rho: S) {
        let keep = S::one() - rho;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.weights
                .iter_mut()
                .zip(&o.weights)
                .for_each(|(t, &o)| *t = keep * *t + rho * o);
            t.bias
                .iter_mut()
                .zip(&o.bias)
                .for_each(|(t, &o)| *t = keep * *t + rho * o);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }
}

/// Anything exposing its parameters as an ordered list of flat slices.
pub trait ParamSet<S> {
    fn param_slices(&self) -> Vec<&[S]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [S]>;
}

impl<S> ParamSet<S> for Mlp<S> {
    fn param_slices(&self) -> Vec<&[S]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl<S> ParamSet<S> for MlpGrads<S> {
    fn param_slices(&self) -> Vec<&[S]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl<S> ParamSet<S> for Vec<S> {
    fn param_slices(&self) -> Vec<&[S]> {
        vec![self.as_slice()]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        vec![self.as_mut_slice()]
    }
}
