//! Input-gradient norm penalty with exact parameter gradients.
//!
//! The input gradient of a smooth network is itself computed by a backward
//! pass; the penalty's parameter gradient is obtained by reverse-mode through
//! that backward pass ("double backprop"). Only `tanh` and linear layers have
//! the second derivatives this needs.

use crate::error::{Error, Result};
use crate::numeric::mlp::{Mlp, MlpGrads};
use crate::numeric::tensor::{matmul, Mat};
use crate::numeric::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct PenaltyOutput<S> {
    /// `sum_i weight_i * (||grad_x out_{head_i}(x_i)|| - 1)^2`.
    pub penalty: S,
    /// Per-row input-gradient norms.
    pub norms: Vec<S>,
    pub grads: MlpGrads<S>,
}

/// Mean over the batch of `(||grad_x D(x)|| - 1)^2` for a scalar-output `D`.
pub fn input_gradient_norm_penalty<S: Scalar>(
    net: &Mlp<S>,
    x_interp: &Tensor<S>,
) -> Result<(S, MlpGrads<S>)> {
    if net.out_dim() != 1 {
        return Err(Error::Config(format!(
            "scalar penalty needs a single output, network has {}",
            net.out_dim()
        )));
    }
    let n = x_interp.rows();
    let heads = vec![0; n];
    let w = S::one() / S::lit(n as f64);
    let weights = vec![w; n];
    let out = routed_input_gradient_penalty(net, x_interp, &heads, &weights)?;
    Ok((out.penalty, out.grads))
}

/// Penalty where row `i` differentiates output column `heads[i]` and carries
/// weight `weights[i]`.
pub fn routed_input_gradient_penalty<S: Scalar>(
    net: &Mlp<S>,
    x: &Tensor<S>,
    heads: &[usize],
    weights: &[S],
) -> Result<PenaltyOutput<S>> {
    for layer in &net.layers {
        if layer.activation.second_derivative_from_output(S::zero()).is_none() {
            return Err(Error::Config(format!(
                "gradient penalty needs smooth activations, found {:?}",
                layer.activation
            )));
        }
    }
    let rows = x.rows();
    if heads.len() != rows || weights.len() != rows {
        return Err(Error::Shape(format!(
            "{rows} rows but {} head indices and {} weights",
            heads.len(),
            weights.len()
        )));
    }
    let out_dim = net.out_dim();
    if let Some(&h) = heads.iter().find(|&&h| h >= out_dim) {
        return Err(Error::Shape(format!("head {h} outside {out_dim} outputs")));
    }

    let cache = net.forward_cached(x)?;
    let n_layers = net.layers.len();
    let dims: Vec<usize> = std::iter::once(net.in_dim())
        .chain(net.layers.iter().map(|l| l.out_dim))
        .collect();

    // slopes[l] = f'(z) of layer l (0-based), shaped like its output.
    let slopes: Vec<Vec<S>> = net
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            cache.values[l + 1]
                .iter()
                .map(|&a| layer.activation.derivative_from_output(a))
                .collect()
        })
        .collect();

    // Inner backward pass from the selected output to the input.
    // deltas[l]: gradient w.r.t. z of layer l; back_in[l]: W_{l+1}^T delta_{l+1}
    // restricted to rows, i.e. the incoming gradient on layer l's output.
    let mut deltas: Vec<Vec<S>> = vec![Vec::new(); n_layers];
    let mut back_in: Vec<Vec<S>> = vec![Vec::new(); n_layers];
    let mut selector = vec![S::zero(); rows * out_dim];
    for (r, &h) in heads.iter().enumerate() {
        selector[r * out_dim + h] = S::one();
    }
    back_in[n_layers - 1] = selector;
    for l in (0..n_layers).rev() {
        deltas[l] = back_in[l]
            .iter()
            .zip(&slopes[l])
            .map(|(&e, &s)| e * s)
            .collect();
        if l > 0 {
            let mut e = vec![S::zero(); rows * dims[l]];
            matmul(
                Mat::new(&deltas[l], rows, dims[l + 1]),
                Mat::new(&net.layers[l].weights, dims[l + 1], dims[l]),
                &mut e,
                false,
            );
            back_in[l - 1] = e;
        }
    }
    let mut input_grad = vec![S::zero(); rows * dims[0]];
    matmul(
        Mat::new(&deltas[0], rows, dims[1]),
        Mat::new(&net.layers[0].weights, dims[1], dims[0]),
        &mut input_grad,
        false,
    );

    let two = S::lit(2.0);
    let mut penalty = S::zero();
    let mut norms = Vec::with_capacity(rows);
    let mut g_bar = vec![S::zero(); rows * dims[0]];
    for r in 0..rows {
        let g = &input_grad[r * dims[0]..(r + 1) * dims[0]];
        let norm = g.iter().map(|&v| v * v).sum::<S>().sqrt();
        let gap = norm - S::one();
        penalty = penalty + weights[r] * gap * gap;
        norms.push(norm);
        if norm > S::zero() {
            let k = two * weights[r] * gap / norm;
            for (dst, &v) in g_bar[r * dims[0]..(r + 1) * dims[0]].iter_mut().zip(g) {
                *dst = k * v;
            }
        }
    }

    let mut grads = MlpGrads::zeros_like(net);

    // Reverse through the inner backward pass.
    // input_grad = delta_0 W_0  =>  W_0 += delta_0^T g_bar, delta_bar_0 = g_bar W_0^T
    matmul(
        Mat::new(&deltas[0], rows, dims[1]).t(),
        Mat::new(&g_bar, rows, dims[0]),
        &mut grads.layers[0].weights,
        true,
    );
    let mut delta_bar = vec![S::zero(); rows * dims[1]];
    matmul(
        Mat::new(&g_bar, rows, dims[0]),
        Mat::new(&net.layers[0].weights, dims[1], dims[0]).t(),
        &mut delta_bar,
        false,
    );
    // slope_bar[l]: adjoint of f'(z_l).
    let mut slope_bar: Vec<Vec<S>> = vec![Vec::new(); n_layers];
    for l in 0..n_layers {
        // delta_l = back_in_l * slope_l
        let back_bar: Vec<S> = delta_bar
            .iter()
            .zip(&slopes[l])
            .map(|(&d, &s)| d * s)
            .collect();
        slope_bar[l] = delta_bar
            .iter()
            .zip(&back_in[l])
            .map(|(&d, &e)| d * e)
            .collect();
        if l + 1 < n_layers {
            // back_in_l = delta_{l+1} W_{l+1}
            matmul(
                Mat::new(&deltas[l + 1], rows, dims[l + 2]).t(),
                Mat::new(&back_bar, rows, dims[l + 1]),
                &mut grads.layers[l + 1].weights,
                true,
            );
            let mut next = vec![S::zero(); rows * dims[l + 2]];
            matmul(
                Mat::new(&back_bar, rows, dims[l + 1]),
                Mat::new(&net.layers[l + 1].weights, dims[l + 2], dims[l + 1]).t(),
                &mut next,
                false,
            );
            delta_bar = next;
        }
        // the selector is constant, so nothing flows past the last layer
    }

    // Outer backward through the forward graph with injected z adjoints.
    let mut a_bar = vec![S::zero(); rows * dims[n_layers]];
    for l in (0..n_layers).rev() {
        let layer = &net.layers[l];
        let out = &cache.values[l + 1];
        let z_bar: Vec<S> = (0..rows * dims[l + 1])
            .map(|i| {
                let curv = layer
                    .activation
                    .second_derivative_from_output(out[i])
                    .unwrap_or_else(S::zero);
                slope_bar[l][i] * curv + a_bar[i] * slopes[l][i]
            })
            .collect();
        let lg = &mut grads.layers[l];
        matmul(
            Mat::new(&z_bar, rows, dims[l + 1]).t(),
            Mat::new(&cache.values[l], rows, dims[l]),
            &mut lg.weights,
            true,
        );
        for r in 0..rows {
            for (b, &z) in lg
                .bias
                .iter_mut()
                .zip(&z_bar[r * dims[l + 1]..(r + 1) * dims[l + 1]])
            {
                *b = *b + z;
            }
        }
        if l > 0 {
            let mut prev = vec![S::zero(); rows * dims[l]];
            matmul(
                Mat::new(&z_bar, rows, dims[l + 1]),
                Mat::new(&layer.weights, dims[l + 1], dims[l]),
                &mut prev,
                false,
            );
            a_bar = prev;
        }
    }

    Ok(PenaltyOutput {
        penalty,
        norms,
        grads,
    })
}
