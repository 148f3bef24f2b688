//! Shape-tagged records for parameters, optimiser state and RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Decoder, Encoder};
use crate::error::Result;
use crate::numeric::{Activation, AdamState, Layer, Mlp, MultiHeadNet, Scalar};

/// `rank:u32, dims:u64*, values:f64*`.
pub fn put_tensor<S: Scalar>(e: &mut Encoder, shape: &[usize], data: &[S]) {
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    e.u32(shape.len() as u32);
    for &d in shape {
        e.u64(d as u64);
    }
    for x in data {
        e.f64(x.to_f64_lossy());
    }
}

pub fn get_tensor<S: Scalar>(d: &mut Decoder<'_>, rank: usize) -> Result<(Vec<usize>, Vec<S>)> {
    let r = d.u32()? as usize;
    if r != rank {
        return Err(d.error(format!("expected rank {rank} record, found rank {r}")));
    }
    let mut shape = Vec::with_capacity(r);
    for _ in 0..r {
        shape.push(d.u64()? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &x| acc.checked_mul(x))
        .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= d.remaining()))
        .ok_or_else(|| d.error(format!("record shape {shape:?} exceeds remaining data")))?;
    let data = (0..n)
        .map(|_| d.f64().map(S::lit))
        .collect::<Result<Vec<_>>>()?;
    Ok((shape, data))
}

pub fn put_mlp<S: Scalar>(e: &mut Encoder, net: &Mlp<S>) {
    e.u32(net.layers.len() as u32);
    for l in &net.layers {
        e.u32(l.activation.tag());
        put_tensor(e, &[l.out_dim, l.in_dim], &l.weights);
        put_tensor(e, &[l.out_dim], &l.bias);
    }
}

pub fn get_mlp<S: Scalar>(d: &mut Decoder<'_>) -> Result<Mlp<S>> {
    let n = d.u32()? as usize;
    let mut layers = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let tag = d.u32()?;
        let activation =
            Activation::from_tag(tag).ok_or_else(|| d.error(format!("unknown activation {tag}")))?;
        let (ws, weights) = get_tensor(d, 2)?;
        let (bs, bias) = get_tensor(d, 1)?;
        if bs[0] != ws[0] {
            return Err(d.error("bias length differs from weight rows"));
        }
        layers.push(Layer {
            in_dim: ws[1],
            out_dim: ws[0],
            activation,
            weights,
            bias,
        });
    }
    Mlp::from_layers(layers).map_err(|err| d.error(err.to_string()))
}

pub fn put_multihead<S: Scalar>(e: &mut Encoder, net: &MultiHeadNet<S>) {
    put_mlp(e, &net.trunk);
    e.u32(net.heads.len() as u32);
    for h in &net.heads {
        put_mlp(e, h);
    }
}

pub fn get_multihead<S: Scalar>(d: &mut Decoder<'_>) -> Result<MultiHeadNet<S>> {
    let trunk = get_mlp(d)?;
    let n = d.u32()? as usize;
    let mut heads = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let h: Mlp<S> = get_mlp(d)?;
        if h.in_dim() != trunk.out_dim() {
            return Err(d.error("head input width differs from trunk output"));
        }
        heads.push(h);
    }
    Ok(MultiHeadNet { trunk, heads })
}

pub fn put_adam<S: Scalar>(e: &mut Encoder, a: &AdamState<S>) {
    e.u64(a.step);
    e.f64(a.lr.to_f64_lossy());
    e.u32(a.first.len() as u32);
    for (m, v) in a.first.iter().zip(&a.second) {
        put_tensor(e, &[m.len()], m);
        put_tensor(e, &[v.len()], v);
    }
}

pub fn get_adam<S: Scalar>(d: &mut Decoder<'_>) -> Result<AdamState<S>> {
    let step = d.u64()?;
    let lr = S::lit(d.f64()?);
    let n = d.u32()? as usize;
    let mut first = Vec::with_capacity(n.min(256));
    let mut second = Vec::with_capacity(n.min(256));
    for _ in 0..n {
        first.push(get_tensor(d, 1)?.1);
        second.push(get_tensor(d, 1)?.1);
    }
    Ok(AdamState {
        step,
        lr,
        first,
        second,
    })
}

/// Seed, stream and word position: enough to resume the exact sequence.
pub fn put_rng(e: &mut Encoder, rng: &ChaCha8Rng) {
    e.raw(&rng.get_seed());
    e.u64(rng.get_stream());
    e.u128(rng.get_word_pos());
}

pub fn get_rng(d: &mut Decoder<'_>) -> Result<ChaCha8Rng> {
    let mut seed = [0u8; 32];
    seed.copy_from_slice(d.raw(32)?);
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(d.u64()?);
    rng.set_word_pos(d.u128()?);
    Ok(rng)
}
