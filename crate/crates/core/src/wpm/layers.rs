//! Transformer building blocks with explicit forward caches and backward
//! passes. Every sequence is a row-major `len × d` slice; gradients are
//! accumulated into a parameter struct of the same shape.

use rand::Rng;

use super::tensor::{axpy, dot, matmul, matmul_a_bt_acc, matmul_at_b_acc, softmax_in_place, Tensor};
use crate::rng;

pub(crate) const LN_EPS: f64 = 1e-5;

/// Named-tensor traversal used by the optimizer, checkpoints and gradient
/// checks. Order is fixed by field order.
pub trait Visit {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>);
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Visit for Tensor {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((prefix.to_owned(), self));
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((prefix.to_owned(), self));
    }
}

impl<T: Visit> Visit for Vec<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (i, t) in self.iter().enumerate() {
            t.visit(&join(prefix, &i.to_string()), out);
        }
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        for (i, t) in self.iter_mut().enumerate() {
            t.visit_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

macro_rules! visit_fields {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl Visit for $ty {
            fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
                $( self.$field.visit(&$crate::wpm::layers::join(prefix, stringify!($field)), out); )*
            }
            fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
                $( self.$field.visit_mut(&$crate::wpm::layers::join(prefix, stringify!($field)), out); )*
            }
        }
    };
}
pub(crate) use visit_fields;

/// Scaled-uniform initializer with variance `1 / d_model`.
pub(crate) fn init_uniform<R: Rng>(shape: &[usize], d_model: usize, rng: &mut R) -> Tensor {
    let a = (3.0 / d_model as f64).sqrt();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| (2.0 * rng::unit(rng) - 1.0) * a).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `in × out`
    pub weight: Tensor,
    pub bias: Tensor,
}
visit_fields!(Linear { weight, bias });

impl Linear {
    pub(crate) fn new<R: Rng>(input: usize, output: usize, d_model: usize, rng: &mut R) -> Self {
        Self {
            weight: init_uniform(&[input, output], d_model, rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.weight.shape()[0], self.weight.shape()[1])
    }

    pub(crate) fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let (i, o) = self.dims();
        let mut y = vec![0.0; n * o];
        matmul(x, self.weight.data(), n, i, o, &mut y);
        for row in y.chunks_exact_mut(o) {
            axpy(1.0, self.bias.data(), row);
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and adds the input
    /// gradient into `dx`.
    pub(crate) fn backward(&self, grad: &mut Linear, x: &[f64], dy: &[f64], n: usize, dx: &mut [f64]) {
        let (i, o) = self.dims();
        matmul_at_b_acc(x, dy, n, i, o, grad.weight.data_mut());
        for row in dy.chunks_exact(o) {
            axpy(1.0, row, grad.bias.data_mut());
        }
        matmul_a_bt_acc(dy, self.weight.data(), n, o, i, dx);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
}
visit_fields!(LayerNorm { gain, bias });

pub(crate) struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub(crate) fn new(d: usize) -> Self {
        let mut gain = Tensor::zeros(&[d]);
        gain.fill(1.0);
        Self {
            gain,
            bias: Tensor::zeros(&[d]),
        }
    }

    pub(crate) fn forward(&self, x: &[f64], d: usize) -> (Vec<f64>, NormCache) {
        let n = x.len() / d;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                y[r * d + j] = h * self.gain.data()[j] + self.bias.data()[j];
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub(crate) fn backward(&self, grad: &mut LayerNorm, cache: &NormCache, dy: &[f64], d: usize, dx: &mut [f64]) {
        let n = dy.len() / d;
        let mut dxhat = vec![0.0; d];
        for r in 0..n {
            let dyr = &dy[r * d..(r + 1) * d];
            let xh = &cache.xhat[r * d..(r + 1) * d];
            for j in 0..d {
                grad.gain.data_mut()[j] += dyr[j] * xh[j];
                grad.bias.data_mut()[j] += dyr[j];
                dxhat[j] = dyr[j] * self.gain.data()[j];
            }
            let mean_d = dxhat.iter().sum::<f64>() / d as f64;
            let mean_dx = dot(&dxhat, xh) / d as f64;
            let is = cache.inv_std[r];
            for j in 0..d {
                dx[r * d + j] += is * (dxhat[j] - mean_d - xh[j] * mean_dx);
            }
        }
    }
}

/// Multi-head scaled dot-product attention without any mask: every query
/// position sees every key position.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}
visit_fields!(Attention { query, key, value, output });

pub(crate) struct AttnCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// heads × lq × lk
    probs: Vec<f64>,
    ctx: Vec<f64>,
    lq: usize,
    lk: usize,
}

impl Attention {
    pub(crate) fn new<R: Rng>(d: usize, rng: &mut R) -> Self {
        Self {
            query: Linear::new(d, d, d, rng),
            key: Linear::new(d, d, d, rng),
            value: Linear::new(d, d, d, rng),
            output: Linear::new(d, d, d, rng),
        }
    }

    pub(crate) fn forward(&self, xq: &[f64], xkv: &[f64], d: usize, heads: usize) -> (Vec<f64>, AttnCache) {
        let lq = xq.len() / d;
        let lk = xkv.len() / d;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.query.forward(xq, lq);
        let k = self.key.forward(xkv, lk);
        let v = self.value.forward(xkv, lk);
        let mut probs = vec![0.0; heads * lq * lk];
        let mut ctx = vec![0.0; lq * d];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..lq {
                let qi = &q[i * d + off..i * d + off + dh];
                let p = &mut probs[(h * lq + i) * lk..(h * lq + i + 1) * lk];
                for (j, pj) in p.iter_mut().enumerate() {
                    *pj = dot(qi, &k[j * d + off..j * d + off + dh]) * scale;
                }
                softmax_in_place(p);
                let ci = &mut ctx[i * d + off..i * d + off + dh];
                for (j, &pj) in p.iter().enumerate() {
                    axpy(pj, &v[j * d + off..j * d + off + dh], ci);
                }
            }
        }
        let out = self.output.forward(&ctx, lq);
        (
            out,
            AttnCache {
                q,
                k,
                v,
                probs,
                ctx,
                lq,
                lk,
            },
        )
    }

    /// Adds input gradients into `dxq` and `dxkv` (which may describe the
    /// same sequence; the caller sums them in that case).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        grad: &mut Attention,
        cache: &AttnCache,
        xq: &[f64],
        xkv: &[f64],
        dout: &[f64],
        d: usize,
        heads: usize,
        dxq: &mut [f64],
        dxkv: &mut [f64],
    ) {
        let AttnCache {
            q,
            k,
            v,
            probs,
            ctx,
            lq,
            lk,
        } = cache;
        let (lq, lk) = (*lq, *lk);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dctx = vec![0.0; lq * d];
        self.output.backward(&mut grad.output, ctx, dout, lq, &mut dctx);
        let mut dq = vec![0.0; lq * d];
        let mut dk = vec![0.0; lk * d];
        let mut dv = vec![0.0; lk * d];
        let mut dp = vec![0.0; lk];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..lq {
                let p = &probs[(h * lq + i) * lk..(h * lq + i + 1) * lk];
                let dci = &dctx[i * d + off..i * d + off + dh];
                for j in 0..lk {
                    dp[j] = dot(dci, &v[j * d + off..j * d + off + dh]);
                    axpy(p[j], dci, &mut dv[j * d + off..j * d + off + dh]);
                }
                let pdp = dot(p, &dp);
                let qi = &q[i * d + off..i * d + off + dh];
                for j in 0..lk {
                    let ds = p[j] * (dp[j] - pdp) * scale;
                    if ds != 0.0 {
                        axpy(ds, &k[j * d + off..j * d + off + dh], &mut dq[i * d + off..i * d + off + dh]);
                        axpy(ds, qi, &mut dk[j * d + off..j * d + off + dh]);
                    }
                }
            }
        }
        self.query.backward(&mut grad.query, xq, &dq, lq, dxq);
        self.key.backward(&mut grad.key, xkv, &dk, lk, dxkv);
        self.value.backward(&mut grad.value, xkv, &dv, lk, dxkv);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> (f64, f64) {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    (y, dy)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}
visit_fields!(FeedForward { inner, outer });

pub(crate) struct FfnCache {
    act: Vec<f64>,
    dact: Vec<f64>,
}

impl FeedForward {
    pub(crate) fn new<R: Rng>(d: usize, d_ff: usize, rng: &mut R) -> Self {
        Self {
            inner: Linear::new(d, d_ff, d, rng),
            outer: Linear::new(d_ff, d, d, rng),
        }
    }

    pub(crate) fn forward(&self, x: &[f64], n: usize) -> (Vec<f64>, FfnCache) {
        let pre = self.inner.forward(x, n);
        let (act, dact): (Vec<f64>, Vec<f64>) = pre.iter().map(|&v| gelu(v)).unzip();
        let out = self.outer.forward(&act, n);
        (out, FfnCache { act, dact })
    }

    pub(crate) fn backward(&self, grad: &mut FeedForward, cache: &FfnCache, x: &[f64], dy: &[f64], n: usize, dx: &mut [f64]) {
        let mut dact = vec![0.0; cache.act.len()];
        self.outer.backward(&mut grad.outer, &cache.act, dy, n, &mut dact);
        for (g, &s) in dact.iter_mut().zip(&cache.dact) {
            *g *= s;
        }
        self.inner.backward(&mut grad.inner, x, &dact, n, dx);
    }
}

/// Inverted dropout. `None` mask means identity.
pub(crate) fn dropout<R: Rng>(x: &mut [f64], rate: f64, rng: Option<&mut R>) -> Option<Vec<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng::unit(rng) < rate { 0.0 } else { keep })
        .collect();
    for (v, m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

pub(crate) fn dropout_backward(dy: &[f64], mask: &Option<Vec<f64>>) -> Vec<f64> {
    match mask {
        None => dy.to_vec(),
        Some(m) => dy.iter().zip(m).map(|(g, m)| g * m).collect(),
    }
}
