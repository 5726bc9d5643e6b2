//! Reverse-mode tape over the op set used by the models.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvDims};
use super::params::{ParamId, ParamStore};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param(ParamId),
    Conv { x: Var, w: Var, b: Option<Var>, dims: ConvDims, k: usize, dilation: usize },
    LdConv { x: Var, w: Var, p: Var, b: Option<Var>, dims: ConvDims },
    Dense { x: Var, w: Var, b: Option<Var> },
    MatMul { a: Var, b: Var },
    Transpose { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, s: T },
    ScaleBy { x: Var, s: Var },
    ChannelBias { x: Var, b: Var },
    Relu { x: Var },
    Sigmoid { x: Var },
    MaxPool { x: Var, arg: Vec<usize> },
    Upsample { x: Var },
    Concat { parts: Vec<Var> },
    Reshape { x: Var },
    LayerNorm { x: Var, g: Var, b: Var, xhat: Vec<T>, inv: Vec<T> },
    Attention { q: Var, k: Var, v: Var, probs: Vec<T>, scale: T },
    Mse { p: Var, target: Vec<T> },
    SoftmaxCe { logits: Var, label: usize, probs: Vec<T> },
    Mean { x: Var },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records values and how they were produced.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradient of one scalar with respect to every recorded value.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }
}

fn shape_err(op: &str, msg: impl core::fmt::Display) -> Error {
    Error::Shape(format!("{op}: {msg}"))
}

fn add_into<T: Scalar>(slot: &mut Option<Vec<T>>, g: &[T]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
        None => *slot = Some(g.to_vec()),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Softmax weights `[N, M]` of an attention node.
    pub fn attention_weights(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite output from {name}")));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn input(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Input, "input")
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        self.push(store.get(id).clone(), Op::Param(id), "param")
    }

    /// "Same" dilated convolution. `x: [C, H, W]`, `w: [O, C, k, k]`, `b: [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, dilation: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] || ws[2] % 2 == 0 || dilation == 0 {
            return Err(shape_err("conv2d", format!("input {xs:?}, kernel {ws:?}, dilation {dilation}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(shape_err("conv2d", "bias length must equal output channels"));
            }
        }
        let dims = ConvDims { cin: xs[0], cout: ws[0], h: xs[1], w: xs[2] };
        let offs = kernels::grid_offsets(ws[2], dilation);
        let out = kernels::conv_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            dims,
            &offs,
        );
        let t = Tensor::new(&[ws[0], xs[1], xs[2]], out)?;
        self.push(t, Op::Conv { x, w, b, dims, k: ws[2], dilation }, "conv2d")
    }

    /// Convolution sampling the input at learned real offsets.
    /// `x: [C, H, W]`, `w: [O, C, E]`, `p: [E, 2]`, `b: [O]`.
    pub fn ldconv2d(&mut self, x: Var, w: Var, p: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let ps = self.shape(p).to_vec();
        if xs.len() != 3 || ws.len() != 3 || ws[1] != xs[0] || ps != [ws[2], 2] || ws[2] == 0 {
            return Err(shape_err("ldconv2d", format!("input {xs:?}, weights {ws:?}, positions {ps:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(shape_err("ldconv2d", "bias length must equal output channels"));
            }
        }
        let dims = ConvDims { cin: xs[0], cout: ws[0], h: xs[1], w: xs[2] };
        let out = kernels::ldconv_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(p).data(),
            b.map(|b| self.value(b).data()),
            dims,
        );
        let t = Tensor::new(&[ws[0], xs[1], xs[2]], out)?;
        self.push(t, Op::LdConv { x, w, p, b, dims }, "ldconv2d")
    }

    /// `x: [N, I]` (or `[I]`), `w: [O, I]`, `b: [O]` -> `[N, O]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (n, i) = match xs.len() {
            1 => (1, xs[0]),
            2 => (xs[0], xs[1]),
            _ => return Err(shape_err("dense", format!("input {xs:?}"))),
        };
        if ws.len() != 2 || ws[1] != i {
            return Err(shape_err("dense", format!("input {xs:?}, weights {ws:?}")));
        }
        let o = ws[0];
        if let Some(b) = b {
            if self.shape(b) != [o] {
                return Err(shape_err("dense", "bias length must equal outputs"));
            }
        }
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![T::zero(); n * o];
        for r in 0..n {
            let xr = &xd[r * i..(r + 1) * i];
            for c in 0..o {
                let wr = &wd[c * i..(c + 1) * i];
                let mut s = b.map_or(T::zero(), |b| self.value(b).data()[c]);
                for (&a, &bw) in xr.iter().zip(wr) {
                    s = s + a * bw;
                }
                out[r * o + c] = s;
            }
        }
        let t = Tensor::new(&[n, o], out)?;
        self.push(t, Op::Dense { x, w, b }, "dense")
    }

    /// `a: [N, K] x b: [K, M]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (as_, bs) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if as_.len() != 2 || bs.len() != 2 || as_[1] != bs[0] {
            return Err(shape_err("matmul", format!("{as_:?} x {bs:?}")));
        }
        let (n, k, m) = (as_[0], as_[1], bs[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), n, k, m);
        let t = Tensor::new(&[n, m], out)?;
        self.push(t, Op::MatMul { a, b }, "matmul")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(shape_err("transpose", format!("{s:?}")));
        }
        let out = transpose_raw(self.value(x).data(), s[0], s[1]);
        let t = Tensor::new(&[s[1], s[0]], out)?;
        self.push(t, Op::Transpose { x }, "transpose")
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let av = self.value(a);
        let data = av.data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip_with(a, b, |x, y| x + y);
        self.push(t, Op::Add { a, b }, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_with(a, b, |x, y| x - y);
        self.push(t, Op::Sub { a, b }, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_with(a, b, |x, y| x * y);
        self.push(t, Op::Mul { a, b }, "mul")
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&a| a * s).collect())?;
        self.push(t, Op::Scale { x, s }, "scale")
    }

    /// Multiply by a recorded scalar (`[1]`).
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(shape_err("scale_by", "factor must hold one value"));
        }
        let f = self.value(s).data()[0];
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&a| a * f).collect())?;
        self.push(t, Op::ScaleBy { x, s }, "scale_by")
    }

    /// Add `b[c]` to every element of channel `c` of `x: [C, ...]`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let c = xs.first().copied().unwrap_or(0);
        if self.value(b).len() != c || c == 0 {
            return Err(shape_err("channel_bias", format!("input {xs:?}, bias {:?}", self.shape(b))));
        }
        let per = self.value(x).len() / c;
        let bd = self.value(b).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for (ch, chunk) in data.chunks_mut(per).enumerate() {
            chunk.iter_mut().for_each(|v| *v = *v + bd[ch]);
        }
        let t = Tensor::new(&xs, data)?;
        self.push(t, Op::ChannelBias { x, b }, "channel_bias")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&a| if a > T::zero() { a } else { T::zero() }).collect())?;
        self.push(t, Op::Relu { x }, "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&a| sigmoid(a)).collect())?;
        self.push(t, Op::Sigmoid { x }, "sigmoid")
    }

    /// 2x2 max pooling on `[C, H, W]` with even `H`, `W`; the first maximum wins.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 || s[1] == 0 || s[2] == 0 {
            return Err(shape_err("maxpool2", format!("{s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (ho, wo) = (h / 2, w / 2);
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut arg = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            for y in 0..ho {
                for xx in 0..wo {
                    let base = ch * h * w;
                    let cands = [
                        base + 2 * y * w + 2 * xx,
                        base + 2 * y * w + 2 * xx + 1,
                        base + (2 * y + 1) * w + 2 * xx,
                        base + (2 * y + 1) * w + 2 * xx + 1,
                    ];
                    let mut best = cands[0];
                    for &i in &cands[1..] {
                        if d[i] > d[best] {
                            best = i;
                        }
                    }
                    out.push(d[best]);
                    arg.push(best);
                }
            }
        }
        let t = Tensor::new(&[c, ho, wo], out)?;
        self.push(t, Op::MaxPool { x, arg }, "maxpool2")
    }

    /// Nearest-neighbour 2x upsampling of `[C, H, W]`.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(shape_err("upsample2", format!("{s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let d = self.value(x).data();
        let mut out = vec![T::zero(); c * 4 * h * w];
        for ch in 0..c {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    out[(ch * 2 * h + y) * 2 * w + xx] = d[(ch * h + y / 2) * w + xx / 2];
                }
            }
        }
        let t = Tensor::new(&[c, 2 * h, 2 * w], out)?;
        self.push(t, Op::Upsample { x }, "upsample2")
    }

    /// Concatenate along the leading dimension.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(shape_err("concat", format!("{s:?} vs trailing {tail:?}")));
            }
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let t = Tensor::new(&shape, data)?;
        self.push(t, Op::Concat { parts: parts.to_vec() }, "concat")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push(t, Op::Reshape { x }, "reshape")
    }

    /// Normalize over the last dimension, then scale by `g` and shift by `b`.
    pub fn layer_norm(&mut self, x: Var, g: Var, b: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or_else(|| shape_err("layer_norm", "scalar input"))?;
        if self.shape(g) != [d] || self.shape(b) != [d] || d == 0 {
            return Err(shape_err("layer_norm", format!("input {s:?}")));
        }
        let eps = T::of(1e-5);
        let xd = self.value(x).data();
        let gd = self.value(g).data();
        let bd = self.value(b).data();
        let rows = xd.len() / d;
        let mut out = vec![T::zero(); xd.len()];
        let mut xhat = vec![T::zero(); xd.len()];
        let mut inv = vec![T::zero(); rows];
        let dn = T::of(d as f64);
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv[r] = is;
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                xhat[r * d + j] = xh;
                out[r * d + j] = xh * gd[j] + bd[j];
            }
        }
        let t = Tensor::new(&s, out)?;
        self.push(t, Op::LayerNorm { x, g, b, xhat, inv }, "layer_norm")
    }

    /// Single-head scaled dot-product attention. `q: [N, d]`, `k: [M, d]`,
    /// `v: [M, e]`; `mask[n * M + m] == false` hides key `m` from query `n`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (qs, ks, vs) = (self.shape(q).to_vec(), self.shape(k).to_vec(), self.shape(v).to_vec());
        if qs.len() != 2 || ks.len() != 2 || vs.len() != 2 || qs[1] != ks[1] || ks[0] != vs[0] {
            return Err(shape_err("attention", format!("q {qs:?}, k {ks:?}, v {vs:?}")));
        }
        let (n, d, m, e) = (qs[0], qs[1], ks[0], vs[1]);
        if let Some(mk) = mask {
            if mk.len() != n * m {
                return Err(shape_err("attention", "mask must be N x M"));
            }
        }
        let scale = T::one() / T::of(d as f64).sqrt();
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let vd = self.value(v).data();
        let mut probs = vec![T::zero(); n * m];
        for i in 0..n {
            let row = &mut probs[i * m..(i + 1) * m];
            let mut max = T::neg_infinity();
            for j in 0..m {
                if mask.is_some_and(|mk| !mk[i * m + j]) {
                    continue;
                }
                let s = qd[i * d..(i + 1) * d].iter().zip(&kd[j * d..(j + 1) * d]).map(|(&a, &b)| a * b).sum::<T>() * scale;
                row[j] = s;
                if s > max {
                    max = s;
                }
            }
            if max == T::neg_infinity() {
                row.iter_mut().for_each(|p| *p = T::zero());
                continue;
            }
            let mut total = T::zero();
            for j in 0..m {
                if mask.is_some_and(|mk| !mk[i * m + j]) {
                    row[j] = T::zero();
                } else {
                    row[j] = (row[j] - max).exp();
                    total = total + row[j];
                }
            }
            row.iter_mut().for_each(|p| *p = *p / total);
        }
        let out = matmul_raw(&probs, vd, n, m, e);
        let t = Tensor::new(&[n, e], out)?;
        self.push(t, Op::Attention { q, k, v, probs, scale }, "attention")
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, p: Var, target: &[T]) -> Result<Var> {
        let pd = self.value(p).data();
        if pd.len() != target.len() || pd.is_empty() {
            return Err(shape_err("mse", format!("{} predictions, {} targets", pd.len(), target.len())));
        }
        let n = T::of(pd.len() as f64);
        let loss = pd.iter().zip(target).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / n;
        let t = Tensor::scalar(loss);
        self.push(t, Op::Mse { p, target: target.to_vec() }, "mse")
    }

    /// Softmax cross-entropy of a single logit vector.
    pub fn softmax_ce(&mut self, logits: Var, label: usize) -> Result<Var> {
        let l = self.value(logits).data();
        if label >= l.len() {
            return Err(shape_err("softmax_ce", format!("label {label} with {} classes", l.len())));
        }
        let probs = softmax(l);
        let loss = -(probs[label].max(T::min_positive_value())).ln();
        let t = Tensor::scalar(loss);
        self.push(t, Op::SoftmaxCe { logits, label, probs }, "softmax_ce")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let d = self.value(x).data();
        if d.is_empty() {
            return Err(shape_err("mean", "empty input"));
        }
        let m = d.iter().copied().sum::<T>() / T::of(d.len() as f64);
        self.push(Tensor::scalar(m), Op::Mean { x }, "mean")
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(shape_err("backward", "loss must be a scalar"));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Sum gradients per parameter; unused parameters get `None`.
    pub fn param_grads(&self, grads: &Gradients<T>, store: &ParamStore<T>) -> Vec<Option<Tensor<T>>> {
        let mut out: Vec<Option<Vec<T>>> = vec![None; store.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                add_into(&mut out[id.index()], g);
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|g| Tensor::new(store.tensor(i).shape(), g).expect("param shape")))
            .collect()
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match &self.nodes[i].op {
            Op::Input | Op::Param(_) => {}
            Op::Conv { x, w, b, dims, k, dilation } => {
                let offs = kernels::grid_offsets(*k, *dilation);
                let (dx, dw, db) = kernels::conv_backward(val(*x), val(*w), g, *dims, &offs);
                add_into(&mut grads[x.0], &dx);
                add_into(&mut grads[w.0], &dw);
                if let Some(b) = b {
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::LdConv { x, w, p, b, dims } => {
                let (dx, dw, dp, db) = kernels::ldconv_backward(val(*x), val(*w), val(*p), g, *dims);
                add_into(&mut grads[x.0], &dx);
                add_into(&mut grads[w.0], &dw);
                add_into(&mut grads[p.0], &dp);
                if let Some(b) = b {
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::Dense { x, w, b } => {
                let xd = val(*x);
                let wd = val(*w);
                let o = self.nodes[w.0].value.shape()[0];
                let ni = self.nodes[w.0].value.shape()[1];
                let n = xd.len() / ni;
                let mut dx = vec![T::zero(); xd.len()];
                let mut dw = vec![T::zero(); wd.len()];
                let mut db = vec![T::zero(); o];
                for r in 0..n {
                    for c in 0..o {
                        let gv = g[r * o + c];
                        db[c] = db[c] + gv;
                        let wr = &wd[c * ni..(c + 1) * ni];
                        let xr = &xd[r * ni..(r + 1) * ni];
                        for j in 0..ni {
                            dx[r * ni + j] = dx[r * ni + j] + gv * wr[j];
                            dw[c * ni + j] = dw[c * ni + j] + gv * xr[j];
                        }
                    }
                }
                add_into(&mut grads[x.0], &dx);
                add_into(&mut grads[w.0], &dw);
                if let Some(b) = b {
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::MatMul { a, b } => {
                let (as_, bs) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (n, k, m) = (as_[0], as_[1], bs[1]);
                let bt = transpose_raw(val(*b), k, m);
                let da = matmul_raw(g, &bt, n, m, k);
                let at = transpose_raw(val(*a), n, k);
                let db = matmul_raw(&at, g, k, n, m);
                add_into(&mut grads[a.0], &da);
                add_into(&mut grads[b.0], &db);
            }
            Op::Transpose { x } => {
                let s = self.nodes[x.0].value.shape();
                let dx = transpose_raw(g, s[1], s[0]);
                add_into(&mut grads[x.0], &dx);
            }
            Op::Add { a, b } => {
                add_into(&mut grads[a.0], g);
                add_into(&mut grads[b.0], g);
            }
            Op::Sub { a, b } => {
                add_into(&mut grads[a.0], g);
                let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                add_into(&mut grads[b.0], &neg);
            }
            Op::Mul { a, b } => {
                let da: Vec<T> = g.iter().zip(val(*b)).map(|(&u, &v)| u * v).collect();
                let db: Vec<T> = g.iter().zip(val(*a)).map(|(&u, &v)| u * v).collect();
                add_into(&mut grads[a.0], &da);
                add_into(&mut grads[b.0], &db);
            }
            Op::Scale { x, s } => {
                let dx: Vec<T> = g.iter().map(|&u| u * *s).collect();
                add_into(&mut grads[x.0], &dx);
            }
            Op::ScaleBy { x, s } => {
                let f = val(*s)[0];
                let dx: Vec<T> = g.iter().map(|&u| u * f).collect();
                let ds = g.iter().zip(val(*x)).map(|(&u, &v)| u * v).sum::<T>();
                add_into(&mut grads[x.0], &dx);
                add_into(&mut grads[s.0], &[ds]);
            }
            Op::ChannelBias { x, b } => {
                let c = self.nodes[b.0].value.len();
                let per = g.len() / c;
                let db: Vec<T> = g.chunks(per).map(|ch| ch.iter().copied().sum()).collect();
                add_into(&mut grads[x.0], g);
                add_into(&mut grads[b.0], &db);
            }
            Op::Relu { x } => {
                let dx: Vec<T> = g.iter().zip(val(*x)).map(|(&u, &v)| if v > T::zero() { u } else { T::zero() }).collect();
                add_into(&mut grads[x.0], &dx);
            }
            Op::Sigmoid { x } => {
                let y = self.nodes[i].value.data();
                let dx: Vec<T> = g.iter().zip(y).map(|(&u, &s)| u * s * (T::one() - s)).collect();
                add_into(&mut grads[x.0], &dx);
            }
            Op::MaxPool { x, arg } => {
                let mut dx = vec![T::zero(); self.nodes[x.0].value.len()];
                for (&a, &u) in arg.iter().zip(g) {
                    dx[a] = dx[a] + u;
                }
                add_into(&mut grads[x.0], &dx);
            }
            Op::Upsample { x } => {
                let s = self.nodes[x.0].value.shape();
                let (c, h, w) = (s[0], s[1], s[2]);
                let mut dx = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            let t = (ch * h + y / 2) * w + xx / 2;
                            dx[t] = dx[t] + g[(ch * 2 * h + y) * 2 * w + xx];
                        }
                    }
                }
                add_into(&mut grads[x.0], &dx);
            }
            Op::Concat { parts } => {
                let mut off = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.len();
                    add_into(&mut grads[p.0], &g[off..off + n]);
                    off += n;
                }
            }
            Op::Reshape { x } => add_into(&mut grads[x.0], g),
            Op::LayerNorm { x, g: gam, b, xhat, inv } => {
                let d = self.nodes[gam.0].value.len();
                let gd = val(*gam);
                let rows = g.len() / d;
                let mut dx = vec![T::zero(); g.len()];
                let mut dg = vec![T::zero(); d];
                let mut dbeta = vec![T::zero(); d];
                let dn = T::of(d as f64);
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let xh = &xhat[r * d..(r + 1) * d];
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for j in 0..d {
                        let dxh = gr[j] * gd[j];
                        m1 = m1 + dxh;
                        m2 = m2 + dxh * xh[j];
                        dg[j] = dg[j] + gr[j] * xh[j];
                        dbeta[j] = dbeta[j] + gr[j];
                    }
                    m1 = m1 / dn;
                    m2 = m2 / dn;
                    for j in 0..d {
                        let dxh = gr[j] * gd[j];
                        dx[r * d + j] = inv[r] * (dxh - m1 - xh[j] * m2);
                    }
                }
                add_into(&mut grads[x.0], &dx);
                add_into(&mut grads[gam.0], &dg);
                add_into(&mut grads[b.0], &dbeta);
            }
            Op::Attention { q, k, v, probs, scale } => {
                let (qs, vs) = (self.nodes[q.0].value.shape(), self.nodes[v.0].value.shape());
                let (n, d, m, e) = (qs[0], qs[1], vs[0], vs[1]);
                let vt = transpose_raw(val(*v), m, e);
                let dp = matmul_raw(g, &vt, n, e, m);
                let pt = transpose_raw(probs, n, m);
                let dv = matmul_raw(&pt, g, m, n, e);
                let mut ds = vec![T::zero(); n * m];
                for r in 0..n {
                    let pr = &probs[r * m..(r + 1) * m];
                    let dr = &dp[r * m..(r + 1) * m];
                    let dot = pr.iter().zip(dr).map(|(&a, &b)| a * b).sum::<T>();
                    for j in 0..m {
                        ds[r * m + j] = pr[j] * (dr[j] - dot) * *scale;
                    }
                }
                let dq = matmul_raw(&ds, val(*k), n, m, d);
                let dst = transpose_raw(&ds, n, m);
                let dk = matmul_raw(&dst, val(*q), m, n, d);
                add_into(&mut grads[q.0], &dq);
                add_into(&mut grads[k.0], &dk);
                add_into(&mut grads[v.0], &dv);
            }
            Op::Mse { p, target } => {
                let n = T::of(target.len() as f64);
                let two = T::of(2.0);
                let dp: Vec<T> = val(*p).iter().zip(target).map(|(&a, &b)| g[0] * two * (a - b) / n).collect();
                add_into(&mut grads[p.0], &dp);
            }
            Op::SoftmaxCe { logits, label, probs } => {
                let dl: Vec<T> = probs
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| g[0] * (if j == *label { p - T::one() } else { p }))
                    .collect();
                add_into(&mut grads[logits.0], &dl);
            }
            Op::Mean { x } => {
                let n = self.nodes[x.0].value.len();
                let dx = vec![g[0] / T::of(n as f64); n];
                add_into(&mut grads[x.0], &dx);
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(a: T) -> T {
    if a >= T::zero() {
        T::one() / (T::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax<T: Scalar>(l: &[T]) -> Vec<T> {
    let max = l.iter().copied().fold(T::neg_infinity(), T::max);
    let ex: Vec<T> = l.iter().map(|&v| (v - max).exp()).collect();
    let s = ex.iter().copied().sum::<T>();
    ex.iter().map(|&v| v / s).collect()
}

pub(crate) fn matmul_raw<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for r in 0..n {
        let orow = &mut out[r * m..(r + 1) * m];
        for j in 0..k {
            let av = a[r * k + j];
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&b[j * m..(j + 1) * m]) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose_raw<T: Scalar>(a: &[T], n: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for r in 0..n {
        for c in 0..m {
            out[c * n + r] = a[r * m + c];
        }
    }
    out
}
