//! Gesture classifier over time-velocity heatmaps: shifted-patch tokens,
//! per-chunk attention along time, then a small temporal transformer.
//!
//! Heatmaps are `[time, velocity]`; tokens are stored time-major so a
//! chunk of consecutive tokens covers a contiguous stretch of time.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::math::sqrt;
use crate::nn::{AdamW, Graph, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbedConfig {
    pub patch: usize,
    pub dim: usize,
    /// `(dy, dx)` pixel offsets of the shifted copies.
    pub shifts: Vec<(isize, isize)>,
    pub include_original: bool,
}

impl PatchEmbedConfig {
    /// Four half-patch diagonal shifts plus the original.
    pub fn diagonal(patch: usize, dim: usize) -> Self {
        let h = (patch / 2) as isize;
        Self { patch, dim, shifts: vec![(-h, -h), (-h, h), (h, -h), (h, h)], include_original: true }
    }

    pub fn channels(&self) -> usize {
        self.shifts.len() + usize::from(self.include_original)
    }

    pub fn patch_len(&self) -> usize {
        self.channels() * self.patch * self.patch
    }

    pub fn validate(&self, dims: (usize, usize)) -> Result<()> {
        let p = self.patch;
        if p == 0 || dims.0 % p != 0 || dims.1 % p != 0 || dims.0 == 0 || dims.1 == 0 {
            return Err(Error::Shape(format!("patch {p} does not divide heatmap {}x{}", dims.0, dims.1)));
        }
        if self.channels() == 0 || self.dim == 0 {
            return Err(Error::Config("patch embedding needs at least one channel and dim >= 1".into()));
        }
        if self.shifts.iter().any(|&(dy, dx)| dy.unsigned_abs() >= p || dx.unsigned_abs() >= p) {
            return Err(Error::Config("shifts must be smaller than the patch".into()));
        }
        Ok(())
    }
}

impl Default for PatchEmbedConfig {
    fn default() -> Self {
        Self::diagonal(8, 64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerConfig {
    pub heatmap: (usize, usize),
    pub embed: PatchEmbedConfig,
    pub layers: usize,
    pub heads: usize,
    pub chunk: usize,
    pub classes: usize,
    pub ff_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            heatmap: (64, 64),
            embed: PatchEmbedConfig::default(),
            layers: 2,
            heads: 1,
            chunk: 8,
            classes: 3,
            ff_dim: 128,
            epochs: 1000,
            lr: 1e-3,
            weight_decay: 1e-3,
            batch: 16,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        self.embed.validate(self.heatmap)?;
        if self.layers == 0 || self.chunk == 0 || self.ff_dim == 0 || self.batch == 0 {
            return Err(Error::Config("layers, chunk, ff_dim and batch must be >= 1".into()));
        }
        if self.heads != 1 {
            return Err(Error::Config(format!("only single-head attention is supported, got {}", self.heads)));
        }
        if self.classes < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        Ok(())
    }

    pub fn tokens(&self) -> usize {
        let p = self.embed.patch;
        (self.heatmap.0 / p) * (self.heatmap.1 / p)
    }

    pub fn chunks(&self) -> usize {
        self.tokens().div_ceil(self.chunk)
    }

    pub fn to_values(&self) -> Vec<f64> {
        let mut v = vec![
            self.heatmap.0 as f64,
            self.heatmap.1 as f64,
            self.embed.patch as f64,
            self.embed.dim as f64,
            f64::from(u8::from(self.embed.include_original)),
            self.layers as f64,
            self.heads as f64,
            self.chunk as f64,
            self.classes as f64,
            self.ff_dim as f64,
            self.epochs as f64,
            self.lr,
            self.weight_decay,
            self.batch as f64,
            self.embed.shifts.len() as f64,
        ];
        for &(dy, dx) in &self.embed.shifts {
            v.push(dy as f64);
            v.push(dx as f64);
        }
        v
    }

    pub fn from_values(v: &[f64]) -> Result<Self> {
        let bad = || Error::InvalidInput("malformed classifier config".into());
        if v.len() < 15 {
            return Err(bad());
        }
        let u = |x: f64| x as usize;
        let ns = u(v[14]);
        if v.len() != 15 + 2 * ns {
            return Err(bad());
        }
        let shifts = (0..ns).map(|i| (v[15 + 2 * i] as isize, v[16 + 2 * i] as isize)).collect();
        let cfg = Self {
            heatmap: (u(v[0]), u(v[1])),
            embed: PatchEmbedConfig { patch: u(v[2]), dim: u(v[3]), shifts, include_original: v[4] != 0.0 },
            layers: u(v[5]),
            heads: u(v[6]),
            chunk: u(v[7]),
            classes: u(v[8]),
            ff_dim: u(v[9]),
            epochs: u(v[10]),
            lr: v[11],
            weight_decay: v[12],
            batch: u(v[13]),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Embedded tokens `[count, dim]` with the time-patch index of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Grid<f64>,
    pub time: Vec<usize>,
}

/// Flattened multi-channel patches `[tokens, channels * p * p]`,
/// time-major, plus each token's time index.
pub fn patch_matrix<T: Scalar>(map: &Grid<f64>, cfg: &PatchEmbedConfig) -> Result<(Tensor<T>, Vec<usize>)> {
    cfg.validate(map.dims())?;
    let (h, w) = map.dims();
    let p = cfg.patch;
    let (nr, nc) = (h / p, w / p);
    let mut layers: Vec<(isize, isize)> = Vec::with_capacity(cfg.channels());
    if cfg.include_original {
        layers.push((0, 0));
    }
    layers.extend(&cfg.shifts);
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            map.get(r as usize, c as usize)
        }
    };
    let len = cfg.patch_len();
    let mut out = Vec::with_capacity(nr * nc * len);
    let mut time = Vec::with_capacity(nr * nc);
    for pr in 0..nr {
        for pc in 0..nc {
            time.push(pr);
            for &(dy, dx) in &layers {
                for y in 0..p {
                    for x in 0..p {
                        let (r, c) = ((pr * p + y) as isize, (pc * p + x) as isize);
                        out.push(T::of(at(r - dy, c - dx)));
                    }
                }
            }
        }
    }
    Ok((Tensor::new(&[nr * nc, len], out)?, time))
}

#[derive(Debug, Clone, PartialEq)]
struct LayerIds {
    ln1: (ParamId, ParamId),
    q: ParamId,
    k: ParamId,
    v: ParamId,
    o: ParamId,
    ln2: (ParamId, ParamId),
    ff1: (ParamId, ParamId),
    ff2: (ParamId, ParamId),
}

/// Parameter layout of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerNet {
    cfg: TransformerConfig,
    embed_w: ParamId,
    embed_b: ParamId,
    pos: ParamId,
    perc: (ParamId, ParamId),
    chunk_q: ParamId,
    chunk_k: ParamId,
    chunk_v: ParamId,
    layers: Vec<LayerIds>,
    final_ln: (ParamId, ParamId),
    head: (ParamId, ParamId),
}

fn normal(r: &mut rng::Rng, shape: &[usize], sd: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| sd * rng::gaussian(r)).collect()).expect("shape")
}

/// Tokens in chunk order; `mask[i * n + j]` lets token `i` see token `j`
/// iff both lie in the same chunk.
fn chunk_mask(n: usize, chunk: usize) -> Vec<bool> {
    let mut m = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = i / chunk == j / chunk;
        }
    }
    m
}

/// `[chunks, n]` averaging matrix.
fn pool_matrix<T: Scalar>(n: usize, chunk: usize) -> Tensor<T> {
    let c = n.div_ceil(chunk);
    let mut m = vec![T::zero(); c * n];
    for k in 0..c {
        let lo = k * chunk;
        let hi = (lo + chunk).min(n);
        let v = T::of(1.0 / (hi - lo) as f64);
        for j in lo..hi {
            m[k * n + j] = v;
        }
    }
    Tensor::new(&[c, n], m).expect("shape")
}

impl DopplerNet {
    pub fn init(cfg: TransformerConfig, seed: u64) -> Result<(Self, ParamStore<f64>)> {
        cfg.validate()?;
        let mut r = rng::rng(seed);
        let mut s = ParamStore::new();
        let d = cfg.embed.dim;
        let n = cfg.tokens();
        let pl = cfg.embed.patch_len();
        let xavier = |i: usize, o: usize| sqrt(2.0 / (i + o) as f64);
        let embed_w = s.add("embed.w", normal(&mut r, &[d, pl], xavier(pl, d)))?;
        let embed_b = s.add("embed.b", Tensor::zeros(&[d]))?;
        let pos = s.add("embed.pos", normal(&mut r, &[n, d], 0.02))?;
        let dense = |s: &mut ParamStore<f64>, r: &mut rng::Rng, name: &str, o: usize, i: usize| -> Result<(ParamId, ParamId)> {
            Ok((s.add(&format!("{name}.w"), normal(r, &[o, i], xavier(i, o)))?, s.add(&format!("{name}.b"), Tensor::zeros(&[o]))?))
        };
        let ln = |s: &mut ParamStore<f64>, name: &str| -> Result<(ParamId, ParamId)> {
            Ok((s.add(&format!("{name}.g"), Tensor::filled(&[d], 1.0))?, s.add(&format!("{name}.b"), Tensor::zeros(&[d]))?))
        };
        let perc = dense(&mut s, &mut r, "chunk.perc", d, d)?;
        let chunk_q = s.add("chunk.q", normal(&mut r, &[d, d], xavier(d, d)))?;
        let chunk_k = s.add("chunk.k", normal(&mut r, &[d, d], xavier(d, d)))?;
        let chunk_v = s.add("chunk.v", normal(&mut r, &[d, d], xavier(d, d)))?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = format!("temporal{l}");
            let ln1 = ln(&mut s, &format!("{p}.ln1"))?;
            let q = s.add(&format!("{p}.q"), normal(&mut r, &[d, d], xavier(d, d)))?;
            let k = s.add(&format!("{p}.k"), normal(&mut r, &[d, d], xavier(d, d)))?;
            let v = s.add(&format!("{p}.v"), normal(&mut r, &[d, d], xavier(d, d)))?;
            let o = s.add(&format!("{p}.o"), normal(&mut r, &[d, d], xavier(d, d)))?;
            let ln2 = ln(&mut s, &format!("{p}.ln2"))?;
            let ff1 = dense(&mut s, &mut r, &format!("{p}.ff1"), cfg.ff_dim, d)?;
            let ff2 = dense(&mut s, &mut r, &format!("{p}.ff2"), d, cfg.ff_dim)?;
            layers.push(LayerIds { ln1, q, k, v, o, ln2, ff1, ff2 });
        }
        let final_ln = ln(&mut s, "final_ln")?;
        let head = (s.add("head.w", Tensor::zeros(&[cfg.classes, d]))?, s.add("head.b", Tensor::zeros(&[cfg.classes]))?);
        let net = Self { cfg, embed_w, embed_b, pos, perc, chunk_q, chunk_k, chunk_v, layers, final_ln, head };
        Ok((net, s))
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.cfg
    }

    /// Token embeddings `[N, D]`: patch projection plus positional code.
    pub fn embed<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, patches: &Tensor<T>) -> Result<Var> {
        let want = [self.cfg.tokens(), self.cfg.embed.patch_len()];
        if patches.shape() != want {
            return Err(Error::Shape(format!("patch matrix {:?}, expected {want:?}", patches.shape())));
        }
        let x = g.input(patches.clone())?;
        let w = g.param(store, self.embed_w)?;
        let b = g.param(store, self.embed_b)?;
        let e = g.dense(x, w, Some(b))?;
        let p = g.param(store, self.pos)?;
        g.add(e, p)
    }

    fn attend<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, ids: [ParamId; 3], mask: Option<&[bool]>) -> Result<Var> {
        let wq = g.param(store, ids[0])?;
        let wk = g.param(store, ids[1])?;
        let wv = g.param(store, ids[2])?;
        let q = g.dense(x, wq, None)?;
        let k = g.dense(x, wk, None)?;
        let v = g.dense(x, wv, None)?;
        g.attention(q, k, v, mask)
    }

    /// Class logits `[1, classes]` from embedded tokens.
    /// Also returns every attention node for inspection.
    pub fn head_forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, tokens: Var) -> Result<(Var, Vec<Var>)> {
        let n = self.cfg.tokens();
        let mut attn = Vec::new();
        // chunk level
        let (pw, pb) = (g.param(store, self.perc.0)?, g.param(store, self.perc.1)?);
        let h = g.dense(tokens, pw, Some(pb))?;
        let h = g.relu(h)?;
        let mask = chunk_mask(n, self.cfg.chunk);
        let a = self.attend(g, store, h, [self.chunk_q, self.chunk_k, self.chunk_v], Some(&mask))?;
        attn.push(a);
        let h = g.add(h, a)?;
        let pool = g.input(pool_matrix(n, self.cfg.chunk))?;
        let mut s = g.matmul(pool, h)?;
        // temporal level, pre-norm
        for l in &self.layers {
            let (lg, lb) = (g.param(store, l.ln1.0)?, g.param(store, l.ln1.1)?);
            let z = g.layer_norm(s, lg, lb)?;
            let a = self.attend(g, store, z, [l.q, l.k, l.v], None)?;
            attn.push(a);
            let wo = g.param(store, l.o)?;
            let a = g.dense(a, wo, None)?;
            s = g.add(s, a)?;
            let (lg, lb) = (g.param(store, l.ln2.0)?, g.param(store, l.ln2.1)?);
            let z = g.layer_norm(s, lg, lb)?;
            let (w1, b1) = (g.param(store, l.ff1.0)?, g.param(store, l.ff1.1)?);
            let z = g.dense(z, w1, Some(b1))?;
            let z = g.relu(z)?;
            let (w2, b2) = (g.param(store, l.ff2.0)?, g.param(store, l.ff2.1)?);
            let z = g.dense(z, w2, Some(b2))?;
            s = g.add(s, z)?;
        }
        let c = g.shape(s)[0];
        let avg = g.input(Tensor::filled(&[1, c], T::of(1.0 / c as f64)))?;
        let m = g.matmul(avg, s)?;
        let (fg, fb) = (g.param(store, self.final_ln.0)?, g.param(store, self.final_ln.1)?);
        let m = g.layer_norm(m, fg, fb)?;
        let (hw, hb) = (g.param(store, self.head.0)?, g.param(store, self.head.1)?);
        Ok((g.dense(m, hw, Some(hb))?, attn))
    }

    pub fn logits<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, patches: &Tensor<T>) -> Result<Var> {
        let t = self.embed(g, store, patches)?;
        Ok(self.head_forward(g, store, t)?.0)
    }
}

/// Classes by descending logit, ties by ascending index; first `k`.
pub fn rank_classes(logits: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > logits.len() {
        return Err(Error::InvalidArgument(format!("k = {k} outside [1, {}]", logits.len())));
    }
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct DopplerClassifier {
    pub net: DopplerNet,
    pub params: ParamStore<f32>,
    opt: AdamW<f32>,
}

impl DopplerClassifier {
    pub fn new(cfg: TransformerConfig, seed: u64) -> Result<Self> {
        let (net, p) = DopplerNet::init(cfg, seed)?;
        Ok(Self::from_parts(net, p.cast()))
    }

    pub fn from_parts(net: DopplerNet, params: ParamStore<f32>) -> Self {
        let opt = AdamW::new(&params, net.cfg.lr, net.cfg.weight_decay);
        Self { net, params, opt }
    }

    pub fn patches(&self, map: &Grid<f64>) -> Result<Tensor<f32>> {
        if map.dims() != self.net.cfg.heatmap {
            return Err(Error::Shape(format!("heatmap {:?}, configured {:?}", map.dims(), self.net.cfg.heatmap)));
        }
        Ok(patch_matrix(map, &self.net.cfg.embed)?.0)
    }

    /// Shifted-patch tokens of a heatmap.
    pub fn embed(&self, map: &Grid<f64>) -> Result<TokenSequence> {
        let (_, time) = patch_matrix::<f32>(map, &self.net.cfg.embed)?;
        let mut g = Graph::new();
        let t = self.net.embed(&mut g, &self.params, &self.patches(map)?)?;
        let d = self.net.cfg.embed.dim;
        Ok(TokenSequence { tokens: Grid::from_vec(time.len(), d, g.value(t).to_f64_vec())?, time })
    }

    pub fn logits(&self, map: &Grid<f64>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let l = self.net.logits(&mut g, &self.params, &self.patches(map)?)?;
        Ok(g.value(l).to_f64_vec())
    }

    pub fn predict_topk(&self, map: &Grid<f64>, k: usize) -> Result<Vec<usize>> {
        rank_classes(&self.logits(map)?, k)
    }

    /// Seeded mini-batch training; `log` sees every epoch.
    pub fn train(&mut self, data: &[(Grid<f64>, usize)], epochs: usize, seed: u64, mut log: impl FnMut(&EpochStats)) -> Result<Vec<EpochStats>> {
        let classes = self.net.cfg.classes;
        if let Some((_, l)) = data.iter().find(|(_, l)| *l >= classes) {
            return Err(Error::InvalidDataset(format!("label {l} outside {classes} classes")));
        }
        let mut seen: Vec<usize> = data.iter().map(|(_, l)| *l).collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() < 2 {
            return Err(Error::InvalidDataset(format!("training needs at least 2 classes, found {}", seen.len())));
        }
        let patches: Vec<Tensor<f32>> = data.iter().map(|(m, _)| self.patches(m)).collect::<Result<_>>()?;
        let mut history = Vec::with_capacity(epochs);
        let b = self.net.cfg.batch;
        for epoch in 0..epochs {
            let mut order: Vec<usize> = (0..data.len()).collect();
            rng::shuffle(&mut rng::rng(rng::derive_seed(seed, &[epoch as u64])), &mut order);
            let (mut loss_sum, mut correct) = (0.0, 0usize);
            for batch in order.chunks(b) {
                let scale = 1.0 / batch.len() as f32;
                let mut total: Vec<Option<Tensor<f32>>> = vec![None; self.params.len()];
                for &i in batch {
                    let mut g = Graph::new();
                    let logits = self.net.logits(&mut g, &self.params, &patches[i])?;
                    let lv = g.value(logits).to_f64_vec();
                    if rank_classes(&lv, 1)?[0] == data[i].1 {
                        correct += 1;
                    }
                    let l = g.softmax_ce(logits, data[i].1)?;
                    loss_sum += g.value(l).data()[0] as f64;
                    let grads = g.backward(l)?;
                    for (slot, gr) in total.iter_mut().zip(g.param_grads(&grads, &self.params)) {
                        let Some(mut gr) = gr else { continue };
                        match slot {
                            Some(acc) => acc.data_mut().iter_mut().zip(gr.data()).for_each(|(a, &v)| *a += scale * v),
                            None => {
                                gr.data_mut().iter_mut().for_each(|v| *v *= scale);
                                *slot = Some(gr);
                            }
                        }
                    }
                }
                self.opt.step(&mut self.params, &total)?;
            }
            let stats = EpochStats { epoch, loss: loss_sum / data.len() as f64, accuracy: correct as f64 / data.len() as f64 };
            if !stats.loss.is_finite() {
                return Err(Error::Numeric(format!("epoch {epoch} loss {}", stats.loss)));
            }
            log(&stats);
            history.push(stats);
        }
        Ok(history)
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor<f32>)> {
        let meta = self.net.cfg.to_values();
        let mut v = vec![("meta.clf".into(), Tensor::from_f64(&[meta.len()], &meta).expect("len"))];
        v.extend(self.params.iter().map(|(n, t)| (String::from(n), t.clone())));
        v
    }

    pub fn from_named_tensors(tensors: &[(String, Tensor<f32>)]) -> Result<Self> {
        let meta = tensors
            .iter()
            .find(|(n, _)| n == "meta.clf")
            .ok_or_else(|| Error::InvalidInput("checkpoint lacks meta.clf".into()))?;
        let cfg = TransformerConfig::from_values(&meta.1.to_f64_decimal())?;
        let (net, fresh) = DopplerNet::init(cfg, 0)?;
        let mut params: ParamStore<f32> = fresh.cast();
        let mut other = ParamStore::new();
        for (n, t) in tensors.iter().filter(|(n, _)| n != "meta.clf") {
            other.add(n, t.clone())?;
        }
        params.load_from(&other)?;
        Ok(Self::from_parts(net, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_rows_average_their_chunk() {
        let p = pool_matrix::<f64>(10, 4);
        assert_eq!(p.shape(), &[3, 10]);
        assert_eq!(p.data()[2 * 10 + 8], 0.5);
        assert_eq!(p.data()[4], 0.0);
    }

    #[test]
    fn config_values_roundtrip() {
        let c = TransformerConfig::default();
        assert_eq!(TransformerConfig::from_values(&c.to_values()).unwrap(), c);
    }

    #[test]
    fn shifted_copy_moves_content() {
        let mut m = Grid::filled(8, 8, 0.0);
        m.set(0, 0, 1.0);
        let cfg = PatchEmbedConfig { patch: 4, dim: 2, shifts: vec![(2, 2)], include_original: true };
        let (p, time) = patch_matrix::<f64>(&m, &cfg).unwrap();
        assert_eq!(time, vec![0, 0, 1, 1]);
        // shifted channel of token 0 holds the pixel at (2, 2)
        assert_eq!(p.data()[16 + 2 * 4 + 2], 1.0);
        assert_eq!(p.data()[0], 1.0);
    }
}
