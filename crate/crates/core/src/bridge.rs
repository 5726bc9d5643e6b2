//! Brownian-bridge translation from IMU spectrogram triplets to
//! time-velocity heatmaps.
//!
//! Orientation: `x_0` is the heatmap, the bridge endpoint `x_T` is the
//! fused IMU latent `c`. Sampling starts at `x_T = c` and walks back to `t = 0`.
//!
//! `m_t = t / T`, `δ_t = 2 s_max (m_t - m_t²)`,
//! `x_t = (1 - m_t) x_0 + m_t c + √δ_t ε`.
//! The predictor regresses the residual `r = x_t - x_0 = m_t (c - x_0) + √δ_t ε`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::imu::ImuSpectrogramTriplet;
use crate::math::sqrt;
use crate::nn::{sinusoidal_embedding, AdamW, Graph, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::radar_dsp::TimeVelocityHeatmap;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSchedule {
    steps: usize,
    s_max: f64,
    m: Vec<f64>,
    delta: Vec<f64>,
}

impl BridgeSchedule {
    pub fn new(steps: usize, s_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!("bridge needs at least 2 steps, got {steps}")));
        }
        if !(s_max > 0.0 && s_max.is_finite()) {
            return Err(Error::Config(format!("variance scale must be positive, got {s_max}")));
        }
        let m: Vec<f64> = (0..=steps).map(|t| t as f64 / steps as f64).collect();
        let delta = m.iter().map(|&m| 2.0 * s_max * (m - m * m)).collect();
        Ok(Self { steps, s_max, m, delta })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn m(&self, t: usize) -> f64 {
        self.m[t]
    }

    pub fn delta(&self, t: usize) -> f64 {
        self.delta[t]
    }

    fn check(&self, t: usize, lo: usize) -> Result<()> {
        if t < lo || t > self.steps {
            return Err(Error::InvalidStep { t, lo, hi: self.steps });
        }
        Ok(())
    }

    /// `δ_{t|s} = δ_t - δ_s ((1 - m_t) / (1 - m_s))²` for `s < t`.
    pub fn transition_variance(&self, t: usize, s: usize) -> Result<f64> {
        self.check(t, 1)?;
        if s >= t {
            return Err(Error::InvalidStep { t: s, lo: 0, hi: t - 1 });
        }
        let a = (1.0 - self.m[t]) / (1.0 - self.m[s]);
        Ok(self.delta[t] - self.delta[s] * a * a)
    }

    /// Variance of `x_s` given `x_t` and `x_0`:
    /// `δ_{t|s} δ_s / δ_t`, written so that it stays finite at `t = T`.
    pub fn posterior_variance(&self, t: usize, s: usize) -> Result<f64> {
        self.check(t, 1)?;
        if s >= t {
            return Err(Error::InvalidStep { t: s, lo: 0, hi: t - 1 });
        }
        if s == 0 {
            return Ok(0.0);
        }
        let (mt, ms) = (self.m[t], self.m[s]);
        let v = self.delta[s] * (1.0 - ms * (1.0 - mt) / (mt * (1.0 - ms)));
        Ok(v.max(0.0))
    }
}

/// One-step forward transition `x_t | x_{t-1}`:
/// `(coef on x_{t-1}, coef on c, variance)`.
pub fn transition_coeffs(t: usize, sched: &BridgeSchedule) -> Result<(f64, f64, f64)> {
    sched.check(t, 1)?;
    if t == sched.steps {
        return Ok((0.0, 1.0, 0.0));
    }
    let (mt, ms) = (sched.m[t], sched.m[t - 1]);
    let a = (1.0 - mt) / (1.0 - ms);
    Ok((a, mt - ms * a, sched.transition_variance(t, t - 1)?))
}

fn same_len(op: &str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{op}: lengths {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// Marginal sample `x_t`.
pub fn forward_sample(x0: &[f64], cond: &[f64], t: usize, noise: &[f64], sched: &BridgeSchedule) -> Result<Vec<f64>> {
    sched.check(t, 0)?;
    same_len("forward_sample", x0, cond)?;
    same_len("forward_sample", x0, noise)?;
    let (m, sd) = (sched.m[t], sqrt(sched.delta[t]));
    Ok(x0.iter().zip(cond).zip(noise).map(|((&a, &c), &e)| (1.0 - m) * a + m * c + sd * e).collect())
}

/// Regression target `x_t - x_0`.
pub fn residual_target(x0: &[f64], cond: &[f64], t: usize, noise: &[f64], sched: &BridgeSchedule) -> Result<Vec<f64>> {
    sched.check(t, 0)?;
    same_len("residual_target", x0, cond)?;
    same_len("residual_target", x0, noise)?;
    let (m, sd) = (sched.m[t], sqrt(sched.delta[t]));
    Ok(x0.iter().zip(cond).zip(noise).map(|((&a, &c), &e)| m * (c - a) + sd * e).collect())
}

/// Jump from `x_t` to `x_s` (`s < t`) given a residual estimate.
///
/// `x̂_0 = x_t - r̂`; mean `μ_s(x̂_0) + (m_s / m_t)(x_t - μ_t(x̂_0))`.
/// `noise` of `None` means the posterior mean.
pub fn reverse_jump(
    x_t: &[f64],
    cond: &[f64],
    residual: &[f64],
    t: usize,
    s: usize,
    sched: &BridgeSchedule,
    noise: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let var = sched.posterior_variance(t, s)?;
    same_len("reverse_step", x_t, cond)?;
    same_len("reverse_step", x_t, residual)?;
    if let Some(n) = noise {
        same_len("reverse_step", x_t, n)?;
    }
    let (mt, ms) = (sched.m[t], sched.m[s]);
    let ratio = ms / mt;
    let sd = sqrt(var);
    let out = (0..x_t.len())
        .map(|i| {
            let x0 = x_t[i] - residual[i];
            let mu_t = (1.0 - mt) * x0 + mt * cond[i];
            let mu_s = (1.0 - ms) * x0 + ms * cond[i];
            let e = noise.map_or(0.0, |n| n[i]);
            mu_s + ratio * (x_t[i] - mu_t) + sd * e
        })
        .collect();
    Ok(out)
}

/// Single step `t -> t - 1`.
pub fn reverse_step(
    x_t: &[f64],
    cond: &[f64],
    residual: &[f64],
    t: usize,
    sched: &BridgeSchedule,
    noise: Option<&[f64]>,
) -> Result<Vec<f64>> {
    sched.check(t, 1)?;
    reverse_jump(x_t, cond, residual, t, t - 1, sched, noise)
}

#[derive(Debug, Clone, PartialEq)]
pub struct I2rConfig {
    /// Heatmap `(time, velocity)` dims.
    pub heatmap: (usize, usize),
    /// Spectrogram `(freq, time)` dims.
    pub spectrogram: (usize, usize),
    pub steps: usize,
    pub s_max: f64,
    pub widths: [usize; 4],
    pub time_dim: usize,
    pub fusion_channels: usize,
    pub fusion_elements: usize,
    /// Bound on learned kernel-element offsets, pixels.
    pub fusion_radius: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
}

impl Default for I2rConfig {
    fn default() -> Self {
        Self {
            heatmap: (64, 64),
            spectrogram: (17, 45),
            steps: 200,
            s_max: 1.0,
            widths: [8, 16, 32, 64],
            time_dim: 32,
            fusion_channels: 4,
            fusion_elements: 9,
            fusion_radius: 4.0,
            lr: 1e-3,
            weight_decay: 0.0,
            batch: 8,
        }
    }
}

impl I2rConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.heatmap;
        if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return Err(Error::Config(format!("heatmap dims {h}x{w} must be positive multiples of 16")));
        }
        if self.spectrogram.0 == 0 || self.spectrogram.1 == 0 {
            return Err(Error::Config("empty spectrogram dims".into()));
        }
        if self.widths.contains(&0) || self.fusion_channels == 0 || self.fusion_elements == 0 {
            return Err(Error::Config("zero channel or element count".into()));
        }
        if self.time_dim < 2 || self.time_dim % 2 != 0 {
            return Err(Error::Config("time embedding dim must be even and >= 2".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        if !(self.fusion_radius > 0.0) {
            return Err(Error::Config("fusion radius must be positive".into()));
        }
        BridgeSchedule::new(self.steps, self.s_max).map(|_| ())
    }

    /// Flat numeric encoding for checkpoints.
    pub fn to_values(&self) -> Vec<f64> {
        let mut v = vec![
            self.heatmap.0 as f64,
            self.heatmap.1 as f64,
            self.spectrogram.0 as f64,
            self.spectrogram.1 as f64,
            self.steps as f64,
            self.s_max,
        ];
        v.extend(self.widths.iter().map(|&w| w as f64));
        v.extend([
            self.time_dim as f64,
            self.fusion_channels as f64,
            self.fusion_elements as f64,
            self.fusion_radius,
            self.lr,
            self.weight_decay,
            self.batch as f64,
        ]);
        v
    }

    pub fn from_values(v: &[f64]) -> Result<Self> {
        if v.len() != 17 {
            return Err(Error::InvalidInput(format!("i2r config needs 17 values, got {}", v.len())));
        }
        let u = |x: f64| x as usize;
        let cfg = Self {
            heatmap: (u(v[0]), u(v[1])),
            spectrogram: (u(v[2]), u(v[3])),
            steps: u(v[4]),
            s_max: v[5],
            widths: [u(v[6]), u(v[7]), u(v[8]), u(v[9])],
            time_dim: u(v[10]),
            fusion_channels: u(v[11]),
            fusion_elements: u(v[12]),
            fusion_radius: v[13],
            lr: v[14],
            weight_decay: v[15],
            batch: u(v[16]),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Paired sample: spectrogram triplet in, enhanced heatmap out.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub source: ImuSpectrogramTriplet,
    pub target: Grid<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct FusionIds {
    w: [ParamId; 3],
    pos: [ParamId; 3],
    b: [ParamId; 3],
    gate: [ParamId; 3],
    mix_w: ParamId,
    mix_b: ParamId,
    rows: ParamId,
    cols: ParamId,
    bias_map: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct UnetIds {
    temb_w: ParamId,
    temb_b: ParamId,
    /// 4 encoder stages, bottleneck, 4 decoder stages.
    conv_w: Vec<ParamId>,
    conv_b: Vec<ParamId>,
    stage_w: Vec<ParamId>,
    stage_b: Vec<ParamId>,
    out_w: ParamId,
    out_b: ParamId,
}

/// Architecture (parameter layout) of the fusion module plus predictor.
/// Parameters live in a separate [`ParamStore`] so the same network runs
/// in `f32` for training and `f64` for gradient checks.
#[derive(Debug, Clone, PartialEq)]
pub struct I2rNet {
    cfg: I2rConfig,
    fusion: FusionIds,
    unet: UnetIds,
    /// Replaces the learned gates when set.
    pub gate_override: Option<[f64; 3]>,
}

fn he_normal(r: &mut rng::Rng, shape: &[usize], fan_in: usize) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let sd = sqrt(2.0 / fan_in as f64);
    Tensor::new(shape, (0..n).map(|_| sd * rng::gaussian(r)).collect()).expect("shape")
}

/// Linear interpolation matrix `[out, inp]` mapping index `i` to
/// `src(i)` in input coordinates.
fn interp_matrix(out: usize, inp: usize, src: impl Fn(usize) -> f64) -> Tensor<f64> {
    let mut m = vec![0.0; out * inp];
    for i in 0..out {
        let p = src(i).clamp(0.0, (inp - 1) as f64);
        let lo = crate::math::floor(p) as usize;
        let hi = (lo + 1).min(inp - 1);
        let f = p - lo as f64;
        m[i * inp + lo] += 1.0 - f;
        m[i * inp + hi] += f;
    }
    Tensor::new(&[out, inp], m).expect("shape")
}

fn scalar_grad_free<T: Scalar>(g: &mut Graph<T>, v: f64) -> Result<Var> {
    g.input(Tensor::scalar(T::of(v)))
}

impl I2rNet {
    /// Build the layout and a freshly initialized `f64` parameter store.
    pub fn init(cfg: I2rConfig, seed: u64) -> Result<(Self, ParamStore<f64>)> {
        cfg.validate()?;
        let mut r = rng::rng(seed);
        let mut s = ParamStore::new();
        let e = cfg.fusion_elements;
        let fc = cfg.fusion_channels;
        let side = {
            let mut k = 1;
            while k * k < e {
                k += 1;
            }
            k
        };
        let ax = |name: &str, s: &mut ParamStore<f64>, r: &mut rng::Rng| -> Result<(ParamId, ParamId, ParamId, ParamId)> {
            let w = s.add(&format!("fusion.{name}.w"), he_normal(r, &[fc, 1, e], e))?;
            // dilation-2 grid (row-major over a side x side square) plus jitter
            let mut pos = Vec::with_capacity(2 * e);
            let c = (side - 1) as f64 / 2.0;
            for k in 0..e {
                let (ky, kx) = ((k / side) as f64, (k % side) as f64);
                for base in [2.0 * (ky - c), 2.0 * (kx - c)] {
                    let j = 0.25 * (2.0 * rng::uniform(r) - 1.0);
                    pos.push((base + j).clamp(-cfg.fusion_radius, cfg.fusion_radius));
                }
            }
            let p = s.add(&format!("fusion.{name}.pos"), Tensor::new(&[e, 2], pos)?)?;
            let b = s.add(&format!("fusion.{name}.b"), Tensor::zeros(&[fc]))?;
            let gte = s.add(&format!("fusion.{name}.gate"), Tensor::zeros(&[1]))?;
            Ok((w, p, b, gte))
        };
        let (wx, px, bx, gx) = ax("x", &mut s, &mut r)?;
        let (wy, py, by, gy) = ax("y", &mut s, &mut r)?;
        let (wz, pz, bz, gz) = ax("z", &mut s, &mut r)?;
        let mix_w = s.add("fusion.mix.w", Tensor::filled(&[1, fc, 1, 1], 1.0 / fc as f64))?;
        let mix_b = s.add("fusion.mix.b", Tensor::zeros(&[1]))?;
        let (h, w) = cfg.heatmap;
        let (sf, st) = cfg.spectrogram;
        let rows = s.add(
            "fusion.rows",
            interp_matrix(h, st, |i| if h > 1 { i as f64 * (st - 1) as f64 / (h - 1) as f64 } else { 0.0 }),
        )?;
        // velocity column j reads frequency bin |j - w/2| scaled onto [0, sf-1]
        let cols_t = interp_matrix(w, sf, |j| {
            let half = (w / 2).max(1) as f64;
            (j as f64 - w as f64 / 2.0).abs() / half * (sf - 1) as f64
        });
        let cols = s.add("fusion.cols", Tensor::new(&[sf, w], crate::nn::transpose_raw(cols_t.data(), w, sf))?)?;
        let bias_map = s.add("fusion.bias", Tensor::zeros(&[h, w]))?;
        let fusion = FusionIds {
            w: [wx, wy, wz],
            pos: [px, py, pz],
            b: [bx, by, bz],
            gate: [gx, gy, gz],
            mix_w,
            mix_b,
            rows,
            cols,
            bias_map,
        };

        let td = cfg.time_dim;
        let hidden = 2 * td;
        let temb_w = s.add("unet.temb.w", he_normal(&mut r, &[hidden, td], td))?;
        let temb_b = s.add("unet.temb.b", Tensor::zeros(&[hidden]))?;
        let [c1, c2, c3, c4] = cfg.widths;
        let plan = [(2, c1), (c1, c2), (c2, c3), (c3, c4), (c4, c4), (2 * c4, c3), (2 * c3, c2), (2 * c2, c1), (2 * c1, c1)];
        let (mut conv_w, mut conv_b, mut stage_w, mut stage_b) = (vec![], vec![], vec![], vec![]);
        for (i, &(ci, co)) in plan.iter().enumerate() {
            conv_w.push(s.add(&format!("unet.conv{i}.w"), he_normal(&mut r, &[co, ci, 3, 3], ci * 9))?);
            conv_b.push(s.add(&format!("unet.conv{i}.b"), Tensor::zeros(&[co]))?);
            stage_w.push(s.add(&format!("unet.temb{i}.w"), he_normal(&mut r, &[co, hidden], hidden))?);
            stage_b.push(s.add(&format!("unet.temb{i}.b"), Tensor::zeros(&[co]))?);
        }
        let out_w = s.add("unet.out.w", Tensor::zeros(&[1, c1, 1, 1]))?;
        let out_b = s.add("unet.out.b", Tensor::zeros(&[1]))?;
        let unet = UnetIds { temb_w, temb_b, conv_w, conv_b, stage_w, stage_b, out_w, out_b };
        Ok((Self { cfg, fusion, unet, gate_override: None }, s))
    }

    pub fn config(&self) -> &I2rConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> BridgeSchedule {
        BridgeSchedule::new(self.cfg.steps, self.cfg.s_max).expect("validated")
    }

    /// Clamp learned kernel positions to the configured radius.
    pub fn project_params<T: Scalar>(&self, store: &mut ParamStore<T>) {
        let r = T::of(self.cfg.fusion_radius);
        for &p in &self.fusion.pos {
            for v in store.get_mut(p).data_mut() {
                *v = v.max(-r).min(r);
            }
        }
    }

    /// Current gate weights (after sigmoid, or the override).
    pub fn gates<T: Scalar>(&self, store: &ParamStore<T>) -> [f64; 3] {
        self.gate_override.unwrap_or_else(|| {
            let g = |i: usize| crate::nn::sigmoid_f64(store.get(self.fusion.gate[i]).data()[0].as_f64());
            [g(0), g(1), g(2)]
        })
    }

    fn triplet_inputs<T: Scalar>(&self, g: &mut Graph<T>, axes: &[Tensor<T>; 3]) -> Result<[Var; 3]> {
        let (sf, st) = self.cfg.spectrogram;
        for a in axes {
            if a.shape() != [1, sf, st] {
                return Err(Error::Shape(format!("spectrogram axis {:?}, configured [1, {sf}, {st}]", a.shape())));
            }
        }
        Ok([g.input(axes[0].clone())?, g.input(axes[1].clone())?, g.input(axes[2].clone())?])
    }

    /// Conditioning latent `[H, W]` from a triplet of `[1, F, T]` tensors.
    pub fn fusion_forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, axes: &[Tensor<T>; 3]) -> Result<Var> {
        let inputs = self.triplet_inputs(g, axes)?;
        let f = &self.fusion;
        let mut acc: Option<Var> = None;
        for a in 0..3 {
            let w = g.param(store, f.w[a])?;
            let p = g.param(store, f.pos[a])?;
            let b = g.param(store, f.b[a])?;
            let y = g.ldconv2d(inputs[a], w, p, Some(b))?;
            let y = g.relu(y)?;
            let gate = match self.gate_override {
                Some(o) => scalar_grad_free(g, o[a])?,
                None => {
                    let th = g.param(store, f.gate[a])?;
                    g.sigmoid(th)?
                }
            };
            let y = g.scale_by(y, gate)?;
            acc = Some(match acc {
                None => y,
                Some(s) => g.add(s, y)?,
            });
        }
        let mw = g.param(store, f.mix_w)?;
        let mb = g.param(store, f.mix_b)?;
        let z = g.conv2d(acc.expect("three axes"), mw, Some(mb), 1)?;
        let (sf, st) = self.cfg.spectrogram;
        let z = g.reshape(z, &[sf, st])?;
        let zt = g.transpose(z)?;
        let rows = g.param(store, f.rows)?;
        let cols = g.param(store, f.cols)?;
        let y = g.matmul(rows, zt)?;
        let y = g.matmul(y, cols)?;
        let bias = g.param(store, f.bias_map)?;
        g.add(y, bias)
    }

    fn block<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, temb: Var, i: usize) -> Result<Var> {
        let u = &self.unet;
        let w = g.param(store, u.conv_w[i])?;
        let b = g.param(store, u.conv_b[i])?;
        let y = g.conv2d(x, w, Some(b), 1)?;
        let sw = g.param(store, u.stage_w[i])?;
        let sb = g.param(store, u.stage_b[i])?;
        let tb = g.dense(temb, sw, Some(sb))?;
        let c = g.shape(tb)[1];
        let tb = g.reshape(tb, &[c])?;
        let y = g.channel_bias(y, tb)?;
        g.relu(y)
    }

    /// Residual estimate `[H, W]` from `x_t` and `cond` (both `[H, W]`).
    pub fn predictor_forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x_t: Var, cond: Var, t: usize) -> Result<Var> {
        let (h, w) = self.cfg.heatmap;
        let u = &self.unet;
        let xt = g.reshape(x_t, &[1, h, w])?;
        let c = g.reshape(cond, &[1, h, w])?;
        let x = g.concat(&[xt, c])?;
        let emb = g.input(sinusoidal_embedding(t as f64, self.cfg.time_dim))?;
        let tw = g.param(store, u.temb_w)?;
        let tb = g.param(store, u.temb_b)?;
        let temb = g.dense(emb, tw, Some(tb))?;
        let temb = g.relu(temb)?;

        let mut skips = Vec::with_capacity(4);
        let mut y = x;
        for i in 0..4 {
            y = self.block(g, store, y, temb, i)?;
            skips.push(y);
            y = g.maxpool2(y)?;
        }
        y = self.block(g, store, y, temb, 4)?;
        for i in 0..4 {
            let up = g.upsample2(y)?;
            let cat = g.concat(&[up, skips[3 - i]])?;
            y = self.block(g, store, cat, temb, 5 + i)?;
        }
        let ow = g.param(store, u.out_w)?;
        let ob = g.param(store, u.out_b)?;
        let out = g.conv2d(y, ow, Some(ob), 1)?;
        g.reshape(out, &[h, w])
    }

    /// Training loss for one pair at step `t` with noise `eps`.
    /// Gradients reach both the predictor and the fusion module.
    pub fn loss<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        axes: &[Tensor<T>; 3],
        target: &[T],
        t: usize,
        eps: &[T],
    ) -> Result<Var> {
        let (h, w) = self.cfg.heatmap;
        if target.len() != h * w || eps.len() != h * w {
            return Err(Error::Shape(format!("target/noise must hold {} values", h * w)));
        }
        let sched = self.schedule();
        sched.check(t, 0)?;
        let m = T::of(sched.m(t));
        let sd = T::of(sqrt(sched.delta(t)));
        let cond = self.fusion_forward(g, store, axes)?;
        let x0 = g.input(Tensor::new(&[h, w], target.to_vec())?)?;
        let noise = g.input(Tensor::new(&[h, w], eps.iter().map(|&e| sd * e).collect())?)?;
        // r = m (c - x0) + sd eps ; x_t = x0 + r
        let diff = g.sub(cond, x0)?;
        let drift = g.scale(diff, m)?;
        let r = g.add(drift, noise)?;
        let x_t = g.add(x0, r)?;
        let pred = self.predictor_forward(g, store, x_t, cond, t)?;
        let err = g.sub(pred, r)?;
        let sq = g.mul(err, err)?;
        g.mean(sq)
    }
}

fn axes_tensors<T: Scalar>(triplet: &ImuSpectrogramTriplet) -> [Tensor<T>; 3] {
    let one = |a: &Grid<f64>| Tensor::from_f64(&[1, a.rows(), a.cols()], a.as_slice()).expect("grid dims");
    [one(&triplet.axes[0]), one(&triplet.axes[1]), one(&triplet.axes[2])]
}

/// Sampler settings for [`I2rModel::translate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    /// Step skip; must divide `T`.
    pub stride: usize,
    /// Multiplier on the posterior standard deviation (0 = mean path).
    pub eta: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { stride: 1, eta: 0.0 }
    }
}

/// Trainable translator: layout, `f32` parameters and optimizer state.
#[derive(Debug, Clone)]
pub struct I2rModel {
    pub net: I2rNet,
    pub params: ParamStore<f32>,
    opt: AdamW<f32>,
}

struct Prepared {
    axes: [Tensor<f32>; 3],
    target: Vec<f32>,
}

impl I2rModel {
    pub fn new(cfg: I2rConfig, seed: u64) -> Result<Self> {
        let (net, p) = I2rNet::init(cfg, seed)?;
        Ok(Self::from_parts(net, p.cast()))
    }

    pub fn from_parts(net: I2rNet, params: ParamStore<f32>) -> Self {
        let opt = AdamW::new(&params, net.cfg.lr, net.cfg.weight_decay);
        Self { net, params, opt }
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.opt.steps()
    }

    /// Check pair dims against the configuration.
    fn prepare(&self, pair: &TrainingPair) -> Result<Prepared> {
        let (h, w) = self.net.cfg.heatmap;
        if pair.target.dims() != (h, w) {
            return Err(Error::Shape(format!("target {:?}, configured ({h}, {w})", pair.target.dims())));
        }
        if pair.source.dims() != self.net.cfg.spectrogram {
            return Err(Error::Shape(format!(
                "spectrogram {:?}, configured {:?}",
                pair.source.dims(),
                self.net.cfg.spectrogram
            )));
        }
        Ok(Prepared { axes: axes_tensors(&pair.source), target: pair.target.as_slice().iter().map(|&v| v as f32).collect() })
    }

    /// One optimizer step on `batch`; returns the mean loss.
    /// Step indices and noise come from `seed`.
    pub fn train_step(&mut self, batch: &[&TrainingPair], seed: u64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let steps = self.net.cfg.steps;
        let n = self.net.cfg.heatmap.0 * self.net.cfg.heatmap.1;
        let scale = 1.0 / batch.len() as f32;
        let mut total: Vec<Option<Tensor<f32>>> = vec![None; self.params.len()];
        let mut loss = 0.0;
        for (i, pair) in batch.iter().enumerate() {
            let prep = self.prepare(pair)?;
            let mut r = rng::rng(rng::derive_seed(seed, &[i as u64]));
            let t = rng::uniform_int(&mut r, 1, steps - 1);
            let eps: Vec<f32> = (0..n).map(|_| rng::gaussian(&mut r) as f32).collect();
            let mut g = Graph::new();
            let l = self.net.loss(&mut g, &self.params, &prep.axes, &prep.target, t, &eps)?;
            loss += g.value(l).data()[0] as f64;
            let grads = g.backward(l)?;
            for (slot, gr) in total.iter_mut().zip(g.param_grads(&grads, &self.params)) {
                let Some(gr) = gr else { continue };
                match slot {
                    Some(acc) => acc.data_mut().iter_mut().zip(gr.data()).for_each(|(a, &b)| *a += scale * b),
                    None => {
                        let mut gr = gr;
                        gr.data_mut().iter_mut().for_each(|v| *v *= scale);
                        *slot = Some(gr);
                    }
                }
            }
        }
        let loss = loss / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss {loss}")));
        }
        self.opt.step(&mut self.params, &total)?;
        self.net.project_params(&mut self.params);
        Ok(loss)
    }

    /// `steps` optimizer steps over `pairs` in seeded shuffled order.
    /// `log(step, loss)` sees every step.
    pub fn fit(&mut self, pairs: &[TrainingPair], steps: usize, seed: u64, mut log: impl FnMut(usize, f64)) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Err(Error::InvalidDataset("no training pairs".into()));
        }
        let b = self.net.cfg.batch.min(pairs.len());
        let mut order: Vec<usize> = Vec::new();
        let mut cursor = 0;
        let mut epoch = 0u64;
        let mut losses = Vec::with_capacity(steps);
        for step in 0..steps {
            let mut batch = Vec::with_capacity(b);
            while batch.len() < b {
                if cursor >= order.len() {
                    order = (0..pairs.len()).collect();
                    rng::shuffle(&mut rng::rng(rng::derive_seed(seed, &[0, epoch])), &mut order);
                    epoch += 1;
                    cursor = 0;
                }
                batch.push(&pairs[order[cursor]]);
                cursor += 1;
            }
            let l = self.train_step(&batch, rng::derive_seed(seed, &[1, step as u64]))?;
            log(step, l);
            losses.push(l);
        }
        Ok(losses)
    }

    /// Conditioning latent for a triplet, `[H, W]` as `f64`.
    pub fn condition(&self, triplet: &ImuSpectrogramTriplet) -> Result<Grid<f64>> {
        let mut g = Graph::new();
        let c = self.net.fusion_forward(&mut g, &self.params, &axes_tensors(triplet))?;
        let (h, w) = self.net.cfg.heatmap;
        Grid::from_vec(h, w, g.value(c).to_f64_vec())
    }

    /// Predicted residual at `(x_t, t)`.
    pub fn predict_residual(&self, x_t: &[f64], cond: &[f64], t: usize) -> Result<Vec<f64>> {
        let (h, w) = self.net.cfg.heatmap;
        let mut g = Graph::<f32>::new();
        let xv = g.input(Tensor::from_f64(&[h, w], x_t)?)?;
        let cv = g.input(Tensor::from_f64(&[h, w], cond)?)?;
        let r = self.net.predictor_forward(&mut g, &self.params, xv, cv, t)?;
        Ok(g.value(r).to_f64_vec())
    }

    /// Reverse chain from `x_T = cond`, clamped to `[0, 1]`.
    pub fn translate(&self, triplet: &ImuSpectrogramTriplet, sampling: SamplingConfig, seed: u64) -> Result<TimeVelocityHeatmap> {
        let steps = self.net.cfg.steps;
        if sampling.stride == 0 || steps % sampling.stride != 0 {
            return Err(Error::InvalidArgument(format!("stride {} must divide T = {steps}", sampling.stride)));
        }
        let sched = self.net.schedule();
        let cond = self.condition(triplet)?;
        let c = cond.as_slice();
        let mut x = c.to_vec();
        let mut t = steps;
        while t > 0 {
            let s = t - sampling.stride;
            let res = self.predict_residual(&x, c, t)?;
            let noise: Option<Vec<f64>> = (sampling.eta != 0.0 && s > 0).then(|| {
                let mut r = rng::rng(rng::derive_seed(seed, &[t as u64]));
                (0..x.len()).map(|_| sampling.eta * rng::gaussian(&mut r)).collect()
            });
            x = reverse_jump(&x, c, &res, t, s, &sched, noise.as_deref())?;
            t = s;
        }
        let (h, w) = self.net.cfg.heatmap;
        let map = Grid::from_vec(h, w, x.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())?;
        Ok(TimeVelocityHeatmap { map, norm: (0.0, 1.0) })
    }

    /// Named `f32` tensors plus the encoded configuration, for checkpoints.
    pub fn named_tensors(&self) -> Vec<(String, Tensor<f32>)> {
        let mut v = vec![("meta.i2r".into(), Tensor::from_f64(&[17], &self.net.cfg.to_values()).expect("17 values"))];
        v.extend(self.params.iter().map(|(n, t)| (String::from(n), t.clone())));
        v
    }

    /// Inverse of [`Self::named_tensors`]. Optimizer state restarts.
    pub fn from_named_tensors(tensors: &[(String, Tensor<f32>)]) -> Result<Self> {
        let meta = tensors
            .iter()
            .find(|(n, _)| n == "meta.i2r")
            .ok_or_else(|| Error::InvalidInput("checkpoint lacks meta.i2r".into()))?;
        let cfg = I2rConfig::from_values(&meta.1.to_f64_decimal())?;
        let (net, fresh) = I2rNet::init(cfg, 0)?;
        let mut params: ParamStore<f32> = fresh.cast();
        let mut other = ParamStore::new();
        for (n, t) in tensors.iter().filter(|(n, _)| n != "meta.i2r") {
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
    fn schedule_endpoints() {
        let s = BridgeSchedule::new(200, 1.0).unwrap();
        assert_eq!(s.m(0), 0.0);
        assert_eq!(s.m(200), 1.0);
        assert_eq!(s.delta(0), 0.0);
        assert_eq!(s.delta(200), 0.0);
        assert_eq!(s.delta(100), 0.5);
        assert!(BridgeSchedule::new(1, 1.0).is_err());
        assert!(BridgeSchedule::new(0, 1.0).is_err());
        assert!(BridgeSchedule::new(10, 0.0).is_err());
    }

    #[test]
    fn first_transition_coefficient() {
        let s = BridgeSchedule::new(200, 1.0).unwrap();
        let (a, _, _) = transition_coeffs(1, &s).unwrap();
        assert!((a - (1.0 - 1.0 / 200.0)).abs() < 1e-15);
        assert_eq!(transition_coeffs(200, &s).unwrap(), (0.0, 1.0, 0.0));
        assert!(transition_coeffs(0, &s).is_err());
        assert!(transition_coeffs(201, &s).is_err());
    }

    #[test]
    fn posterior_variance_edges() {
        let s = BridgeSchedule::new(50, 1.0).unwrap();
        assert_eq!(s.posterior_variance(1, 0).unwrap(), 0.0);
        assert!((s.posterior_variance(50, 49).unwrap() - s.delta(49)).abs() < 1e-15);
        for t in 2..50 {
            let direct = s.transition_variance(t, t - 1).unwrap() * s.delta(t - 1) / s.delta(t);
            assert!((s.posterior_variance(t, t - 1).unwrap() - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn config_values_roundtrip() {
        let c = I2rConfig::default();
        assert_eq!(I2rConfig::from_values(&c.to_values()).unwrap(), c);
    }

    #[test]
    fn interpolation_rows_sum_to_one() {
        let m = interp_matrix(64, 43, |i| i as f64 * 42.0 / 63.0);
        for row in m.data().chunks(43) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
