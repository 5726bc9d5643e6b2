//! Independent numerical oracles shared by `selfcheck` and the acceptance
//! target. Each check returns a pass flag plus the measured quantity.

use imuwave_core::bridge::{forward_sample, transition_coeffs, BridgeSchedule, I2rConfig, I2rNet};
use imuwave_core::enhance::{kmeans2, morph_close, BinaryHeatmap, StructuringElement};
use imuwave_core::fmcw::{
    magnitude_square_baseband, static_dominant_expansion, synthesize_cube, ChirpConfig, ReflectorPath, SceneConfig,
};
use imuwave_core::imu::{imodwt, modwt};
use imuwave_core::metrics::{ssim, topk_accuracy, SsimConfig};
use imuwave_core::kinematics::{KinematicTrace, RadarPose};
use imuwave_core::nn::{grad_check, Graph, ParamStore, Tensor, Var};
use imuwave_core::radar_dsp::{range_doppler_map, remove_static_clutter};
use imuwave_core::rng::{self, Rng};
use imuwave_core::transformer::{patch_matrix, DopplerNet, PatchEmbedConfig, TransformerConfig};
use imuwave_core::Grid;

use crate::error::Result;

const GEPS: f64 = 1e-5;
const C: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

fn uniform(r: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng::uniform(r)
}

fn one_frame() -> ChirpConfig {
    ChirpConfig { frames: 1, ..ChirpConfig::default() }
}

fn linear_trace(segments: &[(f64, f64)], duration: f64) -> Result<KinematicTrace> {
    let segs = segments.to_vec();
    let refl = vec![1.0; segs.len()];
    Ok(KinematicTrace::from_fn(1000.0, duration, refl, move |s, t| [segs[s].0 + segs[s].1 * t, 0.0, 0.0])?)
}

/// Single moving reflector: range and Doppler argmax versus `2 d S / c` and
/// `2 v / lambda`, evaluated at mid-frame, within +-1 bin.
pub fn fft_bins(scenes: usize, seed: u64) -> Result<Outcome> {
    let cfg = one_frame();
    let lambda = C / cfg.start_frequency;
    let tc = cfg.adc_samples as f64 / cfg.adc_rate + cfg.idle_time;
    let n_c = cfg.chirps_per_frame as f64;
    let v_alias = lambda / (4.0 * tc);
    let d_alias = C * cfg.adc_rate / (4.0 * cfg.slope);
    let mut r = rng::rng(seed);
    let mut worst = 0i64;
    let mut failures = 0;
    for _ in 0..scenes {
        let v = uniform(&mut r, -0.9, 0.9) * v_alias;
        let d0 = uniform(&mut r, 0.5, 0.8 * d_alias);
        let span = n_c * tc;
        let trace = linear_trace(&[(d0, v)], span + 0.01)?;
        let scene = SceneConfig {
            static_paths: vec![],
            dynamic_paths: vec![ReflectorPath::segment(0, 1.0, 1.0)],
            noise_snr_db: None,
            static_dominance: None,
        };
        let cube = synthesize_cube(&cfg, &scene, &trace, &RadarPose::default(), 0)?;
        let rdm = range_doppler_map(&cfg, &cube.frame(0), true)?;
        let (row, col) = rdm.argmax();
        let d_mid = d0 + v * span / 2.0;
        let range_bin = (2.0 * d_mid * cfg.slope / C / (cfg.adc_rate / cfg.adc_samples as f64)).round() as i64;
        let dop_bin = (2.0 * v / lambda * n_c * tc).round() as i64 + (cfg.chirps_per_frame / 2) as i64;
        let err = (col as i64 - range_bin).abs().max((row as i64 - dop_bin).abs());
        worst = worst.max(err);
        if err > 1 {
            failures += 1;
        }
    }
    Ok(Outcome::new("fft_bins", failures == 0, format!("{scenes} scenes, worst bin error {worst}, failures {failures}")))
}

/// Static-only scenes vanish after mean-chirp subtraction.
pub fn clutter_removal(scenes: usize, seed: u64) -> Result<Outcome> {
    let cfg = one_frame();
    let mut r = rng::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..scenes {
        let trace = linear_trace(&[(1.0, 0.0)], 0.05)?;
        let paths = 1 + rng::uniform_int(&mut r, 0, 3);
        let static_paths = (0..paths)
            .map(|_| ReflectorPath::fixed(uniform(&mut r, 0.5, 10.0), uniform(&mut r, 0.1, 1.0), uniform(&mut r, 0.1, 2.0)))
            .collect();
        let scene = SceneConfig { static_paths, dynamic_paths: vec![], noise_snr_db: None, static_dominance: None };
        let frame = synthesize_cube(&cfg, &scene, &trace, &RadarPose::default(), 0)?.frame(0);
        let scale = frame.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let out = remove_static_clutter(&frame, cfg.chirps_per_frame)?;
        let res = out.iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max(res / scale);
    }
    Ok(Outcome::new("clutter_removal", worst <= 1e-10, format!("{scenes} scenes, max relative residual {worst:.3e}")))
}

/// `|M|^2` against the static-dominant expansion with `|H_0| / sum|A_i| >= 100`.
pub fn static_dominant_regime(scenes: usize, seed: u64) -> Result<Outcome> {
    let cfg = one_frame();
    let mut r = rng::rng(seed);
    let mut worst: f64 = 0.0;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..scenes {
        let dyn_count = 2 + rng::uniform_int(&mut r, 0, 2);
        let segs: Vec<(f64, f64)> = (0..dyn_count).map(|_| (uniform(&mut r, 0.8, 3.0), uniform(&mut r, -2.0, 2.0))).collect();
        let trace = linear_trace(&segs, 0.05)?;
        let dynamic_paths = (0..dyn_count).map(|s| ReflectorPath::segment(s, uniform(&mut r, 0.3, 1.0), uniform(&mut r, 0.2, 1.0))).collect();
        let scene = SceneConfig {
            static_paths: vec![ReflectorPath::fixed(uniform(&mut r, 0.5, 6.0), 1.0, 1.0)],
            dynamic_paths,
            noise_snr_db: None,
            static_dominance: Some(uniform(&mut r, 100.0, 1000.0)),
        };
        let cube = synthesize_cube(&cfg, &scene, &trace, &RadarPose::default(), 0)?;
        let m2 = magnitude_square_baseband(&cube);
        let e = static_dominant_expansion(&cfg, &scene, &trace, &RadarPose::default())?;
        let ratio = e.static_magnitude.iter().fold(f64::INFINITY, |a, &h| a.min(h)) / e.dynamic_magnitude;
        min_ratio = min_ratio.min(ratio);
        for (m, a) in m2.iter().zip(&e.approx) {
            worst = worst.max((m - a).abs() / m);
        }
    }
    Ok(Outcome::new(
        "static_dominant_regime",
        worst <= 0.01 && min_ratio >= 100.0,
        format!("{scenes} scenes, min ratio {min_ratio:.1}, max relative error {worst:.3e}"),
    ))
}

fn roll(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| x[(i + n - k % n) % n]).collect()
}

/// Perfect reconstruction and exact circular-shift equivariance.
pub fn modwt_identities(lengths: &[usize], levels: usize, seed: u64) -> Result<Outcome> {
    let mut r = rng::rng(seed);
    let mut worst: f64 = 0.0;
    let mut equivariant = true;
    for &n in lengths {
        let x: Vec<f64> = (0..n).map(|_| rng::gaussian(&mut r)).collect();
        let c = modwt(&x, levels)?;
        let y = imodwt(&c);
        let err = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(err / norm);
        for k in [1, 7, n / 3] {
            let cs = modwt(&roll(&x, k), levels)?;
            equivariant &= cs.smooth == roll(&c.smooth, k);
            for (a, b) in cs.details.iter().zip(&c.details) {
                equivariant &= *a == roll(b, k);
            }
        }
    }
    Ok(Outcome::new(
        "modwt",
        worst <= 1e-9 && equivariant,
        format!("lengths {lengths:?}, max reconstruction error {worst:.3e}, shift equivariant {equivariant}"),
    ))
}

fn element(size: usize, cross: bool) -> Grid<bool> {
    let h = size / 2;
    Grid::from_fn(size, size, |y, x| !cross || y == h || x == h)
}

/// Closing on the zero-extended plane from set definitions.
fn brute_close(map: &BinaryHeatmap, se: &Grid<bool>) -> BinaryHeatmap {
    let (rows, cols) = map.dims();
    let (sr, sc) = se.dims();
    let offs: Vec<(isize, isize)> = (0..sr)
        .flat_map(|y| (0..sc).map(move |x| (y, x)))
        .filter(|&(y, x)| se.get(y, x))
        .map(|(y, x)| (y as isize - (sr / 2) as isize, x as isize - (sc / 2) as isize))
        .collect();
    let in_x = |y: isize, x: isize| y >= 0 && x >= 0 && (y as usize) < rows && (x as usize) < cols && map.get(y as usize, x as usize);
    let dilated = |y: isize, x: isize| offs.iter().any(|&(dy, dx)| in_x(y - dy, x - dx));
    Grid::from_fn(rows, cols, |y, x| offs.iter().all(|&(dy, dx)| dilated(y as isize + dy, x as isize + dx)))
}

/// Closing equals the brute-force definition, is idempotent and extensive.
pub fn morphology(maps: usize, seed: u64) -> Result<Outcome> {
    let mut r = rng::rng(seed);
    let elements = [element(3, false), element(3, true), element(5, false)];
    let mut mismatches = 0;
    for i in 0..maps {
        let cells = &elements[i % elements.len()];
        let se = StructuringElement::new(cells.clone())?;
        let density = uniform(&mut r, 0.1, 0.7);
        let map = Grid::from_fn(8, 8, |_, _| rng::uniform(&mut r) < density);
        let closed = morph_close(&map, &se);
        let ok = closed == brute_close(&map, cells)
            && morph_close(&closed, &se) == closed
            && map.as_slice().iter().zip(closed.as_slice()).all(|(&a, &b)| !a || b);
        if !ok {
            mismatches += 1;
        }
    }
    Ok(Outcome::new("morphology", mismatches == 0, format!("{maps} random 8x8 maps, {mismatches} mismatches")))
}

fn wcss(points: &[f64], labels: &[bool]) -> f64 {
    let mut total = 0.0;
    for side in [false, true] {
        let v: Vec<f64> = points.iter().zip(labels).filter(|(_, &l)| l == side).map(|(&p, _)| p).collect();
        if v.is_empty() {
            continue;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        total += v.iter().map(|p| (p - m) * (p - m)).sum::<f64>();
    }
    total
}

/// Two-way k-means reaches the exhaustive WCSS optimum on small 1-D sets.
pub fn kmeans_exhaustive(instances: usize, seed: u64) -> Result<Outcome> {
    let mut r = rng::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = 2 + rng::uniform_int(&mut r, 0, 11);
        let points: Vec<f64> = (0..n).map(|_| uniform(&mut r, 0.0, 1.0)).collect();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            best = best.min(wcss(&points, &labels));
        }
        let k = kmeans2(&points, 1, 0, 100)?;
        let got = wcss(&points, &k.labels.iter().map(|&l| l == 1).collect::<Vec<_>>());
        worst = worst.max((got - best) / best.max(1e-300));
    }
    Ok(Outcome::new("kmeans", worst <= 1e-9, format!("{instances} instances, worst relative WCSS excess {worst:.3e}")))
}

/// Endpoint values and marginal/transition composition of the schedule.
pub fn bridge_schedule(steps: usize) -> Result<Outcome> {
    let s_max = 1.0;
    let sched = BridgeSchedule::new(steps, s_max)?;
    let m = |t: usize| t as f64 / steps as f64;
    let d = |t: usize| 2.0 * s_max * (m(t) - m(t) * m(t));
    let ends = sched.m(0) == 0.0 && sched.m(steps) == 1.0 && sched.delta(0) == 0.0 && sched.delta(steps) == 0.0;
    let mut worst: f64 = 0.0;
    for t in 0..=steps {
        worst = worst.max((sched.m(t) - m(t)).abs()).max((sched.delta(t) - d(t)).abs());
    }
    for t in 1..=steps {
        let (a, b, var) = transition_coeffs(t, &sched)?;
        // x_t = a x_{t-1} + b c + noise, composed with the marginal at t-1
        worst = worst
            .max((a * (1.0 - m(t - 1)) - (1.0 - m(t))).abs())
            .max((a * m(t - 1) + b - m(t)).abs())
            .max((a * a * d(t - 1) + var - d(t)).abs());
    }
    Ok(Outcome::new(
        "bridge_schedule",
        ends && worst <= 1e-12,
        format!("T={steps}, endpoints exact {ends}, max composition error {worst:.3e}"),
    ))
}

/// Empirical moments of forward samples against the closed-form marginal.
pub fn bridge_moments(steps: usize, samples: usize, seed: u64) -> Result<Outcome> {
    let sched = BridgeSchedule::new(steps, 1.0)?;
    let (x0, c) = (0.3, -0.7);
    let mut r = rng::rng(seed);
    let mut ok = true;
    let mut detail = Vec::new();
    for t in [steps / 10, steps / 2, steps - steps / 10] {
        let noise: Vec<f64> = (0..samples).map(|_| rng::gaussian(&mut r)).collect();
        let xs = forward_sample(&vec![x0; samples], &vec![c; samples], t, &noise, &sched)?;
        let mt = t as f64 / steps as f64;
        let var = 2.0 * (mt - mt * mt);
        let mean_ref = (1.0 - mt) * x0 + mt * c;
        let n = samples as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let emp_var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let z = (mean - mean_ref).abs() / (var / n).sqrt();
        let rel = (emp_var - var).abs() / var;
        ok &= z <= 4.0 && rel <= 0.1;
        detail.push(format!("t={t}: z {z:.2}, var err {:.1}%", 100.0 * rel));
    }
    Ok(Outcome::new("bridge_moments", ok, format!("{samples} samples; {}", detail.join("; "))))
}

/// SSIM identity, the constant-image closed form and top-k monotonicity.
pub fn metric_identities(sets: usize, seed: u64) -> Result<Outcome> {
    let mut r = rng::rng(seed);
    let cfg = SsimConfig::default();
    let mut self_err: f64 = 0.0;
    for _ in 0..20 {
        let x = Grid::from_fn(32, 32, |_, _| rng::uniform(&mut r));
        self_err = self_err.max((ssim(&x, &x, &cfg)? - 1.0).abs());
    }
    // zero variances leave only the luminance term
    let (a, b) = (0.5, 0.25);
    let closed = (2.0 * a * b + cfg.c1()) / (a * a + b * b + cfg.c1());
    let got = ssim(&Grid::filled(16, 16, a), &Grid::filled(16, 16, b), &cfg)?;
    let const_err = (got - closed).abs();
    let mut monotone = true;
    for _ in 0..sets {
        let classes = 2 + rng::uniform_int(&mut r, 0, 6);
        let n = 1 + rng::uniform_int(&mut r, 0, 49);
        let mut preds = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut p: Vec<usize> = (0..classes).collect();
            rng::shuffle(&mut r, &mut p);
            preds.push(p);
            labels.push(rng::uniform_int(&mut r, 0, classes - 1));
        }
        let mut prev = 0.0;
        for k in 1..=classes {
            let acc = topk_accuracy(&preds, &labels, k)?;
            monotone &= acc >= prev;
            prev = acc;
        }
        monotone &= prev == 1.0;
    }
    Ok(Outcome::new(
        "metrics",
        self_err <= 1e-9 && const_err <= 1e-12 && monotone,
        format!("ssim(x,x) error {self_err:.1e}, constant case {got:.6} vs {closed:.6}, top-k monotone on {sets} sets {monotone}"),
    ))
}

fn gauss_tensor(r: &mut Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| scale * rng::gaussian(r)).collect()).expect("shape")
}

/// Fixed random linear functional of `v`.
fn project(g: &mut Graph<f64>, v: Var, seed: u64) -> imuwave_core::Result<Var> {
    let n = g.value(v).len();
    let w = gauss_tensor(&mut rng::rng(seed), &[1, n], 1.0);
    let flat = g.reshape(v, &[1, n])?;
    let wv = g.input(w)?;
    let p = g.mul(flat, wv)?;
    g.mean(p)
}

type Build = fn(&ParamStore<f64>, &mut Graph<f64>) -> imuwave_core::Result<Var>;

fn p(s: &ParamStore<f64>, g: &mut Graph<f64>, name: &str) -> imuwave_core::Result<Var> {
    g.param(s, s.find(name).expect("declared parameter"))
}

fn op_cases() -> Vec<(&'static str, Vec<(&'static str, Vec<usize>)>, Build)> {
    vec![
        ("conv2d", vec![("x", vec![2, 6, 5]), ("w", vec![3, 2, 3, 3]), ("b", vec![3])], |s, g| {
            let (x, w, b) = (p(s, g, "x")?, p(s, g, "w")?, p(s, g, "b")?);
            let y = g.conv2d(x, w, Some(b), 2)?;
            project(g, y, 1)
        }),
        ("ldconv2d", vec![("x", vec![1, 6, 7]), ("w", vec![2, 1, 5]), ("pos", vec![5, 2]), ("b", vec![2])], |s, g| {
            let (x, w, ps, b) = (p(s, g, "x")?, p(s, g, "w")?, p(s, g, "pos")?, p(s, g, "b")?);
            let y = g.ldconv2d(x, w, ps, Some(b))?;
            project(g, y, 2)
        }),
        ("dense", vec![("x", vec![3, 4]), ("w", vec![5, 4]), ("b", vec![5])], |s, g| {
            let (x, w, b) = (p(s, g, "x")?, p(s, g, "w")?, p(s, g, "b")?);
            let y = g.dense(x, w, Some(b))?;
            project(g, y, 3)
        }),
        ("matmul+transpose", vec![("a", vec![3, 4]), ("b", vec![3, 2])], |s, g| {
            let (a, b) = (p(s, g, "a")?, p(s, g, "b")?);
            let at = g.transpose(a)?;
            let y = g.matmul(at, b)?;
            project(g, y, 4)
        }),
        ("relu+sigmoid", vec![("x", vec![4, 5])], |s, g| {
            let x = p(s, g, "x")?;
            let a = g.relu(x)?;
            let b = g.sigmoid(x)?;
            let y = g.add(a, b)?;
            project(g, y, 5)
        }),
        ("maxpool+upsample", vec![("x", vec![2, 4, 6])], |s, g| {
            let x = p(s, g, "x")?;
            let m = g.maxpool2(x)?;
            let y = g.upsample2(m)?;
            project(g, y, 6)
        }),
        ("layer_norm", vec![("x", vec![3, 6]), ("g", vec![6]), ("b", vec![6])], |s, g| {
            let (x, ga, b) = (p(s, g, "x")?, p(s, g, "g")?, p(s, g, "b")?);
            let y = g.layer_norm(x, ga, b)?;
            project(g, y, 7)
        }),
        ("attention", vec![("q", vec![4, 3]), ("k", vec![5, 3]), ("v", vec![5, 2])], |s, g| {
            let (q, k, v) = (p(s, g, "q")?, p(s, g, "k")?, p(s, g, "v")?);
            let mask: Vec<bool> = (0..20).map(|i| i % 5 != 3 || i < 5).collect();
            let y = g.attention(q, k, v, Some(&mask))?;
            project(g, y, 8)
        }),
        ("elementwise", vec![("a", vec![2, 3]), ("b", vec![2, 3]), ("s", vec![1]), ("c", vec![2])], |s, g| {
            let (a, b, sc, c) = (p(s, g, "a")?, p(s, g, "b")?, p(s, g, "s")?, p(s, g, "c")?);
            let m = g.mul(a, b)?;
            let d = g.sub(m, b)?;
            let e = g.add(d, a)?;
            let f = g.scale(e, 0.7)?;
            let h = g.scale_by(f, sc)?;
            let cb = g.channel_bias(h, c)?;
            let cat = g.concat(&[cb, a])?;
            project(g, cat, 9)
        }),
        ("mse", vec![("p", vec![2, 5])], |s, g| {
            let x = p(s, g, "p")?;
            g.mse(x, &[0.1, -0.2, 0.3, 0.0, 1.0, 0.5, 0.5, -1.0, 2.0, 0.0])
        }),
        ("softmax_ce", vec![("l", vec![1, 4])], |s, g| {
            let l = p(s, g, "l")?;
            g.softmax_ce(l, 2)
        }),
    ]
}

/// Small configuration for gradient checks of the translation network.
pub fn tiny_i2r_config() -> I2rConfig {
    I2rConfig {
        heatmap: (16, 16),
        spectrogram: (5, 6),
        steps: 20,
        widths: [2, 2, 3, 3],
        time_dim: 4,
        fusion_channels: 2,
        fusion_elements: 5,
        fusion_radius: 3.0,
        ..I2rConfig::default()
    }
}

/// Small configuration for gradient checks of the classifier.
pub fn tiny_transformer_config() -> TransformerConfig {
    TransformerConfig {
        heatmap: (16, 16),
        embed: PatchEmbedConfig::diagonal(4, 6),
        layers: 1,
        chunk: 4,
        classes: 3,
        ff_dim: 8,
        ..TransformerConfig::default()
    }
}

/// Zero-initialized tensors would make their upstream gradients vanish
/// identically; give them small random values.
fn randomize_zeros(store: &mut ParamStore<f64>, r: &mut Rng) {
    for i in 0..store.len() {
        let t = store.tensor_mut(i);
        if t.data().iter().all(|&v| v == 0.0) {
            for v in t.data_mut() {
                *v = 0.2 * rng::gaussian(r);
            }
        }
    }
}

fn check_row(rows: &mut Vec<(String, f64)>, name: &str, err: f64) {
    rows.push((name.to_string(), err));
}

/// Finite-difference checks of every op, the fusion module, the diffusion
/// loss path and the full classifier. Returns the worst relative error per
/// case as well.
pub fn gradient_integrity(tol: f64, seed: u64) -> Result<(Outcome, Vec<(String, f64)>)> {
    let mut rows = Vec::new();
    let mut r = rng::rng(seed);
    for (i, (name, specs, build)) in op_cases().into_iter().enumerate() {
        let mut s = ParamStore::new();
        for (pn, shape) in &specs {
            let mut t = gauss_tensor(&mut r, shape, 0.5);
            if *pn == "pos" {
                // off-grid offsets inside the support
                for v in t.data_mut() {
                    *v = v.clamp(-1.6, 1.6) + 0.13;
                }
            }
            s.add(pn, t)?;
        }
        let rep = grad_check(&s, 1e-6, 1000, seed + i as u64, build)?;
        check_row(&mut rows, name, rep.max_rel_err);
    }

    let cfg = tiny_i2r_config();
    let (net, mut store) = I2rNet::init(cfg.clone(), seed)?;
    randomize_zeros(&mut store, &mut r);
    let (f, t) = cfg.spectrogram;
    let axes: [Tensor<f64>; 3] = std::array::from_fn(|_| {
        Tensor::new(&[1, f, t], (0..f * t).map(|_| rng::uniform(&mut r)).collect()).expect("shape")
    });
    let rep = grad_check(&store, GEPS, 64, seed, |s, g| {
        let c = net.fusion_forward(g, s, &axes)?;
        project(g, c, 11)
    })?;
    check_row(&mut rows, "fusion_forward", rep.max_rel_err);

    let (h, w) = cfg.heatmap;
    let target: Vec<f64> = (0..h * w).map(|_| rng::uniform(&mut r)).collect();
    let eps: Vec<f64> = (0..h * w).map(|_| rng::gaussian(&mut r)).collect();
    let rep = grad_check(&store, GEPS, 48, seed, |s, g| net.loss(g, s, &axes, &target, cfg.steps / 2, &eps))?;
    check_row(&mut rows, "diffusion_loss", rep.max_rel_err);

    let tcfg = tiny_transformer_config();
    let (dnet, dstore) = DopplerNet::init(tcfg.clone(), seed)?;
    let mut dstore = dstore;
    randomize_zeros(&mut dstore, &mut r);
    let map = Grid::from_fn(tcfg.heatmap.0, tcfg.heatmap.1, |_, _| rng::uniform(&mut r));
    let (patches, _) = patch_matrix::<f64>(&map, &tcfg.embed)?;
    let rep = grad_check(&dstore, GEPS, 48, seed, |s, g| {
        let l = dnet.logits(g, s, &patches)?;
        g.softmax_ce(l, 1)
    })?;
    check_row(&mut rows, "doppler_transformer", rep.max_rel_err);

    let worst = rows.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let failing: Vec<&str> = rows.iter().filter(|(_, e)| *e > tol).map(|(n, _)| n.as_str()).collect();
    let detail = if failing.is_empty() {
        format!("{} cases, max relative error {worst:.3e}", rows.len())
    } else {
        format!("{} cases, max relative error {worst:.3e}, failing {failing:?}", rows.len())
    };
    Ok((Outcome::new("gradients", failing.is_empty(), detail), rows))
}
