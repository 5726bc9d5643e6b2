use imuwave_core::bridge::{
    forward_sample, residual_target, reverse_jump, reverse_step, transition_coeffs, BridgeSchedule, I2rConfig, I2rModel,
    SamplingConfig, TrainingPair,
};
use imuwave_core::imu::{ImuSpectrogramTriplet, StftParams};
use imuwave_core::{rng, Grid};
use proptest::prelude::*;

fn tiny_cfg() -> I2rConfig {
    I2rConfig {
        heatmap: (16, 16),
        spectrogram: (5, 6),
        steps: 20,
        widths: [2, 2, 3, 3],
        time_dim: 4,
        fusion_channels: 2,
        fusion_elements: 5,
        fusion_radius: 3.0,
        batch: 4,
        ..I2rConfig::default()
    }
}

fn triplet(seed: u64, dims: (usize, usize)) -> ImuSpectrogramTriplet {
    let mut r = rng::rng(seed);
    let mut g = || Grid::from_fn(dims.0, dims.1, |_, _| rng::uniform(&mut r));
    ImuSpectrogramTriplet { axes: [g(), g(), g()], params: StftParams::default(), norm: (0.0, 1.0) }
}

/// Vertical bar at a class-dependent column; the source encodes the class
/// in which axis is bright.
fn toy_pairs(n: usize) -> Vec<TrainingPair> {
    (0..n)
        .map(|i| {
            let label = i % 3;
            let target = Grid::from_fn(16, 16, |_, c| if c / 4 == label + 1 { 0.9 } else { 0.0 });
            let mut src = triplet(i as u64, (5, 6));
            for (a, axis) in src.axes.iter_mut().enumerate() {
                let k = if a == label { 1.0 } else { 0.1 };
                axis.as_mut_slice().iter_mut().for_each(|v| *v *= k);
            }
            TrainingPair { source: src, target, label }
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn marginal_moments_match_schedule() {
    let s = BridgeSchedule::new(200, 1.0).unwrap();
    let (x0, c) = (0.3, -1.2);
    let n = 20_000;
    let mut r = rng::rng(5);
    for t in [1, 50, 100, 180] {
        let xs: Vec<f64> = (0..n)
            .map(|_| forward_sample(&[x0], &[c], t, &[rng::gaussian(&mut r)], &s).unwrap()[0])
            .collect();
        let m = mean(&xs);
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
        let mu = (1.0 - s.m(t)) * x0 + s.m(t) * c;
        let se = (s.delta(t) / n as f64).sqrt();
        assert!((m - mu).abs() <= 4.0 * se, "t={t} mean {m} vs {mu}");
        assert!((v / s.delta(t) - 1.0).abs() < 0.05, "t={t} var {v} vs {}", s.delta(t));
    }
}

#[test]
fn chained_transitions_reproduce_the_marginal() {
    // push mean and variance through t single steps, compare with the closed form
    let s = BridgeSchedule::new(200, 1.0).unwrap();
    let (x0, c) = (0.7, 0.1);
    let (mut mu, mut var) = (x0, 0.0);
    for t in 1..200 {
        let (a, b, q) = transition_coeffs(t, &s).unwrap();
        mu = a * mu + b * c;
        var = a * a * var + q;
        let want = (1.0 - s.m(t)) * x0 + s.m(t) * c;
        assert!((mu - want).abs() < 1e-12);
        assert!((var - s.delta(t)).abs() < 1e-12);
    }
}

#[test]
fn endpoints_are_deterministic() {
    let s = BridgeSchedule::new(10, 1.0).unwrap();
    let x0 = [0.2, 0.4];
    let c = [1.0, -1.0];
    let e = [3.0, -2.0];
    assert_eq!(forward_sample(&x0, &c, 0, &e, &s).unwrap(), x0.to_vec());
    assert_eq!(forward_sample(&x0, &c, 10, &e, &s).unwrap(), c.to_vec());
}

#[test]
fn posterior_mean_matches_gaussian_conditioning() {
    // E[x_s | x_t, x0] = mu_s + a delta_s / delta_t (x_t - mu_t), a = (1 - m_t)/(1 - m_s)
    let s = BridgeSchedule::new(40, 1.0).unwrap();
    let (x0, c, xt) = (0.25, 0.8, 0.5);
    for (t, u) in [(30usize, 10usize), (20, 19), (39, 1), (5, 2)] {
        let r = [xt - x0];
        let got = reverse_jump(&[xt], &[c], &r, t, u, &s, None).unwrap()[0];
        let (mt, ms) = (s.m(t), s.m(u));
        let a = (1.0 - mt) / (1.0 - ms);
        let mu_t = (1.0 - mt) * x0 + mt * c;
        let mu_s = (1.0 - ms) * x0 + ms * c;
        let want = mu_s + a * s.delta(u) / s.delta(t) * (xt - mu_t);
        assert!((got - want).abs() < 1e-12, "({t},{u}) {got} vs {want}");
        let var = s.delta(u) - (a * s.delta(u)).powi(2) / s.delta(t);
        assert!((s.posterior_variance(t, u).unwrap() - var).abs() < 1e-12);
    }
}

#[test]
fn perfect_predictor_recovers_x0() {
    let s = BridgeSchedule::new(50, 1.0).unwrap();
    let mut r = rng::rng(9);
    let x0: Vec<f64> = (0..32).map(|_| rng::uniform(&mut r)).collect();
    let c: Vec<f64> = (0..32).map(|_| rng::gaussian(&mut r)).collect();
    for stride in [1, 5, 25, 50] {
        let mut x = c.clone();
        let mut t = 50;
        while t > 0 {
            let res: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
            x = if stride == 1 {
                reverse_step(&x, &c, &res, t, &s, None).unwrap()
            } else {
                reverse_jump(&x, &c, &res, t, t - stride, &s, None).unwrap()
            };
            t -= stride;
        }
        let worst = x.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "stride {stride}: {worst}");
    }
}

#[test]
fn residual_target_is_xt_minus_x0() {
    let s = BridgeSchedule::new(20, 1.0).unwrap();
    let x0 = [0.1, 0.9, 0.5];
    let c = [0.3, 0.3, -0.3];
    let e = [0.5, -1.5, 0.2];
    for t in 0..=20 {
        let xt = forward_sample(&x0, &c, t, &e, &s).unwrap();
        let r = residual_target(&x0, &c, t, &e, &s).unwrap();
        for i in 0..3 {
            assert!((xt[i] - x0[i] - r[i]).abs() < 1e-15);
        }
    }
}

#[test]
fn invalid_steps_and_lengths_are_rejected() {
    let s = BridgeSchedule::new(10, 1.0).unwrap();
    assert!(forward_sample(&[0.0], &[0.0], 11, &[0.0], &s).is_err());
    assert!(forward_sample(&[0.0, 1.0], &[0.0], 3, &[0.0], &s).is_err());
    assert!(reverse_jump(&[0.0], &[0.0], &[0.0], 5, 5, &s, None).is_err());
    assert!(reverse_step(&[0.0], &[0.0], &[0.0], 0, &s, None).is_err());
}

#[test]
fn zero_gates_make_the_condition_ignore_the_imu() {
    let cfg = tiny_cfg();
    let mut m = I2rModel::new(cfg.clone(), 3).unwrap();
    let (a, b) = (triplet(1, cfg.spectrogram), triplet(2, cfg.spectrogram));
    assert_ne!(m.condition(&a).unwrap(), m.condition(&b).unwrap());
    m.net.gate_override = Some([0.0; 3]);
    assert_eq!(m.condition(&a).unwrap(), m.condition(&b).unwrap());
    m.net.gate_override = Some([1.0, 0.0, 0.0]);
    let mut c = b.clone();
    c.axes[0] = a.axes[0].clone();
    assert_eq!(m.condition(&a).unwrap(), m.condition(&c).unwrap());
}

#[test]
fn training_halves_the_loss_on_a_toy_set() {
    let pairs = toy_pairs(12);
    let mut m = I2rModel::new(tiny_cfg(), 0).unwrap();
    let losses = m.fit(&pairs, 200, 1, |_, _| {}).unwrap();
    let (head, tail) = (mean(&losses[..20]), mean(&losses[180..]));
    assert!(tail <= 0.5 * head, "loss {head} -> {tail}");
    assert_eq!(m.optimizer_steps(), 200);
}

#[test]
fn training_and_translation_are_deterministic() {
    let pairs = toy_pairs(6);
    let run = || {
        let mut m = I2rModel::new(tiny_cfg(), 4).unwrap();
        let l = m.fit(&pairs, 15, 8, |_, _| {}).unwrap();
        let out = m.translate(&pairs[0].source, SamplingConfig { stride: 1, eta: 0.5 }, 2).unwrap();
        (l, m.named_tensors(), out.map)
    };
    assert_eq!(run(), run());
}

#[test]
fn translation_respects_stride_and_range() {
    let pairs = toy_pairs(3);
    let m = I2rModel::new(tiny_cfg(), 0).unwrap();
    for stride in [1, 4, 20] {
        let out = m.translate(&pairs[0].source, SamplingConfig { stride, eta: 0.0 }, 0).unwrap();
        assert_eq!(out.map.dims(), (16, 16));
        assert!(out.map.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert!(m.translate(&pairs[0].source, SamplingConfig { stride: 3, eta: 0.0 }, 0).is_err());
    assert!(m.translate(&pairs[0].source, SamplingConfig { stride: 0, eta: 0.0 }, 0).is_err());
}

#[test]
fn checkpoint_tensors_roundtrip() {
    let pairs = toy_pairs(3);
    let mut m = I2rModel::new(tiny_cfg(), 0).unwrap();
    m.fit(&pairs, 3, 0, |_, _| {}).unwrap();
    let back = I2rModel::from_named_tensors(&m.named_tensors()).unwrap();
    assert_eq!(back.net.config(), m.net.config());
    let s = SamplingConfig { stride: 5, eta: 0.0 };
    assert_eq!(back.translate(&pairs[1].source, s, 0).unwrap(), m.translate(&pairs[1].source, s, 0).unwrap());
}

#[test]
fn mismatched_pair_dims_are_rejected() {
    let mut m = I2rModel::new(tiny_cfg(), 0).unwrap();
    let mut p = toy_pairs(1);
    p[0].target = Grid::filled(8, 8, 0.0);
    assert!(m.fit(&p, 1, 0, |_, _| {}).is_err());
    assert!(m.fit(&[], 1, 0, |_, _| {}).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_holds_for_any_schedule(steps in 2usize..400, s_max in 0.1f64..3.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let s = BridgeSchedule::new(steps, s_max).unwrap();
        let t = 1 + ((steps - 1) as f64 * a) as usize;
        let u = ((t - 1) as f64 * b) as usize;
        let k = (1.0 - s.m(t)) / (1.0 - s.m(u));
        if t < steps {
            let lhs = s.delta(t);
            let rhs = k * k * s.delta(u) + s.transition_variance(t, u).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
        let v = s.posterior_variance(t, u).unwrap();
        prop_assert!(v >= 0.0 && v <= s.delta(u) + 1e-15);
    }

    #[test]
    fn reverse_jump_is_affine_in_the_residual(x in -2.0f64..2.0, c in -2.0f64..2.0, r1 in -1.0f64..1.0, r2 in -1.0f64..1.0) {
        let s = BridgeSchedule::new(30, 1.0).unwrap();
        let f = |r: f64| reverse_jump(&[x], &[c], &[r], 20, 10, &s, None).unwrap()[0];
        let mid = f(0.5 * (r1 + r2));
        prop_assert!((mid - 0.5 * (f(r1) + f(r2))).abs() < 1e-12);
    }
}
