//! Wearable accelerometer synthesis, MODWT band isolation and STFT spectrograms.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{self, FftPlan};
use crate::grid::Grid;
use crate::kinematics::KinematicTrace;
use crate::math;
use crate::rng;

/// Linear coupling of segment accelerations into the sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MountModel {
    /// Per-segment weights, proximal to distal. A trace with fewer segments
    /// uses the distal end of this list.
    pub weights: Vec<f64>,
    /// m/s^2
    pub gravity: [f64; 3],
    /// m/s^2
    pub noise_sigma: f64,
    /// Hz
    pub sample_rate: f64,
}

impl Default for MountModel {
    /// Wrist-worn sensor: mostly the wrist, a little of the forearm and hand.
    fn default() -> Self {
        Self { weights: vec![0.0, 0.1, 1.0, 0.15], gravity: [0.0, 0.0, 9.81], noise_sigma: 0.01, sample_rate: 100.0 }
    }
}

impl MountModel {
    fn weights_for(&self, segments: usize) -> Result<&[f64]> {
        let w = match self.weights.len() {
            n if n == segments => &self.weights[..],
            n if n > segments => &self.weights[n - segments..],
            n => {
                return Err(Error::InvalidMount(format!("{n} weights for a trace with {segments} segments")))
            }
        };
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidMount("weights must be finite and non-negative".into()));
        }
        if !w.iter().any(|&v| v > 0.0) {
            return Err(Error::InvalidMount("at least one weight must be positive".into()));
        }
        Ok(w)
    }
}

/// Three-axis acceleration at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuTrace {
    sample_rate: f64,
    axes: [Vec<f64>; 3],
}

impl ImuTrace {
    pub fn new(sample_rate: f64, axes: [Vec<f64>; 3]) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if axes[1].len() != axes[0].len() || axes[2].len() != axes[0].len() {
            return Err(Error::Shape("IMU axes differ in length".into()));
        }
        if axes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("IMU samples".into()));
        }
        Ok(Self { sample_rate, axes })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.axes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    pub fn axes(&self) -> &[Vec<f64>; 3] {
        &self.axes
    }
}

/// `I(t) = sum_i w_i a_i(t) + g + noise`, block-averaged down to the mount rate.
pub fn synthesize_imu(trace: &KinematicTrace, mount: &MountModel, seed: u64) -> Result<ImuTrace> {
    if !(mount.sample_rate > 0.0) {
        return Err(Error::InvalidMount("sample rate must be positive".into()));
    }
    if !(mount.noise_sigma >= 0.0) {
        return Err(Error::InvalidMount("noise sigma must be non-negative".into()));
    }
    let weights = mount.weights_for(trace.segment_count())?;
    let ratio = trace.sample_rate() / mount.sample_rate;
    if ratio < 1.0 {
        return Err(Error::InvalidMount(format!(
            "mount rate {} Hz exceeds the trace rate {} Hz",
            mount.sample_rate,
            trace.sample_rate()
        )));
    }
    let n_in = trace.len();
    let n_out = math::floor(n_in as f64 / ratio + 1e-9) as usize;
    if n_out == 0 {
        return Err(Error::InvalidLength { len: n_in, required: math::ceil(ratio) as usize });
    }
    let mut axes = [vec![0.0; n_out], vec![0.0; n_out], vec![0.0; n_out]];
    let mut r = rng::rng(seed);
    for k in 0..n_out {
        let lo = math::round(k as f64 * ratio) as usize;
        let hi = (math::round((k + 1) as f64 * ratio) as usize).min(n_in);
        let count = (hi - lo) as f64;
        for (a, axis) in axes.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (s, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let seg = &trace.accelerations(s)[lo..hi];
                acc += w * seg.iter().map(|v| v[a]).sum::<f64>() / count;
            }
            axis[k] = acc + mount.gravity[a];
        }
        if mount.noise_sigma > 0.0 {
            for axis in axes.iter_mut() {
                axis[k] += mount.noise_sigma * rng::gaussian(&mut r);
            }
        }
    }
    ImuTrace::new(mount.sample_rate, axes)
}

/// Daubechies-4 scaling filter (8 taps, sums to sqrt 2).
pub const DB4_SCALING: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_09,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

/// Level-`j` MODWT filters (rescaled by 1/sqrt 2), `(wavelet, scaling)`.
fn modwt_filters() -> ([f64; 8], [f64; 8]) {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let l = DB4_SCALING.len();
    let mut h = [0.0; 8];
    let mut g = [0.0; 8];
    for i in 0..l {
        g[i] = DB4_SCALING[i] * s;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        h[i] = sign * DB4_SCALING[l - 1 - i] * s;
    }
    (h, g)
}

/// Width of the equivalent level-`levels` filter.
pub fn modwt_support(levels: usize) -> usize {
    ((1usize << levels) - 1) * (DB4_SCALING.len() - 1) + 1
}

/// Circular MODWT coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Modwt {
    /// `details[j - 1]` holds level `j`.
    pub details: Vec<Vec<f64>>,
    pub smooth: Vec<f64>,
}

/// Which MODWT components make up the gesture band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GestureBand {
    pub levels: usize,
    /// Inclusive range of detail levels kept.
    pub first_detail: usize,
    pub last_detail: usize,
    pub keep_smooth: bool,
}

impl Default for GestureBand {
    fn default() -> Self {
        Self { levels: 4, first_detail: 2, last_detail: 4, keep_smooth: false }
    }
}

impl GestureBand {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.first_detail == 0 || self.first_detail > self.last_detail || self.last_detail > self.levels {
            return Err(Error::Config(format!(
                "detail levels {}..={} invalid for a {}-level transform",
                self.first_detail, self.last_detail, self.levels
            )));
        }
        Ok(())
    }
}

pub fn modwt(x: &[f64], levels: usize) -> Result<Modwt> {
    let need = modwt_support(levels);
    if x.len() < need {
        return Err(Error::InvalidLength { len: x.len(), required: need });
    }
    let (h, g) = modwt_filters();
    let n = x.len();
    let mut v = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for j in 1..=levels {
        let step = 1usize << (j - 1);
        let mut w = vec![0.0; n];
        let mut next = vec![0.0; n];
        for t in 0..n {
            let (mut sw, mut sv) = (0.0, 0.0);
            for l in 0..h.len() {
                let idx = (t + n * h.len() * step - step * l) % n;
                sw += h[l] * v[idx];
                sv += g[l] * v[idx];
            }
            w[t] = sw;
            next[t] = sv;
        }
        details.push(w);
        v = next;
    }
    Ok(Modwt { details, smooth: v })
}

/// Inverse MODWT; `details[j]` or `smooth` may be zeroed to reconstruct a band.
pub fn imodwt(c: &Modwt) -> Vec<f64> {
    let (h, g) = modwt_filters();
    let n = c.smooth.len();
    let mut v = c.smooth.clone();
    for j in (1..=c.details.len()).rev() {
        let step = 1usize << (j - 1);
        let w = &c.details[j - 1];
        let mut prev = vec![0.0; n];
        for t in 0..n {
            let mut s = 0.0;
            for l in 0..h.len() {
                let idx = (t + step * l) % n;
                s += h[l] * w[idx] + g[l] * v[idx];
            }
            prev[t] = s;
        }
        v = prev;
    }
    v
}

/// Decompose and reconstruct only the configured band.
pub fn modwt_filter(x: &[f64], band: &GestureBand) -> Result<(Modwt, Vec<f64>)> {
    band.validate()?;
    let coeffs = modwt(x, band.levels)?;
    let mut kept = coeffs.clone();
    for (j, d) in kept.details.iter_mut().enumerate() {
        if !(band.first_detail..=band.last_detail).contains(&(j + 1)) {
            d.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    if !band.keep_smooth {
        kept.smooth.iter_mut().for_each(|v| *v = 0.0);
    }
    let rec = imodwt(&kept);
    Ok((coeffs, rec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub window: usize,
    pub hop: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        Self { window: 32, hop: 4 }
    }
}

impl StftParams {
    pub fn freq_bins(&self) -> usize {
        self.window / 2 + 1
    }

    pub fn time_bins(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.hop + 1
        }
    }
}

/// One-sided Hann-windowed STFT magnitude, `[freq][time]`.
pub fn stft_magnitude(x: &[f64], params: &StftParams) -> Result<Grid<f64>> {
    if params.window < 2 || params.hop == 0 {
        return Err(Error::Config("STFT window must be >= 2 and hop >= 1".into()));
    }
    if x.len() < params.window {
        return Err(Error::InvalidLength { len: x.len(), required: params.window });
    }
    let win = fft::hann(params.window);
    let plan = FftPlan::new(params.window);
    let frames = params.time_bins(x.len());
    let bins = params.freq_bins();
    let mut out = Grid::filled(bins, frames, 0.0);
    let mut buf = vec![Complex64::new(0.0, 0.0); params.window];
    for f in 0..frames {
        let start = f * params.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(x[start + i] * win[i], 0.0);
        }
        plan.forward(&mut buf);
        for k in 0..bins {
            out.set(k, f, buf[k].norm());
        }
    }
    Ok(out)
}

/// Per-axis spectrograms, jointly normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSpectrogramTriplet {
    pub axes: [Grid<f64>; 3],
    pub params: StftParams,
    /// Joint `(min, max)` before normalization.
    pub norm: (f64, f64),
}

impl ImuSpectrogramTriplet {
    pub fn dims(&self) -> (usize, usize) {
        self.axes[0].dims()
    }
}

/// Raw (unnormalized) band-limited spectrograms of the three axes.
pub fn raw_spectrograms(imu: &ImuTrace, band: &GestureBand, params: &StftParams) -> Result<[Grid<f64>; 3]> {
    if imu.len() < params.window {
        return Err(Error::InvalidLength { len: imu.len(), required: params.window });
    }
    let one = |a: usize| -> Result<Grid<f64>> {
        let (_, rec) = modwt_filter(imu.axis(a), band)?;
        stft_magnitude(&rec, params)
    };
    Ok([one(0)?, one(1)?, one(2)?])
}

pub fn spectrogram_triplet(imu: &ImuTrace, band: &GestureBand, params: &StftParams) -> Result<ImuSpectrogramTriplet> {
    let mut axes = raw_spectrograms(imu, band, params)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for g in &axes {
        let (a, b) = g.min_max();
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let span = hi - lo;
    for g in &mut axes {
        for v in g.as_mut_slice() {
            *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
        }
    }
    Ok(ImuSpectrogramTriplet { axes, params: *params, norm: (lo, hi) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{make_gesture, GestureClass, GestureSpec};
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn quiet() -> MountModel {
        MountModel { gravity: [0.0; 3], noise_sigma: 0.0, ..MountModel::default() }
    }

    fn still_trace() -> KinematicTrace {
        KinematicTrace::from_fn(1000.0, 1.0, alloc::vec![1.0, 1.0], |s, _| [s as f64, 1.0, 0.5]).unwrap()
    }

    #[test]
    fn static_trace_reads_gravity() {
        let mount = MountModel { noise_sigma: 0.0, weights: alloc::vec![0.3, 0.7], ..MountModel::default() };
        let imu = synthesize_imu(&still_trace(), &mount, 0).unwrap();
        assert_eq!(imu.len(), 100);
        for a in 0..3 {
            assert!(imu.axis(a).iter().all(|&v| v == mount.gravity[a]));
        }
    }

    #[test]
    fn identity_coupling_is_block_average() {
        let tr = KinematicTrace::from_fn(1000.0, 0.5, alloc::vec![1.0], |_, t| [t * t * t, 0.0, math::sin(t)]).unwrap();
        let mount = MountModel { weights: alloc::vec![1.0], ..quiet() };
        let imu = synthesize_imu(&tr, &mount, 0).unwrap();
        let acc = tr.accelerations(0);
        for k in 0..imu.len() {
            let want: f64 = acc[k * 10..k * 10 + 10].iter().map(|v| v[0]).sum::<f64>() / 10.0;
            assert!((imu.axis(0)[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_weights_doubles_output() {
        let tr = make_gesture(&GestureSpec::new(GestureClass::SwipeLeft)).unwrap();
        let a = synthesize_imu(&tr, &quiet(), 0).unwrap();
        let twice = MountModel { weights: quiet().weights.iter().map(|w| w * 2.0).collect(), ..quiet() };
        let b = synthesize_imu(&tr, &twice, 0).unwrap();
        for ax in 0..3 {
            for (x, y) in a.axis(ax).iter().zip(b.axis(ax)) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn zero_weights_are_rejected() {
        let mount = MountModel { weights: alloc::vec![0.0, 0.0], ..MountModel::default() };
        assert!(matches!(synthesize_imu(&still_trace(), &mount, 0), Err(Error::InvalidMount(_))));
    }

    #[test]
    fn noise_is_seeded() {
        let tr = still_trace();
        let m = MountModel { weights: alloc::vec![1.0, 1.0], ..MountModel::default() };
        assert_eq!(synthesize_imu(&tr, &m, 5).unwrap(), synthesize_imu(&tr, &m, 5).unwrap());
        assert_ne!(synthesize_imu(&tr, &m, 5).unwrap(), synthesize_imu(&tr, &m, 6).unwrap());
    }

    #[test]
    fn filters_satisfy_orthogonality() {
        let s: f64 = DB4_SCALING.iter().sum();
        assert!((s - core::f64::consts::SQRT_2).abs() < 1e-12);
        let e: f64 = DB4_SCALING.iter().map(|v| v * v).sum();
        assert!((e - 1.0).abs() < 1e-12);
        let (h, _) = modwt_filters();
        assert!(h.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn constant_has_no_detail() {
        let x = alloc::vec![3.7; 128];
        let c = modwt(&x, 4).unwrap();
        for d in &c.details {
            assert!(d.iter().all(|v| v.abs() <= 1e-12));
        }
        assert!(c.smooth.iter().all(|v| (v - 3.7).abs() < 1e-12));
    }

    #[test]
    fn too_short_series_is_rejected() {
        assert_eq!(modwt_support(4), 106);
        assert!(matches!(modwt(&[0.0; 105], 4), Err(Error::InvalidLength { len: 105, required: 106 })));
        assert!(modwt(&[0.0; 106], 4).is_ok());
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        math::sqrt(num / den)
    }

    #[test]
    fn random_512_reconstructs() {
        let mut r = rng::rng(1);
        let x: Vec<f64> = (0..512).map(|_| rng::gaussian(&mut r)).collect();
        let c = modwt(&x, 4).unwrap();
        assert!(rel_err(&imodwt(&c), &x) <= 1e-9);
    }

    #[test]
    fn circular_shift_equivariance() {
        let mut r = rng::rng(2);
        for &n in &[128usize, 200, 512] {
            let x: Vec<f64> = (0..n).map(|_| rng::gaussian(&mut r)).collect();
            let k = 37;
            let shifted: Vec<f64> = (0..n).map(|t| x[(t + n - k) % n]).collect();
            let a = modwt(&x, 4).unwrap();
            let b = modwt(&shifted, 4).unwrap();
            for (da, db) in a.details.iter().chain([&a.smooth]).zip(b.details.iter().chain([&b.smooth])) {
                for t in 0..n {
                    assert_eq!(db[t], da[(t + n - k) % n], "n={n}");
                }
            }
        }
    }

    fn tone(freq: f64, amp: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| amp * math::sin(2.0 * PI * freq * i as f64 / 100.0)).collect()
    }

    #[test]
    fn ten_hz_tone_peaks_at_bin_3() {
        let oracle = math::round(10.0 * 32.0 / 100.0) as usize;
        assert_eq!(oracle, 3);
        let imu = ImuTrace::new(100.0, [tone(10.0, 1.0, 256), alloc::vec![0.0; 256], alloc::vec![0.0; 256]]).unwrap();
        let t = spectrogram_triplet(&imu, &GestureBand::default(), &StftParams::default()).unwrap();
        let g = &t.axes[0];
        for c in 0..g.cols() {
            let col: Vec<f64> = (0..g.rows()).map(|r| g.get(r, c)).collect();
            let k = col.iter().enumerate().fold(0, |b, (i, &v)| if v > col[b] { i } else { b });
            assert_eq!(k, oracle);
        }
    }

    #[test]
    fn zero_trace_gives_zero_triplet() {
        let z = alloc::vec![0.0; 200];
        let imu = ImuTrace::new(100.0, [z.clone(), z.clone(), z]).unwrap();
        let t = spectrogram_triplet(&imu, &GestureBand::default(), &StftParams::default()).unwrap();
        assert_eq!(t.dims(), (17, 43));
        assert!(t.axes.iter().all(|g| g.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn louder_axis_has_more_energy() {
        let imu = ImuTrace::new(100.0, [tone(8.0, 10.0, 300), tone(8.0, 1.0, 300), alloc::vec![0.0; 300]]).unwrap();
        let raw = raw_spectrograms(&imu, &GestureBand::default(), &StftParams::default()).unwrap();
        assert!(raw[0].energy() >= 10.0 * raw[1].energy());
    }

    #[test]
    fn short_trace_is_rejected() {
        let z = alloc::vec![0.0; 20];
        let imu = ImuTrace::new(100.0, [z.clone(), z.clone(), z]).unwrap();
        assert!(matches!(
            spectrogram_triplet(&imu, &GestureBand::default(), &StftParams::default()),
            Err(Error::InvalidLength { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn stft_peak_tracks_tone(freq in 1.0f64..49.0) {
            let x = tone(freq, 1.0, 128);
            let g = stft_magnitude(&x, &StftParams::default()).unwrap();
            let oracle = freq * 32.0 / 100.0;
            for c in 0..g.cols() {
                let col: Vec<f64> = (0..g.rows()).map(|r| g.get(r, c)).collect();
                let k = col.iter().enumerate().fold(0, |b, (i, &v)| if v > col[b] { i } else { b });
                prop_assert!((k as f64 - oracle).abs() <= 1.0, "freq {} bin {}", freq, k);
            }
        }

        #[test]
        fn imu_linear_in_weights(w in proptest::collection::vec(0.0f64..2.0, 4), k in 0.1f64..5.0) {
            prop_assume!(w.iter().any(|&v| v > 0.0));
            let tr = make_gesture(&GestureSpec::new(GestureClass::Push)).unwrap();
            let m1 = MountModel { weights: w.clone(), ..quiet() };
            let m2 = MountModel { weights: w.iter().map(|v| v * k).collect(), ..quiet() };
            let a = synthesize_imu(&tr, &m1, 0).unwrap();
            let b = synthesize_imu(&tr, &m2, 0).unwrap();
            for ax in 0..3 {
                for (x, y) in a.axis(ax).iter().zip(b.axis(ax)) {
                    prop_assert!((x * k - y).abs() <= 1e-9 * (1.0 + y.abs()));
                }
            }
        }
    }
}
