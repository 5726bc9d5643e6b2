//! FMCW radar simulation in analytic complex baseband.
//!
//! A reflector at distance `d` contributes, after dechirping and low-pass
//! filtering, a tone at the beat frequency `f_IF = 2 d S / c` whose phase is
//! `2 pi f_c tau` with `tau = 2 d / c`. Samples are synthesized directly from
//! that closed form; [`reference_if_real`] keeps the explicit transmit/receive
//! mixing around for cross-checking.
//!
//! The phase grows with distance, so a receding target shows up at a positive
//! Doppler frequency.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};
use crate::kinematics::{KinematicTrace, RadarPose};
use crate::math::{self, SPEED_OF_LIGHT};
use crate::rng;

/// Chirp and frame timing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChirpConfig {
    /// Hz
    pub start_frequency: f64,
    /// Hz/s
    pub slope: f64,
    pub adc_samples: usize,
    /// samples/s
    pub adc_rate: f64,
    pub chirps_per_frame: usize,
    /// seconds between the end of one ramp and the start of the next
    pub idle_time: f64,
    pub frames: usize,
    pub tx_amplitude: f64,
}

impl Default for ChirpConfig {
    fn default() -> Self {
        Self {
            start_frequency: 77e9,
            slope: 30e12,
            adc_samples: 256,
            adc_rate: 10e6,
            chirps_per_frame: 255,
            idle_time: 100e-6,
            frames: 64,
            tx_amplitude: 1.0,
        }
    }
}

impl ChirpConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.start_frequency
    }

    /// Duration of the sampled ramp.
    pub fn ramp_time(&self) -> f64 {
        self.adc_samples as f64 / self.adc_rate
    }

    pub fn chirp_period(&self) -> f64 {
        self.idle_time + self.ramp_time()
    }

    pub fn frame_period(&self) -> f64 {
        self.chirps_per_frame as f64 * self.chirp_period()
    }

    pub fn beat_frequency(&self, distance: f64) -> f64 {
        2.0 * distance * self.slope / SPEED_OF_LIGHT
    }

    /// Largest distance whose beat frequency stays below `adc_rate / 2`.
    pub fn max_range(&self) -> f64 {
        self.adc_rate * SPEED_OF_LIGHT / (4.0 * self.slope)
    }

    pub fn range_per_bin(&self) -> f64 {
        SPEED_OF_LIGHT * self.adc_rate / (2.0 * self.slope * self.adc_samples as f64)
    }

    pub fn velocity_per_bin(&self) -> f64 {
        self.wavelength() / (2.0 * self.chirps_per_frame as f64 * self.chirp_period())
    }

    /// Fractional range-FFT bin of a reflector.
    pub fn range_bin(&self, distance: f64) -> f64 {
        self.beat_frequency(distance) * self.adc_samples as f64 / self.adc_rate
    }

    /// Fractional Doppler bin offset (from the zero-velocity bin) of a radial velocity.
    pub fn doppler_bin(&self, velocity: f64) -> f64 {
        velocity / self.velocity_per_bin()
    }

    pub fn chirp_start(&self, frame: usize, chirp: usize) -> f64 {
        frame as f64 * self.frame_period() + chirp as f64 * self.chirp_period()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(self.start_frequency > 0.0) {
            return bad("start frequency must be positive");
        }
        if !(self.slope > 0.0) {
            return bad("slope must be positive");
        }
        if self.adc_samples < 2 {
            return bad("at least 2 ADC samples are required");
        }
        if !(self.adc_rate > 0.0) {
            return bad("ADC rate must be positive");
        }
        if self.chirps_per_frame < 2 {
            return bad("at least 2 chirps per frame are required");
        }
        if !(self.idle_time >= 0.0) {
            return bad("idle time must be non-negative");
        }
        if self.frames == 0 {
            return bad("at least one frame is required");
        }
        Ok(())
    }

    fn check_alias(&self, distance: f64) -> Result<()> {
        if !(distance > 0.0) || !distance.is_finite() {
            return Err(Error::Config(format!("reflector distance must be positive, got {distance}")));
        }
        let f = self.beat_frequency(distance);
        if f >= self.adc_rate / 2.0 {
            return Err(Error::Config(format!(
                "beat frequency {f:.1} Hz of a reflector at {distance} m aliases (Nyquist {:.1} Hz)",
                self.adc_rate / 2.0
            )));
        }
        Ok(())
    }
}

/// One point reflector seen by a single chirp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflector {
    pub distance: f64,
    pub amplitude: f64,
    pub path_loss: f64,
}

/// Where a propagation path gets its distance from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathKind {
    /// Fixed distance in meters (walls, furniture, torso).
    Static { distance: f64 },
    /// Follows a segment of the kinematic trace.
    Dynamic { segment: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectorPath {
    pub kind: PathKind,
    /// alpha in (0, 1]
    pub path_loss: f64,
    pub amplitude: f64,
}

impl ReflectorPath {
    pub fn fixed(distance: f64, path_loss: f64, amplitude: f64) -> Self {
        Self { kind: PathKind::Static { distance }, path_loss, amplitude }
    }

    pub fn segment(segment: usize, path_loss: f64, amplitude: f64) -> Self {
        Self { kind: PathKind::Dynamic { segment }, path_loss, amplitude }
    }

    /// Complex gain `A_1 * alpha * A` applied to the unit tone.
    pub fn gain(&self, cfg: &ChirpConfig) -> f64 {
        cfg.tx_amplitude * self.path_loss * self.amplitude
    }

    fn validate(&self) -> Result<()> {
        if !(self.path_loss > 0.0 && self.path_loss <= 1.0) {
            return Err(Error::Config(format!("path loss must lie in (0, 1], got {}", self.path_loss)));
        }
        if let PathKind::Static { distance } = self.kind {
            if !(distance > 0.0) {
                return Err(Error::Config(format!("static path distance must be positive, got {distance}")));
            }
        }
        Ok(())
    }
}

/// Static environment plus gesture-driven paths.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub static_paths: Vec<ReflectorPath>,
    pub dynamic_paths: Vec<ReflectorPath>,
    /// Complex AWGN relative to the mean power of the noiseless cube; `None` = noiseless.
    pub noise_snr_db: Option<f64>,
    /// When set, static gains are rescaled so that their sum equals this
    /// multiple of the summed dynamic gains.
    pub static_dominance: Option<f64>,
}

impl SceneConfig {
    /// Torso, table and back wall, plus one dynamic path per traced segment
    /// weighted by its reflectivity.
    pub fn typical(trace: &KinematicTrace) -> Self {
        let dynamic_paths = trace
            .reflectivity()
            .iter()
            .enumerate()
            .map(|(s, &w)| ReflectorPath::segment(s, 1.0, w))
            .collect();
        Self {
            static_paths: vec![
                ReflectorPath::fixed(1.65, 0.8, 1.0),
                ReflectorPath::fixed(2.4, 0.3, 1.0),
                ReflectorPath::fixed(4.2, 0.5, 1.0),
            ],
            dynamic_paths,
            noise_snr_db: None,
            static_dominance: None,
        }
    }

    pub fn with_noise(mut self, snr_db: Option<f64>) -> Self {
        self.noise_snr_db = snr_db;
        self
    }

    /// Effective per-path gains of static paths after dominance scaling.
    pub fn static_gains(&self, cfg: &ChirpConfig) -> Vec<f64> {
        let raw: Vec<f64> = self.static_paths.iter().map(|p| p.gain(cfg)).collect();
        match self.static_dominance {
            Some(ratio) => {
                let dyn_sum: f64 = self.dynamic_paths.iter().map(|p| p.gain(cfg).abs()).sum();
                let stat_sum: f64 = raw.iter().map(|g| g.abs()).sum();
                if stat_sum == 0.0 {
                    raw
                } else {
                    let k = ratio * dyn_sum / stat_sum;
                    raw.iter().map(|g| g * k).collect()
                }
            }
            None => raw,
        }
    }

    fn validate(&self, trace_segments: usize) -> Result<()> {
        for p in self.static_paths.iter().chain(&self.dynamic_paths) {
            p.validate()?;
        }
        for p in &self.dynamic_paths {
            match p.kind {
                PathKind::Dynamic { segment } if segment < trace_segments => {}
                PathKind::Dynamic { segment } => {
                    return Err(Error::Config(format!(
                        "dynamic path bound to segment {segment} but the trace has {trace_segments}"
                    )))
                }
                PathKind::Static { .. } => {
                    return Err(Error::Config("static path listed among dynamic paths".into()))
                }
            }
        }
        if let Some(r) = self.static_dominance {
            if !(r > 0.0) {
                return Err(Error::Config("static dominance must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Simulated IF samples, `[frame][chirp][sample]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCube {
    config: ChirpConfig,
    data: Vec<Complex32>,
}

impl RadarCube {
    pub fn new(config: ChirpConfig, data: Vec<Complex32>) -> Result<Self> {
        let want = config.frames * config.chirps_per_frame * config.adc_samples;
        if data.len() != want {
            return Err(Error::Shape(format!("cube holds {} samples, config requires {want}", data.len())));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("radar cube".into()));
        }
        Ok(Self { config, data })
    }

    pub fn config(&self) -> &ChirpConfig {
        &self.config
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.config.frames, self.config.chirps_per_frame, self.config.adc_samples]
    }

    pub fn as_slice(&self) -> &[Complex32] {
        &self.data
    }

    /// One frame as a `[chirp][sample]` matrix in double precision.
    pub fn frame(&self, f: usize) -> Vec<Complex64> {
        let per = self.config.chirps_per_frame * self.config.adc_samples;
        self.data[f * per..(f + 1) * per]
            .iter()
            .map(|z| Complex64::new(z.re as f64, z.im as f64))
            .collect()
    }
}

/// Add one reflector's tone to `out`.
///
/// The phasor is advanced by multiplication and re-anchored every 64 samples
/// so rounding drift stays at the 1e-14 level.
fn accumulate_tone(out: &mut [Complex64], cfg: &ChirpConfig, distance: f64, gain: f64) {
    const ANCHOR: usize = 64;
    let start_phase = math::cycles_to_phase(2.0 * distance * cfg.start_frequency / SPEED_OF_LIGHT);
    let step = 2.0 * PI * cfg.beat_frequency(distance) / cfg.adc_rate;
    let rot = math::cis(step);
    let mut z = Complex64::new(0.0, 0.0);
    for (n, o) in out.iter_mut().enumerate() {
        if n % ANCHOR == 0 {
            z = math::cis(start_phase + step * n as f64) * gain;
        }
        *o += z;
        z *= rot;
    }
}

/// IF samples of a single chirp for a set of point reflectors.
pub fn if_chirp(cfg: &ChirpConfig, reflectors: &[Reflector]) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    for r in reflectors {
        cfg.check_alias(r.distance)?;
    }
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.adc_samples];
    for r in reflectors {
        accumulate_tone(&mut out, cfg, r.distance, cfg.tx_amplitude * r.path_loss * r.amplitude);
    }
    Ok(out)
}

/// Real-valued IF from explicit mixing of the transmitted and received ramps
/// with the sum-frequency term dropped (the ideal low-pass filter).
///
/// Slow; used only to cross-check [`if_chirp`].
pub fn reference_if_real(cfg: &ChirpConfig, distance: f64, path_loss: f64) -> Vec<f64> {
    let tau = 2.0 * distance / SPEED_OF_LIGHT;
    let a1 = cfg.tx_amplitude;
    let phase = |t: f64| 2.0 * PI * (cfg.start_frequency * t + cfg.slope * t * t / 2.0);
    (0..cfg.adc_samples)
        .map(|n| {
            let t = n as f64 / cfg.adc_rate;
            // Tx * Rx = A1 cos(a) * alpha A1 cos(b) = alpha A1^2 / 2 [cos(a - b) + cos(a + b)]
            0.5 * path_loss * a1 * a1 * math::cos(phase(t) - phase(t - tau))
        })
        .collect()
}

/// Distances of every path at time `t`: static first, then dynamic.
fn path_distances(scene: &SceneConfig, trace: &KinematicTrace, pose: &RadarPose, t: f64) -> (Vec<f64>, Vec<f64>) {
    let stat = scene
        .static_paths
        .iter()
        .map(|p| match p.kind {
            PathKind::Static { distance } => distance,
            PathKind::Dynamic { .. } => unreachable!("validated"),
        })
        .collect();
    let dynm = scene
        .dynamic_paths
        .iter()
        .map(|p| match p.kind {
            PathKind::Dynamic { segment } => pose.distance_to(trace.position_at(segment, t)),
            PathKind::Static { .. } => unreachable!("validated"),
        })
        .collect();
    (stat, dynm)
}

/// Simulate a full radar cube for a gesture.
///
/// Dynamic path distances are read from the trace at each chirp's start time
/// and held over the ramp. Noise, when configured, is drawn per frame from a
/// seed derived from `(seed, frame)`.
pub fn synthesize_cube(
    cfg: &ChirpConfig,
    scene: &SceneConfig,
    trace: &KinematicTrace,
    pose: &RadarPose,
    seed: u64,
) -> Result<RadarCube> {
    cfg.validate()?;
    scene.validate(trace.segment_count())?;
    let last_chirp = cfg.chirp_start(cfg.frames - 1, cfg.chirps_per_frame - 1);
    let need = cfg.frames as f64 * cfg.frame_period();
    if trace.duration() + 1e-9 < last_chirp {
        return Err(Error::Coverage { have: trace.duration(), need });
    }
    let static_gains = scene.static_gains(cfg);
    let (static_d, _) = path_distances(scene, trace, pose, 0.0);
    for &d in &static_d {
        cfg.check_alias(d)?;
    }
    let mut static_chirp = vec![Complex64::new(0.0, 0.0); cfg.adc_samples];
    for (&d, &g) in static_d.iter().zip(&static_gains) {
        accumulate_tone(&mut static_chirp, cfg, d, g);
    }
    let dyn_gains: Vec<f64> = scene.dynamic_paths.iter().map(|p| p.gain(cfg)).collect();

    let n = cfg.adc_samples;
    let total = cfg.frames * cfg.chirps_per_frame * n;
    let mut clean = Vec::with_capacity(total);
    let mut chirp = vec![Complex64::new(0.0, 0.0); n];
    for f in 0..cfg.frames {
        for c in 0..cfg.chirps_per_frame {
            let t = cfg.chirp_start(f, c);
            chirp.copy_from_slice(&static_chirp);
            let (_, dyn_d) = path_distances(scene, trace, pose, t);
            for (&d, &g) in dyn_d.iter().zip(&dyn_gains) {
                cfg.check_alias(d)?;
                accumulate_tone(&mut chirp, cfg, d, g);
            }
            clean.extend_from_slice(&chirp);
        }
    }

    if let Some(snr_db) = scene.noise_snr_db {
        let power = clean.iter().map(|z| z.norm_sqr()).sum::<f64>() / total as f64;
        let sigma = math::sqrt(power / math::pow(10.0, snr_db / 10.0) / 2.0);
        let per_frame = cfg.chirps_per_frame * n;
        for (f, frame) in clean.chunks_mut(per_frame).enumerate() {
            let mut r = rng::rng(rng::derive_seed(seed, &[f as u64]));
            for z in frame {
                z.re += sigma * rng::gaussian(&mut r);
                z.im += sigma * rng::gaussian(&mut r);
            }
        }
    }
    let data = clean.iter().map(|z| Complex32::new(z.re as f32, z.im as f32)).collect();
    RadarCube::new(cfg.clone(), data)
}

/// `|M|^2` for every sample of the cube, same layout as the cube.
pub fn magnitude_square_baseband(cube: &RadarCube) -> Vec<f64> {
    cube.as_slice()
        .iter()
        .map(|z| {
            let (re, im) = (z.re as f64, z.im as f64);
            re * re + im * im
        })
        .collect()
}

/// Ground-truth decomposition of `|M|^2` under a dominant static path.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticDominantExpansion {
    /// `D + sum_i B_i cos(theta_i - phi_s)` per sample.
    pub approx: Vec<f64>,
    /// `|H_0|` per sample.
    pub static_magnitude: Vec<f64>,
    /// `sum_i |A_i|` (constant).
    pub dynamic_magnitude: f64,
    /// `D = |H_0|^2 + sum_i |A_i|^2` per sample.
    pub dc: Vec<f64>,
    /// `phi_s` per sample.
    pub static_phase: Vec<f64>,
}

/// Evaluate the truncated expansion of `|M|^2` (dynamic-dynamic cross terms
/// dropped) from scene ground truth, sample by sample.
pub fn static_dominant_expansion(
    cfg: &ChirpConfig,
    scene: &SceneConfig,
    trace: &KinematicTrace,
    pose: &RadarPose,
) -> Result<StaticDominantExpansion> {
    cfg.validate()?;
    scene.validate(trace.segment_count())?;
    let static_gains = scene.static_gains(cfg);
    let dyn_gains: Vec<f64> = scene.dynamic_paths.iter().map(|p| p.gain(cfg)).collect();
    let (static_d, _) = path_distances(scene, trace, pose, 0.0);
    let mut h0 = vec![Complex64::new(0.0, 0.0); cfg.adc_samples];
    for (&d, &g) in static_d.iter().zip(&static_gains) {
        accumulate_tone(&mut h0, cfg, d, g);
    }
    let phase_at = |d: f64, n: usize| {
        math::cycles_to_phase(2.0 * d * cfg.start_frequency / SPEED_OF_LIGHT)
            + 2.0 * PI * cfg.beat_frequency(d) * n as f64 / cfg.adc_rate
    };
    let dyn_sum_sq: f64 = dyn_gains.iter().map(|g| g * g).sum();
    let total = cfg.frames * cfg.chirps_per_frame * cfg.adc_samples;
    let mut out = StaticDominantExpansion {
        approx: Vec::with_capacity(total),
        static_magnitude: Vec::with_capacity(total),
        dynamic_magnitude: dyn_gains.iter().map(|g| g.abs()).sum(),
        dc: Vec::with_capacity(total),
        static_phase: Vec::with_capacity(total),
    };
    for f in 0..cfg.frames {
        for c in 0..cfg.chirps_per_frame {
            let (_, dyn_d) = path_distances(scene, trace, pose, cfg.chirp_start(f, c));
            for (n, h) in h0.iter().enumerate() {
                let hm = h.norm();
                let phi_s = math::atan2(h.im, h.re);
                let dc = hm * hm + dyn_sum_sq;
                let mut v = dc;
                for (&d, &g) in dyn_d.iter().zip(&dyn_gains) {
                    v += 2.0 * hm * g.abs() * math::cos(phase_at(d, n) - phi_s);
                }
                out.approx.push(v);
                out.static_magnitude.push(hm);
                out.dc.push(dc);
                out.static_phase.push(phi_s);
            }
        }
    }
    Ok(out)
}
