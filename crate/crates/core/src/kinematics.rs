//! Parametric arm-gesture kinematics.
//!
//! A gesture is a smooth trajectory of a four-marker arm chain (shoulder,
//! elbow, wrist, hand) sampled at [`INTERNAL_RATE_HZ`]. Radar echoes and IMU
//! readings are both derived from the same [`KinematicTrace`], which is what
//! makes the two modalities physically paired.
//!
//! Coordinates: the radar sits at the origin looking along `+x`; the subject
//! stands about 1.5 m away facing the radar, `y` points to the subject's
//! left-hand side as seen by the radar and `z` is up.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::math::{self, add3, cos, cross3, norm3, scale3, sin, sub3};
use crate::rng;

/// Internal simulation rate shared by both modalities.
pub const INTERNAL_RATE_HZ: f64 = 1000.0;

/// Number of arm markers in the full chain.
pub const MAX_SEGMENTS: usize = 4;

/// Marker names, proximal to distal.
pub const SEGMENT_NAMES: [&str; MAX_SEGMENTS] = ["shoulder", "elbow", "wrist", "hand"];

/// Default radar reflectivity per marker (hand dominates).
pub const DEFAULT_REFLECTIVITY: [f64; MAX_SEGMENTS] = [0.2, 0.4, 0.7, 1.0];

const UPPER_ARM: f64 = 0.30;
const FOREARM: f64 = 0.27;
const HAND: f64 = 0.08;
const ARM_REACH: f64 = UPPER_ARM + FOREARM + HAND;

/// Step used to differentiate the closed-form trajectories.
const DIFF_STEP: f64 = 2e-4;

/// The 18 gesture classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum GestureClass {
    LateralToFrontRaise = 0,
    LateralRaise,
    FrontRaise,
    ForearmSupination,
    ForearmPronation,
    Push,
    Pull,
    SwipeLeft,
    SwipeRight,
    SwipeUp,
    SwipeDown,
    LateralRaise45Left,
    LateralRaise45Right,
    HorizontalRotationCw,
    HorizontalRotationCcw,
    VerticalRotationCw,
    VerticalRotationCcw,
    FrontToLateralRaise,
}

impl GestureClass {
    pub const COUNT: usize = 18;

    pub const ALL: [GestureClass; Self::COUNT] = [
        Self::LateralToFrontRaise,
        Self::LateralRaise,
        Self::FrontRaise,
        Self::ForearmSupination,
        Self::ForearmPronation,
        Self::Push,
        Self::Pull,
        Self::SwipeLeft,
        Self::SwipeRight,
        Self::SwipeUp,
        Self::SwipeDown,
        Self::LateralRaise45Left,
        Self::LateralRaise45Right,
        Self::HorizontalRotationCw,
        Self::HorizontalRotationCcw,
        Self::VerticalRotationCw,
        Self::VerticalRotationCcw,
        Self::FrontToLateralRaise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::LateralToFrontRaise => "lateral_to_front_raise",
            Self::LateralRaise => "lateral_raise",
            Self::FrontRaise => "front_raise",
            Self::ForearmSupination => "forearm_supination",
            Self::ForearmPronation => "forearm_pronation",
            Self::Push => "push",
            Self::Pull => "pull",
            Self::SwipeLeft => "swipe_left",
            Self::SwipeRight => "swipe_right",
            Self::SwipeUp => "swipe_up",
            Self::SwipeDown => "swipe_down",
            Self::LateralRaise45Left => "lateral_raise_45_left",
            Self::LateralRaise45Right => "lateral_raise_45_right",
            Self::HorizontalRotationCw => "horizontal_rotation_cw",
            Self::HorizontalRotationCcw => "horizontal_rotation_ccw",
            Self::VerticalRotationCw => "vertical_rotation_cw",
            Self::VerticalRotationCcw => "vertical_rotation_ccw",
            Self::FrontToLateralRaise => "front_to_lateral_raise",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }
}

/// Parameters of one gesture trial.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureSpec {
    pub class: GestureClass,
    /// Seconds.
    pub duration: f64,
    /// Characteristic hand excursion, meters.
    pub amplitude: f64,
    /// Number of distal markers modeled (1 = hand only, 4 = full chain).
    pub segment_count: usize,
    /// Per-trial variability scale; 0 gives the canonical trajectory.
    pub jitter: f64,
    pub seed: u64,
}

impl GestureSpec {
    pub fn new(class: GestureClass) -> Self {
        Self { class, duration: 2.1, amplitude: 0.5, segment_count: MAX_SEGMENTS, jitter: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidSpec(format!("duration must be positive, got {}", self.duration)));
        }
        // amplitude 0 is the motionless degenerate case and stays valid
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidSpec(format!("amplitude must be non-negative, got {}", self.amplitude)));
        }
        if self.segment_count == 0 || self.segment_count > MAX_SEGMENTS {
            return Err(Error::InvalidSpec(format!(
                "segment_count must be in 1..={MAX_SEGMENTS}, got {}",
                self.segment_count
            )));
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(Error::InvalidSpec(format!("jitter must be non-negative, got {}", self.jitter)));
        }
        Ok(())
    }
}

/// Sampled per-marker motion.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTrace {
    sample_rate: f64,
    positions: Vec<Vec<[f64; 3]>>,
    accelerations: Vec<Vec<[f64; 3]>>,
    reflectivity: Vec<f64>,
    names: Vec<String>,
}

impl KinematicTrace {
    /// Sample a closed-form trajectory `position(segment, t)` over `[0, duration]`.
    ///
    /// Accelerations come from a fine central second difference of the closed
    /// form (step 0.2 ms), independent of the sampling grid.
    pub fn from_fn(
        sample_rate: f64,
        duration: f64,
        reflectivity: Vec<f64>,
        position: impl Fn(usize, f64) -> [f64; 3],
    ) -> Result<Self> {
        if !(sample_rate > 0.0) || !(duration > 0.0) {
            return Err(Error::InvalidSpec("sample rate and duration must be positive".into()));
        }
        if reflectivity.is_empty() {
            return Err(Error::InvalidSpec("at least one segment is required".into()));
        }
        let n = math::round(duration * sample_rate) as usize + 1;
        let segs = reflectivity.len();
        let mut positions = Vec::with_capacity(segs);
        let mut accelerations = Vec::with_capacity(segs);
        let h = DIFF_STEP;
        for s in 0..segs {
            let mut pos = Vec::with_capacity(n);
            let mut acc = Vec::with_capacity(n);
            for k in 0..n {
                let t = k as f64 / sample_rate;
                let p = position(s, t);
                let pp = position(s, t + h);
                let pm = position(s, t - h);
                pos.push(p);
                acc.push([
                    (pp[0] - 2.0 * p[0] + pm[0]) / (h * h),
                    (pp[1] - 2.0 * p[1] + pm[1]) / (h * h),
                    (pp[2] - 2.0 * p[2] + pm[2]) / (h * h),
                ]);
            }
            positions.push(pos);
            accelerations.push(acc);
        }
        let names = (0..segs)
            .map(|s| {
                let offset = MAX_SEGMENTS.saturating_sub(segs);
                SEGMENT_NAMES.get(s + offset).map_or_else(|| format!("segment{s}"), |n| String::from(*n))
            })
            .collect();
        Ok(Self { sample_rate, positions, accelerations, reflectivity, names })
    }

    /// Build from stored samples (e.g. after deserialization).
    pub fn from_parts(
        sample_rate: f64,
        positions: Vec<Vec<[f64; 3]>>,
        accelerations: Vec<Vec<[f64; 3]>>,
        reflectivity: Vec<f64>,
    ) -> Result<Self> {
        let segs = positions.len();
        if segs == 0 || accelerations.len() != segs || reflectivity.len() != segs {
            return Err(Error::Shape("segment counts of positions/accelerations/weights differ".into()));
        }
        let n = positions[0].len();
        if n < 2 || positions.iter().chain(&accelerations).any(|s| s.len() != n) {
            return Err(Error::Shape("segment series must share a length of at least 2".into()));
        }
        let names = (0..segs)
            .map(|s| {
                let offset = MAX_SEGMENTS.saturating_sub(segs);
                SEGMENT_NAMES.get(s + offset).map_or_else(|| format!("segment{s}"), |n| String::from(*n))
            })
            .collect();
        Ok(Self { sample_rate, positions, accelerations, reflectivity, names })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.positions[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 / self.sample_rate
    }

    pub fn segment_count(&self) -> usize {
        self.positions.len()
    }

    pub fn segment_names(&self) -> &[String] {
        &self.names
    }

    pub fn positions(&self, segment: usize) -> &[[f64; 3]] {
        &self.positions[segment]
    }

    pub fn accelerations(&self, segment: usize) -> &[[f64; 3]] {
        &self.accelerations[segment]
    }

    pub fn reflectivity(&self) -> &[f64] {
        &self.reflectivity
    }

    /// Linearly interpolated position; `t` is clamped to the trace span.
    pub fn position_at(&self, segment: usize, t: f64) -> [f64; 3] {
        interp(&self.positions[segment], self.sample_rate, t)
    }

    pub fn acceleration_at(&self, segment: usize, t: f64) -> [f64; 3] {
        interp(&self.accelerations[segment], self.sample_rate, t)
    }

    /// Largest relative deviation between stored accelerations and the second
    /// finite difference of stored positions (interior samples).
    pub fn acceleration_consistency(&self) -> f64 {
        let dt = 1.0 / self.sample_rate;
        let mut max_err: f64 = 0.0;
        let mut max_acc: f64 = 0.0;
        for (pos, acc) in self.positions.iter().zip(&self.accelerations) {
            for k in 1..pos.len() - 1 {
                for a in 0..3 {
                    let fd = (pos[k + 1][a] - 2.0 * pos[k][a] + pos[k - 1][a]) / (dt * dt);
                    max_err = max_err.max((fd - acc[k][a]).abs());
                    max_acc = max_acc.max(acc[k][a].abs());
                }
            }
        }
        if max_acc == 0.0 {
            max_err
        } else {
            max_err / max_acc
        }
    }
}

fn interp(series: &[[f64; 3]], rate: f64, t: f64) -> [f64; 3] {
    let n = series.len();
    let x = (t * rate).clamp(0.0, (n - 1) as f64);
    let i = (math::floor(x) as usize).min(n - 2);
    let f = x - i as f64;
    let a = series[i];
    let b = series[i + 1];
    [a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f, a[2] + (b[2] - a[2]) * f]
}

/// Radar placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarPose {
    origin: [f64; 3],
    boresight: [f64; 3],
}

impl RadarPose {
    pub fn new(origin: [f64; 3], boresight: [f64; 3]) -> Result<Self> {
        let n = norm3(boresight);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Config("boresight must be a non-zero finite vector".into()));
        }
        Ok(Self { origin, boresight: scale3(boresight, 1.0 / n) })
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn boresight(&self) -> [f64; 3] {
        self.boresight
    }

    pub fn distance_to(&self, p: [f64; 3]) -> f64 {
        norm3(sub3(p, self.origin))
    }
}

impl Default for RadarPose {
    fn default() -> Self {
        Self { origin: [0.0; 3], boresight: [1.0, 0.0, 0.0] }
    }
}

/// Radar-relative state of one marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSample {
    pub distance: f64,
    pub radial_velocity: f64,
    pub acceleration: [f64; 3],
}

/// Radial distance, radial velocity (central difference over one sample
/// period) and acceleration of every segment at time `t`.
pub fn sample_kinematics(trace: &KinematicTrace, pose: &RadarPose, t: f64) -> Result<Vec<SegmentSample>> {
    let duration = trace.duration();
    if !(0.0..=duration).contains(&t) {
        return Err(Error::OutOfRange { t, duration });
    }
    let h = 1.0 / trace.sample_rate();
    let lo = (t - h).max(0.0);
    let hi = (t + h).min(duration);
    Ok((0..trace.segment_count())
        .map(|s| {
            let d = pose.distance_to(trace.position_at(s, t));
            let d_lo = pose.distance_to(trace.position_at(s, lo));
            let d_hi = pose.distance_to(trace.position_at(s, hi));
            SegmentSample {
                distance: d,
                radial_velocity: (d_hi - d_lo) / (hi - lo),
                acceleration: trace.acceleration_at(s, t),
            }
        })
        .collect())
}

/// Joint angles of the arm chain, radians.
#[derive(Debug, Clone, Copy, Default)]
struct ArmAngles {
    /// 0 = hanging down, pi/2 = horizontal.
    elevation: f64,
    /// 0 = toward the radar, +pi/2 = lateral.
    azimuth: f64,
    elbow_flex: f64,
    forearm_roll: f64,
}

/// Per-trial perturbation drawn from the gesture seed.
#[derive(Debug, Clone, Copy)]
struct TrialVariation {
    sweep_scale: f64,
    warp: f64,
    shoulder_offset: [f64; 3],
    azimuth_offset: f64,
    elevation_offset: f64,
}

impl TrialVariation {
    fn draw(jitter: f64, seed: u64) -> Self {
        if jitter == 0.0 {
            return Self {
                sweep_scale: 1.0,
                warp: 0.0,
                shoulder_offset: [0.0; 3],
                azimuth_offset: 0.0,
                elevation_offset: 0.0,
            };
        }
        let mut r = rng::rng(seed);
        let mut g = || rng::gaussian(&mut r).clamp(-2.5, 2.5);
        Self {
            sweep_scale: (1.0 + 0.12 * jitter * g()).max(0.2),
            // |warp| * pi < 1 keeps the time warp monotone
            warp: (0.04 * jitter * g()).clamp(-0.3, 0.3),
            shoulder_offset: [0.04 * jitter * g(), 0.03 * jitter * g(), 0.03 * jitter * g()],
            azimuth_offset: 0.08 * jitter * g(),
            elevation_offset: 0.06 * jitter * g(),
        }
    }
}

/// Out-and-back raised cosine: 0 -> 1 at mid-gesture -> 0.
fn out_and_back(u: f64) -> f64 {
    0.5 - 0.5 * cos(2.0 * PI * u)
}

/// One-way raised cosine: 0 -> 1 over the gesture.
fn one_way(u: f64) -> f64 {
    0.5 - 0.5 * cos(PI * u)
}

fn canonical_angles(class: GestureClass, sweep: f64, u: f64) -> ArmAngles {
    use GestureClass::*;
    let p = out_and_back(u);
    let m = one_way(u);
    let raise = 0.2 + 1.6 * sweep * p;
    let loop_phase = 2.0 * PI * m;
    let mut a = ArmAngles { elevation: raise, ..ArmAngles::default() };
    match class {
        FrontRaise => {}
        LateralRaise => a.azimuth = FRAC_PI_2,
        LateralRaise45Left => a.azimuth = FRAC_PI_4,
        LateralRaise45Right => a.azimuth = -FRAC_PI_4,
        LateralToFrontRaise => a.azimuth = FRAC_PI_2 * (1.0 - p),
        FrontToLateralRaise => {
            a.azimuth = FRAC_PI_2 * p;
            a.elbow_flex = 0.3 * p;
        }
        Push | Pull => {
            let q = if class == Push { p } else { 1.0 - p };
            a.elevation = 0.9 + 0.6 * sweep * q;
            a.elbow_flex = (1.5 - 1.9 * sweep * q).max(0.0);
            a.azimuth = 0.15;
        }
        SwipeLeft | SwipeRight => {
            let dir = if class == SwipeLeft { 1.0 } else { -1.0 };
            a.elevation = 1.2;
            a.elbow_flex = 0.5;
            a.azimuth = dir * 1.2 * sweep * (1.0 - 2.0 * m);
        }
        SwipeUp | SwipeDown => {
            let q = if class == SwipeUp { m } else { 1.0 - m };
            a.elevation = 0.5 + 1.4 * sweep * q;
            a.elbow_flex = 0.6;
            a.azimuth = 0.3;
        }
        ForearmSupination | ForearmPronation => {
            let dir = if class == ForearmSupination { 1.0 } else { -1.0 };
            a.elevation = 0.5;
            a.elbow_flex = 1.4 + 0.15 * sweep * p;
            a.forearm_roll = dir * 2.0 * sweep * p;
        }
        HorizontalRotationCw | HorizontalRotationCcw => {
            let dir = if class == HorizontalRotationCw { 1.0 } else { -1.0 };
            let r = 0.6 * sweep;
            a.elevation = 1.1;
            a.elbow_flex = 0.8 + r * sin(dir * loop_phase);
            a.azimuth = r * (cos(loop_phase) - 1.0) * 1.3;
        }
        VerticalRotationCw | VerticalRotationCcw => {
            let dir = if class == VerticalRotationCw { 1.0 } else { -1.0 };
            let r = 0.6 * sweep;
            a.elevation = 1.0 + r * sin(dir * loop_phase);
            a.azimuth = 0.2 + r * (cos(loop_phase) - 1.0) * 1.3;
            a.elbow_flex = 0.3;
        }
    }
    a
}

/// Forward kinematics: marker positions `[shoulder, elbow, wrist, hand]`.
fn arm_chain(shoulder: [f64; 3], a: ArmAngles) -> [[f64; 3]; MAX_SEGMENTS] {
    let (se, ce) = (sin(a.elevation), cos(a.elevation));
    let (sa, ca) = (sin(a.azimuth), cos(a.azimuth));
    // upper-arm direction and its elevation derivative (both unit, orthogonal)
    let upper = [-se * ca, se * sa, -ce];
    let normal = [-ce * ca, ce * sa, se];
    let side = cross3(upper, normal);
    let (sf, cf) = (sin(a.elbow_flex), cos(a.elbow_flex));
    let fore = add3(scale3(upper, cf), scale3(normal, sf));
    let fore_normal = add3(scale3(normal, cf), scale3(upper, -sf));
    let (sr, cr) = (sin(a.forearm_roll), cos(a.forearm_roll));
    let roll_dir = add3(scale3(fore_normal, cr), scale3(side, sr));
    let elbow = add3(shoulder, scale3(upper, UPPER_ARM));
    let wrist = add3(elbow, scale3(fore, FOREARM));
    let hand = add3(wrist, scale3(add3(scale3(fore, 0.6), scale3(roll_dir, 0.8)), HAND));
    [shoulder, elbow, wrist, hand]
}

const NOMINAL_SHOULDER: [f64; 3] = [1.5, 0.2, 0.3];

/// Generate the trajectory of one gesture trial at [`INTERNAL_RATE_HZ`].
pub fn make_gesture(spec: &GestureSpec) -> Result<KinematicTrace> {
    spec.validate()?;
    let var = TrialVariation::draw(spec.jitter, spec.seed);
    let sweep = spec.amplitude / ARM_REACH * var.sweep_scale;
    let duration = spec.duration;
    let static_pose = spec.amplitude == 0.0;
    let shoulder = add3(NOMINAL_SHOULDER, var.shoulder_offset);
    let first = MAX_SEGMENTS - spec.segment_count;
    let class = spec.class;
    let reflectivity = DEFAULT_REFLECTIVITY[first..].to_vec();
    KinematicTrace::from_fn(INTERNAL_RATE_HZ, duration, reflectivity, |s, t| {
        let u = t / duration;
        // smooth monotone time warp, identity at both ends
        let u = u + var.warp * sin(PI * u);
        let mut a = canonical_angles(class, sweep, u);
        if static_pose {
            a = canonical_angles(class, 0.0, 0.0);
        }
        a.azimuth += var.azimuth_offset;
        a.elevation += var.elevation_offset;
        arm_chain(shoulder, a)[first + s]
    })
}
