//! One paired sample: shared kinematics driving both the radar chain and
//! the IMU chain.

use alloc::format;

use crate::enhance::{enhance, Enhancement, EnhancementConfig};
use crate::error::{Error, Result};
use crate::fmcw::{synthesize_cube, ChirpConfig, RadarCube, SceneConfig};
use crate::imu::{spectrogram_triplet, synthesize_imu, GestureBand, ImuSpectrogramTriplet, ImuTrace, MountModel, StftParams};
use crate::kinematics::{make_gesture, GestureClass, GestureSpec, KinematicTrace, RadarPose};
use crate::math::round;
use crate::radar_dsp::{process_cube, resample_heatmap, DspConfig, TimeVelocityHeatmap};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub chirp: ChirpConfig,
    pub dsp: DspConfig,
    /// `None` = noiseless radar.
    pub noise_snr_db: Option<f64>,
    pub pose: RadarPose,
    pub mount: MountModel,
    pub band: GestureBand,
    pub stft: StftParams,
    pub enhancement: EnhancementConfig,
    /// Output heatmap `(time, velocity)` dims.
    pub heatmap: (usize, usize),
    /// Central Doppler bins kept before resampling.
    pub keep_bins: Option<usize>,
    pub duration: f64,
    pub amplitude: f64,
    pub jitter: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chirp: ChirpConfig::default(),
            dsp: DspConfig::default(),
            noise_snr_db: Some(20.0),
            pose: RadarPose::default(),
            mount: MountModel::default(),
            band: GestureBand::default(),
            stft: StftParams::default(),
            enhancement: EnhancementConfig::default(),
            heatmap: (64, 64),
            keep_bins: Some(64),
            duration: 2.1,
            amplitude: 0.5,
            jitter: 0.15,
        }
    }
}

impl PipelineConfig {
    pub fn imu_samples(&self) -> usize {
        round(self.duration * self.mount.sample_rate) as usize
    }

    /// Spectrogram `(freq, time)` dims implied by the duration.
    pub fn spectrogram_dims(&self) -> (usize, usize) {
        (self.stft.freq_bins(), self.stft.time_bins(self.imu_samples()))
    }

    /// Both modalities must span the same gesture: radar frames cover at
    /// most `duration` and at least 95% of it.
    pub fn check_alignment(&self) -> Result<()> {
        let radar = self.chirp.frames as f64 * self.chirp.frame_period();
        if radar > self.duration + 1e-9 || radar < 0.95 * self.duration {
            return Err(Error::Config(format!(
                "radar span {radar:.4} s does not match gesture duration {:.4} s",
                self.duration
            )));
        }
        if self.spectrogram_dims().1 == 0 {
            return Err(Error::Config("IMU window longer than the gesture".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PairedSample {
    pub trace: KinematicTrace,
    pub cube: RadarCube,
    pub imu: ImuTrace,
    pub triplet: ImuSpectrogramTriplet,
    /// Resampled, normalized heatmap before enhancement.
    pub heatmap: TimeVelocityHeatmap,
    pub enhancement: Enhancement,
}

/// Run both chains for one trial. Sub-seeds derive from `seed`.
pub fn paired_sample(class: GestureClass, seed: u64, cfg: &PipelineConfig) -> Result<PairedSample> {
    cfg.check_alignment()?;
    let spec = GestureSpec {
        class,
        duration: cfg.duration,
        amplitude: cfg.amplitude,
        jitter: cfg.jitter,
        seed: derive_seed(seed, &[0]),
        ..GestureSpec::new(class)
    };
    let trace = make_gesture(&spec)?;
    let scene = SceneConfig::typical(&trace).with_noise(cfg.noise_snr_db);
    let cube = synthesize_cube(&cfg.chirp, &scene, &trace, &cfg.pose, derive_seed(seed, &[1]))?;
    let raw = process_cube(&cube, &cfg.dsp)?;
    let heatmap = resample_heatmap(&raw, cfg.heatmap.0, cfg.heatmap.1, cfg.keep_bins)?;
    let enhancement = enhance(&heatmap, &cfg.enhancement)?;
    let imu = synthesize_imu(&trace, &cfg.mount, derive_seed(seed, &[2]))?;
    let triplet = spectrogram_triplet(&imu, &cfg.band, &cfg.stft)?;
    if triplet.dims() != cfg.spectrogram_dims() {
        return Err(Error::Config(format!("spectrogram {:?}, expected {:?}", triplet.dims(), cfg.spectrogram_dims())));
    }
    Ok(PairedSample { trace, cube, imu, triplet, heatmap, enhancement })
}
