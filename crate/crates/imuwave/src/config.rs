//! Flat `key = value` configuration with `[section]` headers.
//!
//! Every setting has a default; files and command-line overrides replace
//! them. Values are normalized on entry so the digest depends only on the
//! effective settings, not on how they were spelled.

use std::collections::BTreeMap;
use std::path::Path;

use imuwave_core::bridge::{I2rConfig, SamplingConfig};
use imuwave_core::enhance::{EnhancementConfig, StructuringElement};
use imuwave_core::fmcw::ChirpConfig;
use imuwave_core::imu::{GestureBand, MountModel, StftParams};
use imuwave_core::kinematics::GestureClass;
use imuwave_core::pipeline::PipelineConfig;
use imuwave_core::radar_dsp::DspConfig;
use imuwave_core::transformer::{PatchEmbedConfig, TransformerConfig};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Float,
    Uint,
    Bool,
    OptFloat,
    Floats,
    Uints,
    Classes,
}

const KEYS: &[(&str, Ty)] = &[
    ("radar.start_frequency", Ty::Float),
    ("radar.slope", Ty::Float),
    ("radar.adc_samples", Ty::Uint),
    ("radar.adc_rate", Ty::Float),
    ("radar.chirps", Ty::Uint),
    ("radar.idle_time", Ty::Float),
    ("radar.frames", Ty::Uint),
    ("radar.snr_db", Ty::OptFloat),
    ("radar.window", Ty::Bool),
    ("radar.clutter_removal", Ty::Bool),
    ("radar.keep_bins", Ty::Uint),
    ("radar.heatmap_frames", Ty::Uint),
    ("radar.heatmap_bins", Ty::Uint),
    ("imu.sample_rate", Ty::Float),
    ("imu.noise_sigma", Ty::Float),
    ("imu.weights", Ty::Floats),
    ("imu.gravity", Ty::Floats),
    ("imu.levels", Ty::Uint),
    ("imu.first_detail", Ty::Uint),
    ("imu.last_detail", Ty::Uint),
    ("imu.keep_smooth", Ty::Bool),
    ("imu.stft_window", Ty::Uint),
    ("imu.stft_hop", Ty::Uint),
    ("enhancement.blur_sigma", Ty::Float),
    ("enhancement.blur_kernel", Ty::Uint),
    ("enhancement.kmeans_seed", Ty::Uint),
    ("enhancement.kmeans_max_iter", Ty::Uint),
    ("enhancement.closing_size", Ty::Uint),
    ("diffusion.steps", Ty::Uint),
    ("diffusion.s_max", Ty::Float),
    ("diffusion.widths", Ty::Uints),
    ("diffusion.time_dim", Ty::Uint),
    ("diffusion.fusion_channels", Ty::Uint),
    ("diffusion.fusion_elements", Ty::Uint),
    ("diffusion.fusion_radius", Ty::Float),
    ("diffusion.lr", Ty::Float),
    ("diffusion.weight_decay", Ty::Float),
    ("diffusion.batch", Ty::Uint),
    ("diffusion.train_steps", Ty::Uint),
    ("diffusion.epochs", Ty::Uint),
    ("diffusion.stride", Ty::Uint),
    ("diffusion.eta", Ty::Float),
    ("classifier.patch", Ty::Uint),
    ("classifier.dim", Ty::Uint),
    ("classifier.layers", Ty::Uint),
    ("classifier.heads", Ty::Uint),
    ("classifier.chunk", Ty::Uint),
    ("classifier.ff_dim", Ty::Uint),
    ("classifier.epochs", Ty::Uint),
    ("classifier.lr", Ty::Float),
    ("classifier.weight_decay", Ty::Float),
    ("classifier.batch", Ty::Uint),
    ("dataset.classes", Ty::Classes),
    ("dataset.per_class", Ty::Uint),
    ("dataset.duration", Ty::Float),
    ("dataset.amplitude", Ty::Float),
    ("dataset.jitter", Ty::Float),
    ("dataset.split", Ty::Floats),
    ("dataset.write_cube", Ty::Bool),
    ("dataset.seed", Ty::Uint),
];

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn defaults() -> Vec<(&'static str, String)> {
    let p = PipelineConfig::default();
    let d = I2rConfig::default();
    let c = TransformerConfig::default();
    let s = SamplingConfig::default();
    let classes = [GestureClass::Push, GestureClass::SwipeLeft, GestureClass::HorizontalRotationCw];
    vec![
        ("radar.start_frequency", f(p.chirp.start_frequency)),
        ("radar.slope", f(p.chirp.slope)),
        ("radar.adc_samples", p.chirp.adc_samples.to_string()),
        ("radar.adc_rate", f(p.chirp.adc_rate)),
        ("radar.chirps", p.chirp.chirps_per_frame.to_string()),
        ("radar.idle_time", f(p.chirp.idle_time)),
        ("radar.frames", p.chirp.frames.to_string()),
        ("radar.snr_db", p.noise_snr_db.map_or("none".into(), f)),
        ("radar.window", p.dsp.window.to_string()),
        ("radar.clutter_removal", p.dsp.clutter_removal.to_string()),
        ("radar.keep_bins", p.keep_bins.unwrap_or(0).to_string()),
        ("radar.heatmap_frames", p.heatmap.0.to_string()),
        ("radar.heatmap_bins", p.heatmap.1.to_string()),
        ("imu.sample_rate", f(p.mount.sample_rate)),
        ("imu.noise_sigma", f(p.mount.noise_sigma)),
        ("imu.weights", join(&p.mount.weights.iter().map(|&w| f(w)).collect::<Vec<_>>())),
        ("imu.gravity", join(&p.mount.gravity.iter().map(|&w| f(w)).collect::<Vec<_>>())),
        ("imu.levels", p.band.levels.to_string()),
        ("imu.first_detail", p.band.first_detail.to_string()),
        ("imu.last_detail", p.band.last_detail.to_string()),
        ("imu.keep_smooth", p.band.keep_smooth.to_string()),
        ("imu.stft_window", p.stft.window.to_string()),
        ("imu.stft_hop", p.stft.hop.to_string()),
        ("enhancement.blur_sigma", f(p.enhancement.blur_sigma)),
        ("enhancement.blur_kernel", p.enhancement.blur_kernel.to_string()),
        ("enhancement.kmeans_seed", p.enhancement.kmeans_seed.to_string()),
        ("enhancement.kmeans_max_iter", p.enhancement.kmeans_max_iter.to_string()),
        ("enhancement.closing_size", "3".into()),
        ("diffusion.steps", d.steps.to_string()),
        ("diffusion.s_max", f(d.s_max)),
        ("diffusion.widths", join(&d.widths)),
        ("diffusion.time_dim", d.time_dim.to_string()),
        ("diffusion.fusion_channels", d.fusion_channels.to_string()),
        ("diffusion.fusion_elements", d.fusion_elements.to_string()),
        ("diffusion.fusion_radius", f(d.fusion_radius)),
        ("diffusion.lr", f(d.lr)),
        ("diffusion.weight_decay", f(d.weight_decay)),
        ("diffusion.batch", d.batch.to_string()),
        ("diffusion.train_steps", "2000".into()),
        ("diffusion.epochs", "0".into()),
        ("diffusion.stride", s.stride.to_string()),
        ("diffusion.eta", f(s.eta)),
        ("classifier.patch", c.embed.patch.to_string()),
        ("classifier.dim", c.embed.dim.to_string()),
        ("classifier.layers", c.layers.to_string()),
        ("classifier.heads", c.heads.to_string()),
        ("classifier.chunk", c.chunk.to_string()),
        ("classifier.ff_dim", c.ff_dim.to_string()),
        ("classifier.epochs", c.epochs.to_string()),
        ("classifier.lr", f(c.lr)),
        ("classifier.weight_decay", f(c.weight_decay)),
        ("classifier.batch", c.batch.to_string()),
        ("dataset.classes", join(&classes.iter().map(|c| c.name()).collect::<Vec<_>>())),
        ("dataset.per_class", "60".into()),
        ("dataset.duration", f(p.duration)),
        ("dataset.amplitude", f(p.amplitude)),
        ("dataset.jitter", f(p.jitter)),
        ("dataset.split", "0.8,0.1,0.1".into()),
        ("dataset.write_cube", "false".into()),
        ("dataset.seed", "0".into()),
    ]
}

fn normalize(ty: Ty, raw: &str) -> std::result::Result<String, String> {
    let raw = raw.trim();
    let float = |s: &str| -> std::result::Result<f64, String> {
        let v: f64 = s.trim().parse().map_err(|_| format!("{s:?} is not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{s:?} is not finite"))
        }
    };
    let uint = |s: &str| s.trim().parse::<u64>().map_err(|_| format!("{s:?} is not a non-negative integer"));
    let list = |s: &str| s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect::<Vec<_>>();
    Ok(match ty {
        Ty::Float => f(float(raw)?),
        Ty::Uint => uint(raw)?.to_string(),
        Ty::Bool => match raw {
            "true" | "1" | "yes" => "true".into(),
            "false" | "0" | "no" => "false".into(),
            _ => return Err(format!("{raw:?} is not a boolean")),
        },
        Ty::OptFloat => match raw {
            "none" | "off" => "none".into(),
            _ => f(float(raw)?),
        },
        Ty::Floats => join(&list(raw).iter().map(|s| float(s).map(f)).collect::<std::result::Result<Vec<_>, _>>()?),
        Ty::Uints => join(&list(raw).iter().map(|s| uint(s)).collect::<std::result::Result<Vec<_>, _>>()?),
        Ty::Classes => {
            let names = list(raw);
            if names.is_empty() {
                return Err("empty class list".into());
            }
            for n in &names {
                if GestureClass::from_name(n).is_none() {
                    return Err(format!("unknown gesture class {n:?}"));
                }
            }
            join(&names)
        }
    })
}

fn ty_of(key: &str) -> Option<Ty> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, t)| *t)
}

/// Effective settings, keyed `section.name`.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        let mut values = BTreeMap::new();
        for (k, v) in defaults() {
            let ty = ty_of(k).expect("default key is declared");
            values.insert(k.to_string(), normalize(ty, &v).expect("defaults parse"));
        }
        Self { values }
    }
}

/// Everything the pipeline needs, resolved from [`Settings`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub pipeline: PipelineConfig,
    pub classes: Vec<GestureClass>,
    pub per_class: usize,
    pub split: [f64; 3],
    pub write_cube: bool,
    pub seed: u64,
    pub i2r: I2rConfig,
    pub train_steps: usize,
    /// When non-zero, overrides `train_steps` with this many passes over the training split.
    pub train_epochs: usize,
    pub sampling: SamplingConfig,
    pub classifier: TransformerConfig,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        s.apply_text(text)?;
        Ok(s)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let l = line.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or(Error::Config { line: line_no, msg: format!("malformed section header {l:?}") })?;
                let name = name.trim();
                if !KEYS.iter().any(|(k, _)| k.split('.').next() == Some(name)) {
                    return Err(Error::Config { line: line_no, msg: format!("unknown section [{name}]") });
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = l.split_once('=').ok_or(Error::Config { line: line_no, msg: format!("expected key = value, got {l:?}") })?;
            if section.is_empty() {
                return Err(Error::Config { line: line_no, msg: "key outside any [section]".into() });
            }
            let key = format!("{section}.{}", k.trim());
            self.set(&key, v).map_err(|msg| Error::Config { line: line_no, msg })?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let ty = ty_of(key).ok_or_else(|| format!("unknown key {key}"))?;
        let v = normalize(ty, value).map_err(|e| format!("{key}: {e}"))?;
        self.values.insert(key.to_string(), v);
        Ok(())
    }

    /// Command-line override `section.key=value`.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| Error::Usage(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v).map_err(Error::Usage)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Canonical `section.key=value` lines in key order.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 hex of [`Self::canonical`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("declared key")
    }

    fn float(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("normalized")
    }

    fn uint(&self, key: &str) -> usize {
        self.raw(key).parse().expect("normalized")
    }

    fn flag(&self, key: &str) -> bool {
        self.raw(key) == "true"
    }

    fn floats(&self, key: &str) -> Vec<f64> {
        self.raw(key).split(',').filter(|s| !s.is_empty()).map(|s| s.parse().expect("normalized")).collect()
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let cfg_err = |m: String| Error::Usage(m);
        let chirp = ChirpConfig {
            start_frequency: self.float("radar.start_frequency"),
            slope: self.float("radar.slope"),
            adc_samples: self.uint("radar.adc_samples"),
            adc_rate: self.float("radar.adc_rate"),
            chirps_per_frame: self.uint("radar.chirps"),
            idle_time: self.float("radar.idle_time"),
            frames: self.uint("radar.frames"),
            ..ChirpConfig::default()
        };
        let gravity = self.floats("imu.gravity");
        let gravity: [f64; 3] = gravity.try_into().map_err(|_| cfg_err("imu.gravity needs 3 values".into()))?;
        let keep = self.uint("radar.keep_bins");
        let pipeline = PipelineConfig {
            chirp,
            dsp: DspConfig { window: self.flag("radar.window"), range_gate: None, clutter_removal: self.flag("radar.clutter_removal") },
            noise_snr_db: match self.raw("radar.snr_db") {
                "none" => None,
                v => Some(v.parse().expect("normalized")),
            },
            mount: MountModel {
                weights: self.floats("imu.weights"),
                gravity,
                noise_sigma: self.float("imu.noise_sigma"),
                sample_rate: self.float("imu.sample_rate"),
            },
            band: GestureBand {
                levels: self.uint("imu.levels"),
                first_detail: self.uint("imu.first_detail"),
                last_detail: self.uint("imu.last_detail"),
                keep_smooth: self.flag("imu.keep_smooth"),
            },
            stft: StftParams { window: self.uint("imu.stft_window"), hop: self.uint("imu.stft_hop") },
            enhancement: EnhancementConfig {
                blur_sigma: self.float("enhancement.blur_sigma"),
                blur_kernel: self.uint("enhancement.blur_kernel"),
                kmeans_seed: self.uint("enhancement.kmeans_seed") as u64,
                kmeans_max_iter: self.uint("enhancement.kmeans_max_iter"),
                structuring_element: StructuringElement::square(self.uint("enhancement.closing_size"))?,
            },
            heatmap: (self.uint("radar.heatmap_frames"), self.uint("radar.heatmap_bins")),
            keep_bins: (keep > 0).then_some(keep),
            duration: self.float("dataset.duration"),
            amplitude: self.float("dataset.amplitude"),
            jitter: self.float("dataset.jitter"),
            ..PipelineConfig::default()
        };
        pipeline.chirp.validate()?;
        pipeline.band.validate()?;
        pipeline.enhancement.validate()?;
        pipeline.check_alignment()?;
        let classes: Vec<GestureClass> = self.raw("dataset.classes").split(',').map(|n| GestureClass::from_name(n).expect("normalized")).collect();
        let mut dedup = classes.clone();
        dedup.sort();
        dedup.dedup();
        if dedup.len() != classes.len() {
            return Err(cfg_err("dataset.classes lists a class twice".into()));
        }
        let split: [f64; 3] = self.floats("dataset.split").try_into().map_err(|_| cfg_err("dataset.split needs 3 ratios".into()))?;
        let widths: Vec<usize> = self.raw("diffusion.widths").split(',').map(|s| s.parse().expect("normalized")).collect();
        let widths: [usize; 4] = widths.try_into().map_err(|_| cfg_err("diffusion.widths needs 4 values".into()))?;
        let i2r = I2rConfig {
            heatmap: pipeline.heatmap,
            spectrogram: pipeline.spectrogram_dims(),
            steps: self.uint("diffusion.steps"),
            s_max: self.float("diffusion.s_max"),
            widths,
            time_dim: self.uint("diffusion.time_dim"),
            fusion_channels: self.uint("diffusion.fusion_channels"),
            fusion_elements: self.uint("diffusion.fusion_elements"),
            fusion_radius: self.float("diffusion.fusion_radius"),
            lr: self.float("diffusion.lr"),
            weight_decay: self.float("diffusion.weight_decay"),
            batch: self.uint("diffusion.batch"),
        };
        i2r.validate()?;
        let sampling = SamplingConfig { stride: self.uint("diffusion.stride"), eta: self.float("diffusion.eta") };
        if sampling.stride == 0 || i2r.steps % sampling.stride != 0 {
            return Err(cfg_err(format!("diffusion.stride {} must divide diffusion.steps {}", sampling.stride, i2r.steps)));
        }
        let patch = self.uint("classifier.patch");
        let classifier = TransformerConfig {
            heatmap: pipeline.heatmap,
            embed: PatchEmbedConfig::diagonal(patch, self.uint("classifier.dim")),
            layers: self.uint("classifier.layers"),
            heads: self.uint("classifier.heads"),
            chunk: self.uint("classifier.chunk"),
            classes: classes.len(),
            ff_dim: self.uint("classifier.ff_dim"),
            epochs: self.uint("classifier.epochs"),
            lr: self.float("classifier.lr"),
            weight_decay: self.float("classifier.weight_decay"),
            batch: self.uint("classifier.batch"),
        };
        if classes.len() >= 2 {
            classifier.validate()?;
        }
        Ok(Resolved {
            pipeline,
            classes,
            per_class: self.uint("dataset.per_class"),
            split,
            write_cube: self.flag("dataset.write_cube"),
            seed: self.uint("dataset.seed") as u64,
            i2r,
            train_steps: self.uint("diffusion.train_steps"),
            train_epochs: self.uint("diffusion.epochs"),
            sampling,
            classifier,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_declared_key_has_a_default() {
        let s = Settings::default();
        for (k, _) in KEYS {
            assert!(s.get(k).is_some(), "{k}");
        }
        assert_eq!(s.values.len(), KEYS.len());
    }

    #[test]
    fn defaults_resolve() {
        let r = Settings::default().resolve().unwrap();
        assert_eq!(r.i2r.spectrogram, (17, 45));
        assert_eq!(r.classes.len(), 3);
    }
}
