//! Paired dataset generation, manifest and stratified splitting.
//!
//! Layout: `root/manifest.json` and
//! `root/samples/<id>/{imu,spectrogram,heatmap,mask,raw}.irad` plus an
//! optional `cube.irad`. `heatmap.irad` holds the enhanced map; `raw.irad`
//! the heatmap before enhancement.

use std::path::{Path, PathBuf};

use imuwave_core::bridge::TrainingPair;
use imuwave_core::enhance::BinaryHeatmap;
use imuwave_core::kinematics::GestureClass;
use imuwave_core::pipeline::{paired_sample, PipelineConfig};
use imuwave_core::rng::{derive_seed, rng, shuffle};
use imuwave_core::Grid;
use serde::{Deserialize, Serialize};

use crate::artifacts;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub classes: Vec<GestureClass>,
    pub per_class: usize,
    pub master_seed: u64,
    pub split: [f64; 3],
    pub write_cube: bool,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

/// Paths relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFiles {
    pub imu: String,
    pub spectrogram: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cube: Option<String>,
    pub heatmap: String,
    pub mask: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub id: String,
    pub class: String,
    /// Index into [`Manifest::classes`].
    pub label: usize,
    pub seed: u64,
    pub split: Split,
    pub files: SampleFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub master_seed: u64,
    pub classes: Vec<String>,
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn read(root: impl AsRef<Path>) -> Result<Self> {
        let path = root.as_ref().join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.clone(), msg: e.to_string() })?;
        m.check().map_err(|msg| Error::Parse { path, msg })?;
        Ok(m)
    }

    pub fn write(&self, root: impl AsRef<Path>) -> Result<()> {
        let path = root.as_ref().join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn check(&self) -> std::result::Result<(), String> {
        let mut ids: Vec<&str> = self.entries.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate sample id".into());
        }
        if let Some(e) = self.entries.iter().find(|e| e.label >= self.classes.len() || self.classes[e.label] != e.class) {
            return Err(format!("entry {} has inconsistent label {} / class {}", e.id, e.label, e.class));
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Sample count per label.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes.len()];
        for e in &self.entries {
            h[e.label] += 1;
        }
        h
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`; every bin with
/// a positive ratio receives at least one item.
pub fn split_counts(n: usize, ratios: &[f64; 3]) -> Result<[usize; 3]> {
    let positive = ratios.iter().filter(|&&r| r > 0.0).count();
    if n < positive {
        return Err(Error::Stratification(format!("{n} samples cannot fill {positive} non-empty split bins")));
    }
    let quota: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for i in 0..3 {
        counts[i] = quota[i].floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (quota[b] - quota[b].floor()).total_cmp(&(quota[a] - quota[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if ratios[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    for i in 0..3 {
        if ratios[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).expect("three bins");
            counts[donor] -= 1;
            counts[i] = 1;
        }
    }
    Ok(counts)
}

/// Assign splits per class: shuffle each class with a seed derived from
/// `(seed, label)` and cut by [`split_counts`].
pub fn split_manifest(manifest: &mut Manifest, ratios: [f64; 3], seed: u64) -> Result<()> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    for label in 0..manifest.classes.len() {
        let mut idx: Vec<usize> = (0..manifest.entries.len()).filter(|&i| manifest.entries[i].label == label).collect();
        if idx.is_empty() {
            continue;
        }
        let counts = split_counts(idx.len(), &ratios)
            .map_err(|e| match e {
                Error::Stratification(m) => Error::Stratification(format!("class {}: {m}", manifest.classes[label])),
                other => other,
            })?;
        shuffle(&mut rng(derive_seed(seed, &[label as u64])), &mut idx);
        let mut at = 0;
        for (split, count) in Split::ALL.into_iter().zip(counts) {
            for &i in &idx[at..at + count] {
                manifest.entries[i].split = split;
            }
            at += count;
        }
    }
    Ok(())
}

fn sample_files(id: &str, cube: bool) -> SampleFiles {
    let p = |name: &str| format!("samples/{id}/{name}.irad");
    SampleFiles {
        imu: p("imu"),
        spectrogram: p("spectrogram"),
        cube: cube.then(|| p("cube")),
        heatmap: p("heatmap"),
        mask: p("mask"),
        raw: p("raw"),
    }
}

/// Synthesize every sample, write all artifacts and the manifest.
///
/// Sample `i` of class index `c` uses seed `derive_seed(master, [c, i])`;
/// splits use `derive_seed(master, [u64::MAX])`.
pub fn generate(root: impl AsRef<Path>, cfg: &GenerationConfig, config_digest: &str, mut progress: impl FnMut(&Entry)) -> Result<Manifest> {
    let root = root.as_ref();
    if cfg.per_class == 0 {
        return Err(Error::Usage("per-class count must be at least 1".into()));
    }
    if cfg.classes.is_empty() {
        return Err(Error::Usage("no gesture classes configured".into()));
    }
    cfg.pipeline.check_alignment()?;
    let mut entries = Vec::with_capacity(cfg.classes.len() * cfg.per_class);
    for (label, &class) in cfg.classes.iter().enumerate() {
        for i in 0..cfg.per_class {
            let id = format!("{}_{i:04}", class.name());
            let seed = derive_seed(cfg.master_seed, &[label as u64, i as u64]);
            let s = paired_sample(class, seed, &cfg.pipeline)?;
            let files = sample_files(&id, cfg.write_cube);
            artifacts::write_imu(root.join(&files.imu), &s.imu)?;
            artifacts::write_spectrogram(root.join(&files.spectrogram), &s.triplet)?;
            if let Some(c) = &files.cube {
                artifacts::write_cube(root.join(c), &s.cube)?;
            }
            artifacts::write_heatmap(root.join(&files.heatmap), &s.enhancement.enhanced.map)?;
            artifacts::write_mask(root.join(&files.mask), &s.enhancement.mask)?;
            artifacts::write_heatmap(root.join(&files.raw), &s.heatmap.map)?;
            let e = Entry { id, class: class.name().into(), label, seed, split: Split::Train, files };
            progress(&e);
            entries.push(e);
        }
    }
    let mut manifest = Manifest {
        config_digest: config_digest.into(),
        master_seed: cfg.master_seed,
        classes: cfg.classes.iter().map(|c| c.name().to_string()).collect(),
        entries,
    };
    split_manifest(&mut manifest, cfg.split, derive_seed(cfg.master_seed, &[u64::MAX]))?;
    manifest.write(root)?;
    Ok(manifest)
}

/// Loaded dataset split with paths resolved against its root.
pub struct DatasetView {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl DatasetView {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest = Manifest::read(&root)?;
        Ok(Self { root, manifest })
    }

    fn entries<'a>(&'a self, splits: &'a [Split]) -> impl Iterator<Item = &'a Entry> {
        self.manifest.entries.iter().filter(move |e| splits.contains(&e.split))
    }

    /// `(enhanced heatmap, label)` for the given splits, in manifest order.
    pub fn heatmaps(&self, splits: &[Split]) -> Result<Vec<(Grid<f64>, usize)>> {
        self.entries(splits).map(|e| Ok((artifacts::read_heatmap(self.root.join(&e.files.heatmap))?, e.label))).collect()
    }

    pub fn pairs(&self, splits: &[Split], pipeline: &PipelineConfig) -> Result<Vec<TrainingPair>> {
        self.entries(splits)
            .map(|e| {
                Ok(TrainingPair {
                    source: artifacts::read_spectrogram(self.root.join(&e.files.spectrogram), pipeline.stft)?,
                    target: artifacts::read_heatmap(self.root.join(&e.files.heatmap))?,
                    label: e.label,
                })
            })
            .collect()
    }

    pub fn raw_and_mask(&self, e: &Entry) -> Result<(Grid<f64>, BinaryHeatmap)> {
        Ok((artifacts::read_heatmap(self.root.join(&e.files.raw))?, artifacts::read_mask(self.root.join(&e.files.mask))?))
    }
}

/// Ratio of mean power on the mask to mean power off it, in dB.
///
/// Returns `None` when either region is empty or the off-mask power is zero.
pub fn heatmap_snr_db(raw: &Grid<f64>, mask: &BinaryHeatmap) -> Option<f64> {
    let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
    for (v, &m) in raw.as_slice().iter().zip(mask.as_slice()) {
        if m {
            on += v * v;
            n_on += 1;
        } else {
            off += v * v;
            n_off += 1;
        }
    }
    if n_on == 0 || n_off == 0 || off == 0.0 {
        return None;
    }
    Some(10.0 * ((on / n_on as f64) / (off / n_off as f64)).log10())
}
