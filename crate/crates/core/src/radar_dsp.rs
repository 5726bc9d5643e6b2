//! Radar cube to time-velocity heatmap.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{self, FftPlan};
use crate::fmcw::{ChirpConfig, RadarCube};
use crate::grid::Grid;

/// Processing options.
#[derive(Debug, Clone, PartialEq)]
pub struct DspConfig {
    /// Hann window on both FFT axes.
    pub window: bool,
    /// Half-open range-bin interval considered when collapsing the range axis.
    pub range_gate: Option<(usize, usize)>,
    pub clutter_removal: bool,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self { window: true, range_gate: None, clutter_removal: true }
    }
}

/// Per-frame magnitude map, `[doppler][range]`, zero velocity at row `chirps / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub magnitude: Grid<f64>,
    /// m per range bin
    pub range_scale: f64,
    /// m/s per Doppler bin
    pub velocity_scale: f64,
}

impl RangeDopplerMap {
    pub fn doppler_bins(&self) -> usize {
        self.magnitude.rows()
    }

    pub fn range_bins(&self) -> usize {
        self.magnitude.cols()
    }

    /// Row index holding zero radial velocity.
    pub fn zero_velocity_row(&self) -> usize {
        self.doppler_bins() / 2
    }

    /// `(doppler_row, range_bin)` of the largest magnitude; the first wins ties.
    pub fn argmax(&self) -> (usize, usize) {
        let data = self.magnitude.as_slice();
        let i = data.iter().enumerate().fold(0, |b, (i, &x)| if x > data[b] { i } else { b });
        (i / self.range_bins(), i % self.range_bins())
    }
}

/// `[time][velocity]` micro-Doppler signature, min-max normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVelocityHeatmap {
    pub map: Grid<f64>,
    /// Min and max of the raw map before normalization.
    pub norm: (f64, f64),
}

impl TimeVelocityHeatmap {
    pub fn frames(&self) -> usize {
        self.map.rows()
    }

    pub fn velocity_bins(&self) -> usize {
        self.map.cols()
    }
}

/// Subtract the mean chirp from every chirp of a `[chirp][sample]` frame.
pub fn remove_static_clutter(frame: &[Complex64], chirps: usize) -> Result<Vec<Complex64>> {
    if chirps < 2 {
        return Err(Error::InvalidInput(format!("clutter removal needs at least 2 chirps, got {chirps}")));
    }
    if frame.len() % chirps != 0 {
        return Err(Error::Shape(format!("{} samples do not split into {chirps} chirps", frame.len())));
    }
    let n = frame.len() / chirps;
    let mut mean = vec![Complex64::new(0.0, 0.0); n];
    for row in frame.chunks(n) {
        for (m, z) in mean.iter_mut().zip(row) {
            *m += z;
        }
    }
    for m in &mut mean {
        *m /= chirps as f64;
    }
    let mut out = frame.to_vec();
    for row in out.chunks_mut(n) {
        for (z, m) in row.iter_mut().zip(&mean) {
            *z -= m;
        }
    }
    Ok(out)
}

/// Range FFT along fast time, Doppler FFT along slow time, fftshift, magnitude.
#[derive(Debug, Clone)]
pub struct RdmProcessor {
    chirp: ChirpConfig,
    range_plan: FftPlan,
    doppler_plan: FftPlan,
    range_window: Vec<f64>,
    doppler_window: Vec<f64>,
}

impl RdmProcessor {
    pub fn new(chirp: &ChirpConfig, window: bool) -> Result<Self> {
        chirp.validate()?;
        let (n, m) = (chirp.adc_samples, chirp.chirps_per_frame);
        let pick = |len: usize| if window { fft::hann(len) } else { vec![1.0; len] };
        Ok(Self {
            chirp: chirp.clone(),
            range_plan: FftPlan::new(n),
            doppler_plan: FftPlan::new(m),
            range_window: pick(n),
            doppler_window: pick(m),
        })
    }

    pub fn range_doppler_map(&self, frame: &[Complex64]) -> Result<RangeDopplerMap> {
        let (n, m) = (self.chirp.adc_samples, self.chirp.chirps_per_frame);
        if frame.len() != n * m {
            return Err(Error::Shape(format!("frame has {} samples, expected {m}x{n}", frame.len())));
        }
        let mut work: Vec<Complex64> = frame.to_vec();
        for row in work.chunks_mut(n) {
            for (z, w) in row.iter_mut().zip(&self.range_window) {
                *z *= w;
            }
            self.range_plan.forward(row);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); m];
        let mut out = Grid::filled(m, n, 0.0);
        for r in 0..n {
            for c in 0..m {
                column[c] = work[c * n + r] * self.doppler_window[c];
            }
            self.doppler_plan.forward(&mut column);
            for (d, z) in fft::fftshift(&column).iter().enumerate() {
                out.set(d, r, z.norm());
            }
        }
        Ok(RangeDopplerMap {
            magnitude: out,
            range_scale: self.chirp.range_per_bin(),
            velocity_scale: self.chirp.velocity_per_bin(),
        })
    }
}

/// One-shot convenience wrapper around [`RdmProcessor`].
pub fn range_doppler_map(chirp: &ChirpConfig, frame: &[Complex64], window: bool) -> Result<RangeDopplerMap> {
    RdmProcessor::new(chirp, window)?.range_doppler_map(frame)
}

/// Min-max normalize in place; a constant map becomes all zeros. Returns `(min, max)`.
pub fn normalize_min_max(map: &mut Grid<f64>) -> (f64, f64) {
    let (lo, hi) = map.min_max();
    let span = hi - lo;
    for v in map.as_mut_slice() {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
    (lo, hi)
}

/// Collapse each RDM to its per-Doppler-bin maximum over range and stack over time.
pub fn heatmap_from_rdms(rdms: &[RangeDopplerMap], range_gate: Option<(usize, usize)>) -> Result<TimeVelocityHeatmap> {
    let first = rdms.first().ok_or_else(|| Error::InvalidInput("no range-Doppler maps".into()))?;
    let (rows, cols) = first.magnitude.dims();
    let (lo, hi) = range_gate.unwrap_or((0, cols));
    if lo >= hi || hi > cols {
        return Err(Error::InvalidInput(format!("range gate {lo}..{hi} outside 0..{cols}")));
    }
    let mut map = Grid::filled(rdms.len(), rows, 0.0);
    for (t, rdm) in rdms.iter().enumerate() {
        if rdm.magnitude.dims() != (rows, cols) {
            return Err(Error::Shape("range-Doppler maps differ in shape".into()));
        }
        for d in 0..rows {
            let row = &rdm.magnitude.row(d)[lo..hi];
            map.set(t, d, row.iter().copied().fold(0.0, f64::max));
        }
    }
    let norm = normalize_min_max(&mut map);
    Ok(TimeVelocityHeatmap { map, norm })
}

/// Full per-cube chain: clutter removal, RDM per frame, heatmap.
pub fn process_cube(cube: &RadarCube, cfg: &DspConfig) -> Result<TimeVelocityHeatmap> {
    let rdms = cube_rdms(cube, cfg)?;
    heatmap_from_rdms(&rdms, cfg.range_gate)
}

pub fn cube_rdms(cube: &RadarCube, cfg: &DspConfig) -> Result<Vec<RangeDopplerMap>> {
    let chirp = cube.config();
    let proc = RdmProcessor::new(chirp, cfg.window)?;
    (0..chirp.frames)
        .map(|f| {
            let raw = cube.frame(f);
            let frame = if cfg.clutter_removal {
                remove_static_clutter(&raw, chirp.chirps_per_frame)?
            } else {
                raw
            };
            proc.range_doppler_map(&frame)
        })
        .collect()
}

/// Resample a heatmap to `frames x bins`, optionally keeping only the central
/// `keep` velocity bins first. The result is renormalized to [0, 1].
pub fn resample_heatmap(h: &TimeVelocityHeatmap, frames: usize, bins: usize, keep: Option<usize>) -> Result<TimeVelocityHeatmap> {
    let cols = h.velocity_bins();
    let src = match keep {
        Some(k) if k == 0 || k > cols => {
            return Err(Error::InvalidInput(format!("cannot keep {k} of {cols} velocity bins")))
        }
        Some(k) => {
            let start = cols / 2 - k / 2;
            Grid::from_fn(h.frames(), k, |r, c| h.map.get(r, start + c))
        }
        None => h.map.clone(),
    };
    let mut map = src.resample(frames, bins);
    let norm = normalize_min_max(&mut map);
    Ok(TimeVelocityHeatmap { map, norm })
}
