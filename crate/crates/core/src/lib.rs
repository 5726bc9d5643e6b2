//! Core algorithms for paired IMU / FMCW-radar gesture sensing.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! builds without `std` (only `alloc` is required). File formats, dataset
//! layout and the command line live in the `imuwave` companion crate.
//!
//! The processing chain, in data-flow order:
//!
//! ```text
//! kinematics ──┬── fmcw ── radar_dsp ── enhance ──► time-velocity heatmap (target)
//!              └── imu (MODWT + STFT) ─────────────► spectrogram triplet   (source)
//!
//! bridge:      triplet ──fusion──► latent ──Brownian-bridge reverse chain──► heatmap
//! transformer: heatmap ──shifted patches + chunked temporal attention──► class logits
//! ```
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bridge;
pub mod enhance;
pub mod error;
pub mod fft;
pub mod fmcw;
pub mod grid;
pub mod imu;
pub mod kinematics;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod radar_dsp;
pub mod rng;
pub mod transformer;

pub use error::{Error, Result};
pub use grid::Grid;
