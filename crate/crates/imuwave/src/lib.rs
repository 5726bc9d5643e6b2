//! File formats, dataset layout, configuration and the command line for
//! the `imuwave-core` algorithms.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod import;
pub mod irad;
pub mod oracles;
pub mod pgm;
pub mod report;

pub use error::{Error, Result};
