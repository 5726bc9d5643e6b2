//! Plain CSV accelerometer import: header `t,ax,ay,az`, one row per sample,
//! `t` in seconds.

use std::io::Read;
use std::path::Path;

use imuwave_core::imu::ImuTrace;

use crate::error::{Error, Result};

const HEADER: [&str; 4] = ["t", "ax", "ay", "az"];

/// Relative tolerance on sample spacing around the mean period.
pub const SPACING_TOLERANCE: f64 = 0.01;

pub fn read_imu_csv(path: impl AsRef<Path>) -> Result<ImuTrace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_imu_csv(file).map_err(|msg| Error::Parse { path: path.into(), msg })
}

pub fn parse_imu_csv(input: impl Read) -> std::result::Result<ImuTrace, String> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?;
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(format!("expected header t,ax,ay,az, found {}", header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut t = Vec::new();
    let mut axes: [Vec<f64>; 3] = Default::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = i + 2;
        let mut v = [0.0f64; 4];
        for (j, slot) in v.iter_mut().enumerate() {
            let s = rec.get(j).ok_or(format!("line {line}: expected 4 fields"))?;
            *slot = s.parse().map_err(|_| format!("line {line}: {:?} is not a number", s))?;
            if !slot.is_finite() {
                return Err(format!("line {line}: non-finite value"));
            }
        }
        t.push(v[0]);
        for a in 0..3 {
            axes[a].push(v[a + 1]);
        }
    }
    if t.len() < 2 {
        return Err("need at least two samples to infer the sample rate".into());
    }
    let span = t[t.len() - 1] - t[0];
    if !(span > 0.0) {
        return Err("timestamps must increase".into());
    }
    let period = span / (t.len() - 1) as f64;
    for (i, w) in t.windows(2).enumerate() {
        let dt = w[1] - w[0];
        if (dt - period).abs() > SPACING_TOLERANCE * period {
            return Err(format!("line {}: spacing {dt} s deviates from the mean period {period} s", i + 3));
        }
    }
    ImuTrace::new(1.0 / period, axes).map_err(|e| e.to_string())
}
