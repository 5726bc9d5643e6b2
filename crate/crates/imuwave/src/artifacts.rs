//! Typed views over IRAD containers.

use std::path::Path;

use imuwave_core::enhance::BinaryHeatmap;
use imuwave_core::fmcw::{ChirpConfig, RadarCube};
use imuwave_core::imu::{ImuSpectrogramTriplet, ImuTrace, StftParams};
use imuwave_core::nn::Tensor;
use imuwave_core::Grid;

use crate::error::{Error, Result};
use crate::irad::{read_container, write_container, Array, Container, Kind, Values};

fn expect_array(path: &Path, c: Container, kind: Kind) -> Result<Array> {
    match c {
        Container::Array { kind: k, array } if k == kind => Ok(array),
        other => Err(Error::Parse { path: path.into(), msg: format!("expected {kind:?} container, found {:?}", other.kind()) }),
    }
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.into(), msg: msg.into() }
}

pub fn write_heatmap(path: impl AsRef<Path>, map: &Grid<f64>) -> Result<()> {
    let a = Array::new(vec![map.rows(), map.cols()], Values::F64(map.as_slice().to_vec()))?;
    write_container(path, &Container::Array { kind: Kind::Heatmap, array: a })
}

pub fn read_heatmap(path: impl AsRef<Path>) -> Result<Grid<f64>> {
    let path = path.as_ref();
    let a = expect_array(path, read_container(path)?, Kind::Heatmap)?;
    match (a.dims.as_slice(), a.values) {
        (&[h, w], Values::F64(v)) => Ok(Grid::from_vec(h, w, v)?),
        (&[h, w], Values::F32(v)) => Ok(Grid::from_vec(h, w, v.into_iter().map(f64::from).collect())?),
        (d, _) => Err(bad(path, format!("heatmap must be a 2-D float array, dims {d:?}"))),
    }
}

pub fn write_mask(path: impl AsRef<Path>, mask: &BinaryHeatmap) -> Result<()> {
    let a = Array::new(vec![mask.rows(), mask.cols()], Values::U8(mask.as_slice().iter().map(|&b| u8::from(b)).collect()))?;
    write_container(path, &Container::Array { kind: Kind::Mask, array: a })
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryHeatmap> {
    let path = path.as_ref();
    let a = expect_array(path, read_container(path)?, Kind::Mask)?;
    match (a.dims.as_slice(), a.values) {
        (&[h, w], Values::U8(v)) => Ok(Grid::from_vec(h, w, v.into_iter().map(|b| b != 0).collect())?),
        (d, _) => Err(bad(path, format!("mask must be a 2-D u8 array, dims {d:?}"))),
    }
}

/// `[3, freq, time]` f64.
pub fn write_spectrogram(path: impl AsRef<Path>, t: &ImuSpectrogramTriplet) -> Result<()> {
    let (f, n) = t.dims();
    let mut v = Vec::with_capacity(3 * f * n);
    for a in &t.axes {
        v.extend_from_slice(a.as_slice());
    }
    write_container(path, &Container::Array { kind: Kind::Spectrogram, array: Array::new(vec![3, f, n], Values::F64(v))? })
}

/// The normalization record is not stored; it reads back as `(0, 1)`.
pub fn read_spectrogram(path: impl AsRef<Path>, params: StftParams) -> Result<ImuSpectrogramTriplet> {
    let path = path.as_ref();
    let a = expect_array(path, read_container(path)?, Kind::Spectrogram)?;
    match (a.dims.as_slice(), a.values) {
        (&[3, f, n], Values::F64(v)) => {
            let axis = |i: usize| Grid::from_vec(f, n, v[i * f * n..(i + 1) * f * n].to_vec());
            Ok(ImuSpectrogramTriplet { axes: [axis(0)?, axis(1)?, axis(2)?], params, norm: (0.0, 1.0) })
        }
        (d, _) => Err(bad(path, format!("spectrogram must be [3, F, T] f64, dims {d:?}"))),
    }
}

/// `[3, samples]` f64; the sample rate is not stored.
pub fn write_imu(path: impl AsRef<Path>, imu: &ImuTrace) -> Result<()> {
    let mut v = Vec::with_capacity(3 * imu.len());
    for a in imu.axes() {
        v.extend_from_slice(a);
    }
    write_container(path, &Container::Array { kind: Kind::ImuTrace, array: Array::new(vec![3, imu.len()], Values::F64(v))? })
}

pub fn read_imu(path: impl AsRef<Path>, sample_rate: f64) -> Result<ImuTrace> {
    let path = path.as_ref();
    let a = expect_array(path, read_container(path)?, Kind::ImuTrace)?;
    match (a.dims.as_slice(), a.values) {
        (&[3, n], Values::F64(v)) => Ok(ImuTrace::new(sample_rate, [v[..n].to_vec(), v[n..2 * n].to_vec(), v[2 * n..].to_vec()])?),
        (d, _) => Err(bad(path, format!("IMU trace must be [3, N] f64, dims {d:?}"))),
    }
}

/// `[frames, chirps, samples]` complex f32.
pub fn write_cube(path: impl AsRef<Path>, cube: &RadarCube) -> Result<()> {
    let [f, c, s] = cube.dims();
    let a = Array::new(vec![f, c, s], Values::C32(cube.as_slice().to_vec()))?;
    write_container(path, &Container::Array { kind: Kind::RadarCube, array: a })
}

/// The cube's dims must agree with `cfg`.
pub fn read_cube(path: impl AsRef<Path>, cfg: &ChirpConfig) -> Result<RadarCube> {
    let path = path.as_ref();
    let a = expect_array(path, read_container(path)?, Kind::RadarCube)?;
    match (a.dims.as_slice(), a.values) {
        (&[f, c, s], Values::C32(v)) => {
            if (f, c, s) != (cfg.frames, cfg.chirps_per_frame, cfg.adc_samples) {
                return Err(bad(
                    path,
                    format!(
                        "cube dims {f}x{c}x{s} disagree with radar config {}x{}x{}",
                        cfg.frames, cfg.chirps_per_frame, cfg.adc_samples
                    ),
                ));
            }
            Ok(RadarCube::new(cfg.clone(), v)?)
        }
        (d, _) => Err(bad(path, format!("cube must be [F, C, S] complex, dims {d:?}"))),
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, tensors: &[(String, Tensor<f32>)]) -> Result<()> {
    let entries = tensors
        .iter()
        .map(|(n, t)| Ok((n.clone(), Array::new(t.shape().to_vec(), Values::F32(t.data().to_vec()))?)))
        .collect::<Result<Vec<_>>>()?;
    write_container(path, &Container::Checkpoint(entries))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<f32>)>> {
    let path = path.as_ref();
    match read_container(path)? {
        Container::Checkpoint(entries) => entries
            .into_iter()
            .map(|(n, a)| match a.values {
                Values::F32(v) => Ok((n, Tensor::new(&a.dims, v)?)),
                _ => Err(bad(path, format!("tensor {n} is not f32"))),
            })
            .collect(),
        other => Err(bad(path, format!("expected checkpoint, found {:?}", other.kind()))),
    }
}
