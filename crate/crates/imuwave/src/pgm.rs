//! Binary PGM (P5, 8-bit) output.

use std::path::Path;

use imuwave_core::Grid;

use crate::error::{Error, Result};

/// Min-max scaled to 0..=255; a constant map renders black.
pub fn encode_pgm(map: &Grid<f64>) -> Vec<u8> {
    let (lo, hi) = map.min_max();
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", map.cols(), map.rows()).into_bytes();
    out.extend(map.as_slice().iter().map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 }));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, map: &Grid<f64>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_pgm(map)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_scaling() {
        let g = Grid::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let b = encode_pgm(&g);
        assert_eq!(&b[..11], b"P5\n3 1\n255\n");
        assert_eq!(&b[11..], &[0, 128, 255]);
    }
}
