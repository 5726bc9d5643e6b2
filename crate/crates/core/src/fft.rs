//! Complex FFT for arbitrary lengths.
//!
//! Power-of-two sizes use an iterative radix-2 transform; every other size goes
//! through Bluestein's chirp-z algorithm on a padded power-of-two buffer. The
//! Doppler axis (255 chirps by default) relies on the second path.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::math;

/// Precomputed forward transform of a fixed length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Radix2(Radix2),
    Bluestein {
        inner: Radix2,
        /// exp(-i*pi*k^2/n)
        chirp: Vec<Complex64>,
        /// FFT of the conjugate chirp, wrapped to the padded length.
        kernel_spectrum: Vec<Complex64>,
    },
}

#[derive(Debug, Clone)]
struct Radix2 {
    len: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl Radix2 {
    fn new(len: usize) -> Self {
        debug_assert!(len.is_power_of_two());
        let twiddles = (0..len / 2)
            .map(|k| math::cis(-2.0 * PI * k as f64 / len as f64))
            .collect();
        let bits = len.trailing_zeros();
        let bitrev = (0..len)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Self { len, twiddles, bitrev }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let n = self.len;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        if len.is_power_of_two() {
            return Self { len, kind: PlanKind::Radix2(Radix2::new(len)) };
        }
        let padded = (2 * len - 1).next_power_of_two();
        let inner = Radix2::new(padded);
        let two_n = 2 * len as u128;
        let chirp: Vec<Complex64> = (0..len)
            .map(|k| {
                // k^2 mod 2n keeps the phase argument small.
                let k2 = ((k as u128 * k as u128) % two_n) as f64;
                math::cis(-PI * k2 / len as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); padded];
        kernel[0] = chirp[0].conj();
        for k in 1..len {
            kernel[k] = chirp[k].conj();
            kernel[padded - k] = chirp[k].conj();
        }
        inner.forward(&mut kernel);
        Self { len, kind: PlanKind::Bluestein { inner, chirp, kernel_spectrum: kernel } }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward DFT: `X[k] = sum_n x[n] exp(-2*pi*i*k*n/N)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len, "buffer length does not match the plan");
        match &self.kind {
            PlanKind::Radix2(r) => r.forward(buf),
            PlanKind::Bluestein { inner, chirp, kernel_spectrum } => {
                let m = inner.len;
                let mut work = vec![Complex64::new(0.0, 0.0); m];
                for k in 0..self.len {
                    work[k] = buf[k] * chirp[k];
                }
                inner.forward(&mut work);
                for (w, k) in work.iter_mut().zip(kernel_spectrum) {
                    *w *= k;
                }
                // inverse via conjugation
                for w in work.iter_mut() {
                    *w = w.conj();
                }
                inner.forward(&mut work);
                let scale = 1.0 / m as f64;
                for k in 0..self.len {
                    buf[k] = work[k].conj() * scale * chirp[k];
                }
            }
        }
    }
}

/// Rotate so that the zero-frequency bin lands at index `len / 2`.
pub fn fftshift<T: Copy>(data: &[T]) -> Vec<T> {
    let n = data.len();
    let shift = n / 2;
    (0..n).map(|i| data[(i + n - shift) % n]).collect()
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * math::cos(2.0 * PI * i as f64 / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| v * math::cis(-2.0 * PI * ((k * j) % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_many_sizes() {
        let mut r = crate::rng::rng(3);
        for n in [1usize, 2, 3, 5, 8, 15, 16, 17, 31, 64, 100, 255] {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(crate::rng::gaussian(&mut r), crate::rng::gaussian(&mut r)))
                .collect();
            let want = naive_dft(&x);
            let mut got = x.clone();
            FftPlan::new(n).forward(&mut got);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).norm() < 1e-9 * (n as f64), "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn fftshift_centers_zero_bin() {
        assert_eq!(fftshift(&[0, 1, 2, 3, 4]), alloc::vec![3, 4, 0, 1, 2]);
        assert_eq!(fftshift(&[0, 1, 2, 3]), alloc::vec![2, 3, 0, 1]);
    }
}
