//! Small deterministic neural-network layer.
//!
//! Models record their forward pass on a [`Graph`] (a tape over a closed set of
//! ops) and call [`Graph::backward`] once per loss. Everything is generic over
//! [`Scalar`] so the same model code runs in `f32` for training and in `f64`
//! for finite-difference checks.

mod check;
mod graph;
mod kernels;
mod params;

pub use check::{compare_gradients, grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub(crate) use graph::transpose_raw;
pub use kernels::{bilinear_corners, Corner};
pub use params::{AdamW, ParamId, ParamStore};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::iter::Sum;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point element type of tensors.
pub trait Scalar: Float + Default + Debug + Sum + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl Tensor<f32> {
    /// Widen through the shortest decimal form, so `0.001f32` reads back
    /// as `0.001`. Used for configuration values stored in checkpoints.
    pub fn to_f64_decimal(&self) -> Vec<f64> {
        self.data.iter().map(|v| format!("{v}").parse().unwrap_or(*v as f64)).collect()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn sigmoid_f64(x: f64) -> f64 {
    graph::sigmoid(x)
}

/// Sinusoidal embedding of a (diffusion) step index, `dim` values.
pub fn sinusoidal_embedding<T: Scalar>(t: f64, dim: usize) -> Tensor<T> {
    let half = dim / 2;
    let mut v = vec![T::zero(); dim];
    for i in 0..half {
        let freq = crate::math::exp(-crate::math::log(10_000.0) * i as f64 / half.max(1) as f64);
        v[i] = T::of(crate::math::sin(t * freq));
        v[i + half] = T::of(crate::math::cos(t * freq));
    }
    Tensor { shape: vec![dim], data: v }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_shape_is_checked() {
        assert!(Tensor::<f32>::new(&[2, 3], alloc::vec![0.0; 5]).is_err());
        let t = Tensor::<f32>::new(&[2, 3], alloc::vec![1.0; 6]).unwrap();
        assert_eq!(t.clone().reshape(&[3, 2]).unwrap().shape(), &[3, 2]);
        assert!(t.reshape(&[4]).is_err());
    }

    #[test]
    fn embedding_is_bounded_and_distinct() {
        let a: Tensor<f64> = sinusoidal_embedding(3.0, 16);
        let b: Tensor<f64> = sinusoidal_embedding(4.0, 16);
        assert!(a.data().iter().all(|v| v.abs() <= 1.0));
        assert_ne!(a, b);
        // first pair is sin/cos of t itself
        assert!((a.data()[0] - crate::math::sin(3.0)).abs() < 1e-12);
    }
}
