//! Minimal 3D CNN stack: exactly the layers the classifier needs, each with
//! an analytic backward pass.
//!
//! Layers are generic over [`Real`] (`f32` or `f64`). Production training
//! runs in `f32`; the gradient unit tests instantiate the same code in `f64`
//! so finite-difference checks can resolve relative errors far below `f32`
//! rounding noise.
//!
//! Everything is single-sample: activations are `[C, T, H, W]`, batches are
//! accumulated by summing per-sample gradients. Combined with per-sample
//! normalization statistics this makes results independent of batch
//! composition, which keeps runs bit-reproducible under any batching.

pub mod backbone;
pub mod checkpoint;
pub mod conv;
pub mod excite;
pub mod flops;
pub mod norm;
pub mod ops;

use ndarray::{ArrayD, NdFloat};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Scalar type for network math. Implemented for `f32` and `f64` only.
pub trait Real: NdFloat + std::iter::Sum {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> f32 {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> f64 {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param<F> {
    pub name: String,
    pub value: ArrayD<F>,
    pub grad: ArrayD<F>,
    /// Whether decoupled weight decay applies (true for conv/linear weights,
    /// false for normalization affines and biases).
    pub decay: bool,
}

impl<F: Real> Param<F> {
    pub fn new(name: impl Into<String>, value: ArrayD<F>, decay: bool) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param { name: name.into(), value, grad, decay }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// He-normal initialization over the fan-out, the standard choice for
/// ReLU-family convolutions. Elements are drawn in standard layout order so
/// initialization is a pure function of the RNG state.
pub fn he_normal<F: Real>(shape: &[usize], fan_out: usize, rng: &mut ChaCha8Rng) -> ArrayD<F> {
    let std = (2.0 / fan_out as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("std is finite and positive");
    ArrayD::from_shape_simple_fn(shape, || F::of(dist.sample(rng)))
}

/// Small-variance normal init for the classifier head.
pub fn normal_init<F: Real>(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> ArrayD<F> {
    let dist = Normal::new(0.0, std).expect("std is finite and positive");
    ArrayD::from_shape_simple_fn(shape, || F::of(dist.sample(rng)))
}
