//! Floating-point abstraction. Everything downstream is generic over [`Scalar`],
//! instantiated in practice as f64 (the crate-root aliases) or f32.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Lock-free cell holding one scalar coordinate of the shared iterate in the
/// async engine. Loads and stores are Relaxed: each coordinate is atomic on
/// its own, while snapshots across coordinates may tear (tolerated by design).
pub trait AtomicCell<T>: Send + Sync {
    fn new(v: T) -> Self;
    fn load(&self) -> T;
    fn store(&self, v: T);
}

pub struct AtomicF64(AtomicU64);

impl AtomicCell<f64> for AtomicF64 {
    fn new(v: f64) -> Self {
        AtomicF64(AtomicU64::new(v.to_bits()))
    }
    #[inline]
    fn load(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }
    #[inline]
    fn store(&self, v: f64) {
        self.0.store(v.to_bits(), Ordering::Relaxed);
    }
}

pub struct AtomicF32(AtomicU32);

impl AtomicCell<f32> for AtomicF32 {
    fn new(v: f32) -> Self {
        AtomicF32(AtomicU32::new(v.to_bits()))
    }
    #[inline]
    fn load(&self) -> f32 {
        f32::from_bits(self.0.load(Ordering::Relaxed))
    }
    #[inline]
    fn store(&self, v: f32) {
        self.0.store(v.to_bits(), Ordering::Relaxed);
    }
}

/// Scalar type for all solver state and instance data.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumCast
    + Sum
    + Debug
    + Display
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    type Atomic: AtomicCell<Self>;

    /// Draw from the standard normal distribution.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Draw uniformly from [0, 1).
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Narrow an f64 constant (tolerances, literals, small integer counts).
    fn cast(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f64 {
    type Atomic = AtomicF64;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f64>()
    }
    #[inline]
    fn cast(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    type Atomic = AtomicF32;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f32>()
    }
    #[inline]
    fn cast(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}
