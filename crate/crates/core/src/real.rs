//! Scalar abstraction for the simulator.
//!
//! All model math is written against [`Real`] so the same code runs in f32 or
//! f64. The experiment tooling instantiates f64 (see the aliases at the crate
//! root); f32 is exercised by tests to keep the bound honest.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar trait covering everything the simulator needs:
/// ordinary float math, ndarray linear algebra, serde, and seeded sampling.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Convert an f64 constant. Panics only for values outside the target
    /// type's range, which never happens for the constants used here.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count not representable in scalar type")
    }

    /// One draw from N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from U[lo, hi). Degenerate ranges (lo == hi) return lo.
    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self;
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    }
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    }
}

/// Splitmix64 step, used to derive independent RNG streams from one seed so
/// that e.g. the environment and the agent never share a stream.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(stream.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_respects_bounds_and_degenerate_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = f64::uniform(&mut rng, 2.0, 3.0);
            assert!((2.0..3.0).contains(&x));
        }
        assert_eq!(f64::uniform(&mut rng, 1.5, 1.5), 1.5);
        assert_eq!(f32::uniform(&mut rng, 0.25f32, 0.25), 0.25);
    }

    #[test]
    fn derive_seed_separates_streams() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        // stable values: the seed derivation is part of the determinism contract
        assert_eq!(a, derive_seed(42, 0));
    }

    #[test]
    fn standard_normal_has_roughly_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| f64::standard_normal(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
