//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 keyed by the user seed
//! (expanded with `seed_from_u64`), with a 64-bit stream id naming the
//! consumer. Stream ids are `(tag << 32) | index`, so a trial, attempt or
//! step can be replayed on its own without generating the ones before it.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn stream(seed: u64, tag: u32, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 32) | index as u64);
    rng
}

/// Standard complex Gaussian: independent N(0,1) real and imaginary parts.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Uniformly distributed unit vector in `C^n`.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<Complex64> {
    loop {
        let v = DVector::from_fn(n, |_, _| complex_gaussian(rng));
        let norm = v.norm();
        if norm > 0.0 {
            return v.unscale(norm);
        }
    }
}
