//! Counter-based randomness.
//!
//! Every random quantity that has to be shared between coupled objects (edge
//! uniforms of the percolation sample, pair uniforms of the component graphs,
//! exponential clocks of the exploration process) is a pure function of a
//! 64-bit key and a 64-bit counter. Nothing is stored, so the same value can be
//! recomputed from any thread and at any probability level.
//!
//! The generator is the SplitMix64 output function applied to a Weyl sequence
//! whose starting point is derived from the key.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and a path of labels.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix64(parent ^ 0x5851_f42d_4c95_7f2d), |acc, &l| {
        mix64(acc.wrapping_add(mix64(l.wrapping_add(GOLDEN_GAMMA))))
    })
}

/// Maps 53 random bits to a uniform in `(0, 1]`.
#[inline]
fn unit_open_closed(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A keyed pseudorandom function `counter -> uniform(0,1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterRng {
    state0: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self {
            state0: mix64(key ^ 0x2545_f491_4f6c_dd1d),
        }
    }

    #[inline]
    pub fn bits(&self, counter: u64) -> u64 {
        mix64(
            self.state0
                .wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform on `(0, 1]`, so that `u <= 0` never holds and `u <= 1` always does.
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        unit_open_closed(self.bits(counter))
    }

    /// Exponential with the given rate, by inversion.
    #[inline]
    pub fn exponential(&self, counter: u64, rate: f64) -> f64 {
        -self.uniform(counter).ln() / rate
    }
}

/// Sequential generator for bulk draws (Brownian increments, Erdős–Rényi skips).
pub fn stream(seed: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(mix64(seed ^ 0x1405_7b7e_f767_814f))
}

/// Uniform on `(0, 1]` from any `rand` generator.
#[inline]
pub fn open_closed_uniform<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    unit_open_closed(rng.next_u64())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_in_open_closed_unit_interval() {
        let r = CounterRng::new(7);
        for c in 0..100_000 {
            let u = r.uniform(c);
            assert!(u > 0.0 && u <= 1.0);
        }
        assert_eq!(unit_open_closed(u64::MAX), 1.0);
        assert!(unit_open_closed(0) > 0.0);
    }

    #[test]
    fn counter_rng_is_a_pure_function() {
        let a = CounterRng::new(42);
        let b = CounterRng::new(42);
        assert_eq!(a.uniform(123_456), b.uniform(123_456));
        assert_ne!(CounterRng::new(43).bits(0), a.bits(0));
    }

    #[test]
    fn moments_of_uniforms() {
        let r = CounterRng::new(2024);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for c in 0..n {
            let u = r.uniform(c);
            s += u;
            s2 += u * u;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.005);
        assert!((var - 1.0 / 12.0).abs() < 0.002);
    }

    #[test]
    fn disjoint_seeds_are_uncorrelated() {
        let a = CounterRng::new(derive_seed(1, &[0]));
        let b = CounterRng::new(derive_seed(1, &[1]));
        let n = 100_000u64;
        let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for c in 0..n {
            let (x, y) = (a.uniform(c), b.uniform(c));
            sa += x;
            sb += y;
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
        let nf = n as f64;
        let cov = sab / nf - (sa / nf) * (sb / nf);
        let corr = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        assert!(corr.abs() < 0.05, "corr = {corr}");
    }
}
