//! Reproducible random-number streams.
//!
//! Every randomized stage of the simulator (dataset draws, channel
//! realizations, noise, parameter init, Monte-Carlo blocks) owns its own
//! `RngStream` identified by a `(seed, stream)` pair. The same pair always
//! replays the same draw sequence, regardless of how work is scheduled
//! across threads, which is what makes whole pipelines byte-reproducible.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::ComplexMatrix;

/// A single-owner random stream. Never share one between tasks; derive a
/// fresh stream per task with [`RngStream::substream`] or [`mix_stream`].
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child stream with an id mixed from this stream's id and `tag`.
    pub fn substream(&self, tag: u64) -> Self {
        Self::new(self.seed, mix_stream(&[self.stream, tag]))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Deterministically combines id words into a stream id (splitmix64 chain).
pub fn mix_stream(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Matrix with i.i.d. circularly symmetric unit-variance complex Gaussian
/// entries: real and imaginary parts are independent `N(0, 1/2)`, so
/// `E[|entry|^2] = 1`. Callers scale as needed.
pub fn complex_gaussian(rng: &mut RngStream, rows: usize, cols: usize) -> ComplexMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re = rng.standard_normal() * scale;
        let im = rng.standard_normal() * scale;
        data.push(Complex64::new(re, im));
    }
    ComplexMatrix::from_vec(rows, cols, data)
}
