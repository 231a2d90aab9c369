//! Shared fixtures for the benchmarks.

use disparity_core::Tensor;

/// Deterministic pseudo-random tensor without pulling an RNG into the
/// library: a 64-bit LCG mapped to `[-1, 1)`.
pub fn fixture(shape: [usize; 4], seed: u64) -> Tensor<f32> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(shape, |_, _, _, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
    })
}
