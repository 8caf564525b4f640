//! Seeded randomness shared by every stochastic component.
//!
//! All randomness is drawn from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded via
//! `seed_from_u64`. Independent sub-streams (restarts, trials, split halves)
//! use `set_stream`, so adding a consumer never perturbs existing ones.

use rand::RngCore;
use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for `seed` on sub-stream `stream`.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// In-place Fisher–Yates shuffle.
///
/// For `i` from `n - 1` down to `1`, swaps position `i` with
/// `j = next_u64() % (i + 1)`. Spelled out rather than delegated to
/// `SliceRandom` so the permutation for a given seed is pinned by this crate.
pub fn fisher_yates<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
