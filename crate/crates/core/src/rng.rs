//! Reproducible random streams.
//!
//! Split rule: a master seed plus a draw index map to an independent
//! ChaCha12 stream via `seed_from_u64(master)` + `set_stream(index)`.
//! Parallel Monte Carlo derives one stream per draw index, so results are
//! identical for any worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Deterministic stream for (master seed, draw index).
pub fn stream(master_seed: u64, draw_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(draw_index);
    rng
}
