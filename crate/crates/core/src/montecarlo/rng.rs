//! Random streams. Every sample draws from its own ChaCha8 stream selected
//! by `(seed, sample index)`, so results do not depend on how samples are
//! spread over threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
