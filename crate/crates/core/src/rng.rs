//! Reproducible random streams.
//!
//! All stochastic code draws from ChaCha8, a counter-based generator: a
//! 64-bit seed selects the key and an independent 64-bit stream id selects
//! the nonce. Substreams are derived from `(seed, stream)` alone, so parallel
//! trials produce the same numbers as a sequential loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Generator for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
