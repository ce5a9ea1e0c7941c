//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! user seed plus a stream id, so parallel work items get independent,
//! order-invariant randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `seed` on the default stream.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `(seed, a, b)`; distinct pairs give non-overlapping streams.
pub fn substream(seed: u64, a: u64, b: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(b.wrapping_add(1));
    rng
}
