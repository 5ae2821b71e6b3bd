//! Seeded random streams.
//!
//! Every consumer gets its own ChaCha stream keyed by `(seed, stream)`, so
//! results do not depend on the order in which episodes are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream ids below this value are free for episodes; purpose-specific
/// streams (cost drift, Monte Carlo checks) live above it.
const RESERVED_BASE: u64 = 1 << 63;

pub const COST_DRIFT_STREAM: u64 = RESERVED_BASE;
pub const SMOOTHING_STREAM: u64 = RESERVED_BASE + (1 << 32);
/// Base of the per-chunk streams used by moment estimation.
pub const DIAGNOSTICS_STREAM: u64 = RESERVED_BASE + (2 << 32);

pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random stream for the learner in episode `episode_seed`.
pub fn episode_stream(episode_seed: u64) -> StreamRng {
    stream(episode_seed, 0)
}
