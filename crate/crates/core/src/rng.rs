//! Reproducible random-number substreams.
//!
//! Every replication gets its own substream seed derived from
//! `(master_seed, replication_index)` with a fixed 64-bit mixer, so
//! replications can run in any order and on any number of threads and
//! still consume disjoint, stable streams. Within a replication, the
//! arrival process and each individual lorry get separate ChaCha streams
//! selected by the stream-id word of the generator, which guarantees
//! non-overlap by construction.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; full-period bijective mixer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable substream seed for one replication.
///
/// A pure function of the inputs: the same `(master_seed, index)` pair
/// yields the same seed on every platform and every run.
pub fn substream_seed(master_seed: u64, replication_index: u64) -> u64 {
    mix64(master_seed ^ mix64(replication_index))
}

/// Derive a child master seed, used when a sweep runs each parameter
/// value with independent randomness.
pub fn child_master_seed(master_seed: u64, child_index: u64) -> u64 {
    mix64(master_seed.rotate_left(17) ^ mix64(child_index ^ 0x5bd1_e995))
}

/// Stream ids carved out of the ChaCha nonce space for one replication.
pub const STREAM_ARRIVALS: u64 = 0;
const STREAM_LORRY_BASE: u64 = 1;

/// Generator for a named stream of one replication substream.
pub fn stream_rng(substream_seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(substream_seed);
    rng.set_stream(stream);
    rng
}

/// Private generator for the `n`-th lorry of a replication.
pub fn lorry_rng(substream_seed: u64, lorry_index: u64) -> ChaCha12Rng {
    stream_rng(substream_seed, STREAM_LORRY_BASE + lorry_index)
}
