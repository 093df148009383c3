//! Seed handling.
//!
//! Every random quantity is derived from one root seed. A consumer that needs
//! `n` independent draws (trajectories, datasets, repetitions) uses
//! `substream(seed, i)` for item `i`: a ChaCha8 generator keyed by `seed`
//! with its stream id set to `i`. Item `i` is therefore reproducible without
//! generating items `0..i`, and independent of how many items are requested.
//! Nested scopes derive a child seed with [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for item `stream` under root `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a list of tags into a child seed (SplitMix64 finalizer per tag).
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut h = seed ^ 0x243f_6a88_85a3_08d3;
    for &t in tags {
        h = splitmix(h ^ splitmix(t.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
