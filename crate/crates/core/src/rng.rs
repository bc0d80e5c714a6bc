//! Counter-based random streams.
//!
//! Every random draw in the library comes from a ChaCha stream whose key is
//! derived from one experiment seed plus a tuple of counters (purpose, data
//! point, sample index, ...). Within a stream, layers and units consume
//! uniforms in a fixed order, so a forward sample is a pure function of
//! `(seed, counters)` regardless of evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SbnRng = ChaCha8Rng;

/// Purpose tags keep streams used for different jobs disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Whiten = 3,
    Sample = 4,
    Shuffle = 5,
    Metrics = 6,
    Probe = 7,
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the seed and counters into a 64-bit stream key.
pub fn stream_key(seed: u64, purpose: Stream, counters: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ splitmix(purpose as u64));
    for &c in counters {
        h = splitmix(h ^ splitmix(c.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn stream(seed: u64, purpose: Stream, counters: &[u64]) -> SbnRng {
    SbnRng::seed_from_u64(stream_key(seed, purpose, counters))
}
