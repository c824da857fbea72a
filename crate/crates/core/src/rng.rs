//! Reproducible random streams.
//!
//! Every consumer draws from its own ChaCha8 stream. The 256-bit key is the
//! SplitMix64 expansion of `master_seed ^ domain`, and the ChaCha stream id is
//! the consumer index (trial number, topology seed, ...). Streams therefore
//! depend only on `(master_seed, domain, index)` and never on thread count or
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams of different consumers disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Matching = 0x6d61_7463_6869_6e67,
    Placement = 0x706c_6163_656d_656e,
    CutPhases = 0x6375_7470_6861_7365,
    SvPhases = 0x7376_7068_6173_6573,
    Sweep = 0x7377_6565_7000_0000,
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream `index` of `domain` under `master_seed`.
pub fn stream(master_seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ domain as u64;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derives a child seed, e.g. one topology seed per sweep row.
pub fn child_seed(master_seed: u64, index: u64) -> u64 {
    let mut state = master_seed ^ (Domain::Sweep as u64) ^ index.rotate_left(32);
    splitmix64(&mut state)
}
