//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream whose key
//! is derived from a 64-bit seed and a domain tag, and whose stream id is an
//! index inside that domain (a matrix row, a trial, ...). Two draws never share
//! generator state, so trials and rows can be produced in any order or in
//! parallel and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct domains give unrelated keys for the same seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    MatrixRow = 0x6d61_7472_6978,
    Perturbation = 0x7370_696b_6573,
    TrialSeed = 0x7472_6961_6c73,
    Probe = 0x7072_6f62_6573,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a list of words into one seed; order matters.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}

/// Generator for `(seed, domain, index)`. The word position starts at zero.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = derive_seed(seed, &[domain as u64]);
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
