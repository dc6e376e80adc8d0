//! Seedable, counter-based random number generation with documented
//! stream splitting.
//!
//! Every random quantity in the toolkit is drawn from a ChaCha8 stream
//! seeded through [`seed_rng`]. Child seeds for independent streams (one
//! per generated frame, one per noise realization, ...) are derived with
//! [`derive_seed`], a SplitMix64 fold over the parent seed and the
//! distinguishing parts. The derivation is pure arithmetic, so identical
//! inputs reproduce identical streams on every platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Bijective on u64, good avalanche behaviour.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` and an ordered list of parts.
///
/// `derive_seed(s, &[a, b])` folds each part into the running state with
/// SplitMix64: `state = splitmix64(state ^ splitmix64(part))`. Different
/// part sequences yield statistically independent children.
pub fn derive_seed(parent: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(parent);
    for &part in parts {
        state = splitmix64(state ^ splitmix64(part));
    }
    state
}

/// Deterministic counter-based generator for the given seed.
pub fn seed_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
