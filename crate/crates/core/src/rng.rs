//! Deterministic random substreams.
//!
//! Every stochastic step draws from a ChaCha20 generator keyed by a 64-bit seed.
//! Within one training run the stream id packs the purpose of the draws together
//! with the (epoch, feature) pair:
//!
//! ```text
//! stream = purpose << 56 | epoch << 24 | feature
//! ```
//!
//! so the values used for one (epoch, feature) never depend on how many values
//! another pair consumed. Seeds for independent jobs (experiment repeats) are
//! derived with [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Binning = 1,
    Partition = 2,
    LeafNoise = 3,
    Split = 4,
}

const EPOCH_BITS: u64 = 32;
const FEATURE_BITS: u64 = 24;

pub fn substream(seed: u64, purpose: Purpose, epoch: usize, feature: usize) -> ChaCha20Rng {
    let epoch = epoch as u64;
    let feature = feature as u64;
    assert!(epoch < 1 << EPOCH_BITS, "epoch index out of range");
    assert!(feature < 1 << FEATURE_BITS, "feature index out of range");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((purpose as u64) << 56 | epoch << FEATURE_BITS | feature);
    rng
}

/// SplitMix64 finalizer applied to `seed + index`; distinct indices give
/// well-separated seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
