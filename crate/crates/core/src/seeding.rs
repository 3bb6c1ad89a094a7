//! Deterministic RNG derivation.
//!
//! Every source of randomness in the library draws from a ChaCha stream
//! keyed by `(master_seed, domain, index)`. Work items (ensemble trials,
//! per-sample dropout masks, per-group initializers) each own an
//! independent stream, so results do not depend on thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Randomness domains. Each domain gets a disjoint stream range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    EnsembleTrial = 1,
    WeightInit = 2,
    Dropout = 3,
    Synthetic = 4,
    GroupSeed = 5,
}

/// RNG for one work item. `index` must stay below 2^56.
pub fn rng_for(master_seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    debug_assert!(index < (1 << 56));
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((domain as u64) << 56) | index);
    rng
}
