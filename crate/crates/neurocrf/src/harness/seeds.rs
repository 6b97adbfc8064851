//! Deterministic seed derivation for benchmark units.
//!
//! The per-iteration seed is `base_seed + iteration`; the per-model
//! seed additionally mixes a stable hash of the model id, so every
//! (model, iteration) unit draws an independent stream while all
//! architectures share the same partition for a given unit — which is
//! what makes the significance tests paired comparisons.

/// FNV-1a over bytes; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// SplitMix64 finalizer; scrambles structured inputs into seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeds reproducing one experiment unit: the partition seed drives
/// train/test/impostor sampling, the train seed drives weight
/// initialization and presentation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentSeeds {
    pub partition_seed: u64,
    pub train_seed: u64,
}

/// Derive the seeds for one (model, iteration) unit.
pub fn derive_seeds(base_seed: u64, iteration: usize, model_id: &str) -> ExperimentSeeds {
    let iter_seed = base_seed.wrapping_add(iteration as u64);
    let mixed = iter_seed ^ fnv1a(model_id.as_bytes());
    let partition_seed = splitmix64(mixed);
    let train_seed = splitmix64(partition_seed);
    ExperimentSeeds {
        partition_seed,
        train_seed,
    }
}
