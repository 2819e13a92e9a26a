//! Per-task random streams.
//!
//! Every random decision inside a fit draws from a stream keyed by
//! `(master seed, purpose, step, slot)`, so results never depend on the
//! order in which parallel tasks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    FeatureSample = 1,
    KMeans = 2,
    Medoid = 3,
    Batch = 4,
    Trial = 5,
    Generator = 6,
}

pub fn derive_seed(master: u64, purpose: Purpose, step: u64, slot: u64) -> [u8; 32] {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&master.to_le_bytes());
    bytes[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    bytes[16..24].copy_from_slice(&step.to_le_bytes());
    bytes[24..32].copy_from_slice(&slot.to_le_bytes());
    bytes
}

pub fn stream(master: u64, purpose: Purpose, step: u64, slot: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(master, purpose, step, slot))
}

/// Folds a stream key into a plain `u64`, for APIs that take an integer seed.
pub fn derive_u64(master: u64, purpose: Purpose, step: u64, slot: u64) -> u64 {
    use rand::RngCore;
    stream(master, purpose, step, slot).next_u64()
}
