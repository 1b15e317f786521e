//! Stable seed derivation.
//!
//! A master seed is split into per-task seeds by hashing
//! `(master, task name, index)`, so adding a task never perturbs the stream
//! of another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive(master: u64, task: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((task.len() as u64).to_le_bytes());
    h.update(task.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for item `index` of task `task` under `master`.
pub fn task_rng(master: u64, task: &str, index: u64) -> Rng {
    rng(derive(master, task, index))
}
