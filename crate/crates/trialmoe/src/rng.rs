//! Deterministic random-number streams.
//!
//! Every stochastic component (parameter init, batch shuffling, gate noise,
//! perturbation, dropout, synthetic data) draws from its own ChaCha8 stream
//! derived from the single master seed and a purpose label. Streams are
//! independent: consuming one never shifts another, so toggling a component
//! (e.g. disabling augmentation) does not silently re-seed the rest.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a 32-byte ChaCha8 key from the master seed and a purpose label.
fn derive_key(master: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([0x1f]); // domain separator between seed bytes and label
    hasher.update(label.as_bytes());
    hasher.finalize().into()
}

/// A named random stream for `label`, independent of all other labels.
pub fn stream(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_key(master, label))
}

/// A named stream further indexed by an integer (per-epoch, per-step, ...).
pub fn stream_n(master: u64, label: &str, n: u64) -> ChaCha8Rng {
    stream(master, &format!("{label}#{n}"))
}

/// A derived 64-bit seed, for components that take a plain integer seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let key = derive_key(master, label);
    u64::from_le_bytes(key[..8].try_into().expect("8 bytes"))
}
