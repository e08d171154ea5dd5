//! Deterministic, hierarchically derived random streams.
//!
//! Every stream is identified by a root seed and a path of integer labels.
//! The 32-byte ChaCha20 key is the SHA-256 digest of a domain tag, the root
//! seed and the path (all little-endian), so a stream's output depends only
//! on `(root_seed, path)` and never on the order in which streams are
//! created or consumed.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Identifier of the generator algorithm, recorded in every output file.
pub const PRNG_ID: &str = "chacha20-sha256/v1";

const DOMAIN_TAG: &[u8] = b"genhold.rng.v1";

/// The concrete generator handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha20Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    root_seed: u64,
    path: Vec<u64>,
}

impl RngStream {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            path: Vec::new(),
        }
    }

    /// Substream one level below `self`.
    pub fn child(&self, label: u64) -> Self {
        let mut path = self.path.clone();
        path.push(label);
        Self {
            root_seed: self.root_seed,
            path,
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    pub fn seed_bytes(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(DOMAIN_TAG);
        hasher.update(self.root_seed.to_le_bytes());
        hasher.update((self.path.len() as u64).to_le_bytes());
        for label in &self.path {
            hasher.update(label.to_le_bytes());
        }
        hasher.finalize().into()
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        ChaCha20Rng::from_seed(self.seed_bytes())
    }
}
