//! Stable seed derivation.
//!
//! Every random choice in the pipeline is keyed by a hash of the inputs that
//! identify it, so results never depend on execution order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Incremental builder for a derived 64-bit seed.
///
/// Parts are length-prefixed before hashing, so `("ab", "c")` and
/// `("a", "bc")` never collide.
#[derive(Clone)]
pub struct SeedHasher(Sha256);

impl SeedHasher {
    pub fn new(domain: &str) -> Self {
        let mut h = SeedHasher(Sha256::new());
        h = h.str(domain);
        h
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.0.update([8u8]);
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn str(self, s: &str) -> Self {
        self.bytes(s.as_bytes())
    }

    pub fn bytes(mut self, b: &[u8]) -> Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn finish(self) -> u64 {
        let digest = self.0.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.finish())
    }
}

/// Per-item generation seed: `H(job_seed, sample_id, index)`.
pub fn item_seed(job_seed: u64, sample_id: &str, index: u64) -> u64 {
    SeedHasher::new("segpipe.item")
        .u64(job_seed)
        .str(sample_id)
        .u64(index)
        .finish()
}

/// Seed used for the single regeneration attempt of a degenerate item.
pub fn retry_seed(seed: u64) -> u64 {
    SeedHasher::new("segpipe.retry").u64(seed).finish()
}

/// Hex SHA-256 of a byte payload.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
