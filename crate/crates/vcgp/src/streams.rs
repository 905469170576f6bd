//! Deterministic RNG stream derivation.
//!
//! Every random draw in the crate comes from a ChaCha12 stream keyed by
//! (master seed, domain tag, stream index). ChaCha output is stable across
//! platforms and rand releases, which is what makes run directories
//! reproducible byte for byte. StdRng deliberately is not used: its algorithm
//! is allowed to change between rand versions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Domain tags keep unrelated consumers of the same master seed from ever
/// sharing a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Chain,
    Partition,
    Simulation,
    Inducing,
}

impl Domain {
    fn tag(self) -> u8 {
        match self {
            Domain::Chain => 1,
            Domain::Partition => 2,
            Domain::Simulation => 3,
            Domain::Inducing => 4,
        }
    }
}

/// Derive the RNG stream for (`master`, `domain`, `index`).
pub fn derive_rng(master: u64, domain: Domain, index: u64) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&index.to_le_bytes());
    seed[16] = domain.tag();
    ChaCha12Rng::from_seed(seed)
}
