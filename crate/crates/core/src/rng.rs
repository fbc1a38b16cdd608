//! Counter-keyed random substreams.
//!
//! Every random draw in a simulation is keyed by the master seed plus a small
//! tuple of indices (trial, purpose, sub-index). Streams never depend on the
//! order in which trials are scheduled, so serial and parallel runs agree
//! bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

/// What a substream is used for. Keeps draws for different quantities
/// independent even when they share trial indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Geometry = 1,
    Shadowing = 2,
    Estimate = 3,
    Error = 4,
    RandomInit = 5,
    Test = 6,
    /// Error draws used only to pick the common power.
    SearchError = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent generator for `(master, purpose, trial, index)`.
pub fn substream(master: u64, purpose: Purpose, trial: u64, index: u64) -> SimRng {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ purpose as u64);
    h = splitmix64(h ^ trial);
    h = splitmix64(h ^ index);
    SimRng::seed_from_u64(h)
}
