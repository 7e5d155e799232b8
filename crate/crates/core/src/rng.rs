//! Deterministic counter-derived random substreams.
//!
//! Every stochastic component draws from a ChaCha stream keyed by
//! `(seed, domain, step, lane)`. Particle `i` at step `k` always sees the same
//! stream no matter how the ensemble is scheduled across threads, which makes
//! runs bitwise reproducible for any parallelism degree.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream domains; keeps independent consumers from colliding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    ParticleInit,
    Proposal,
    Resample,
    SimImu,
    SimLandmark,
    Test,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::ParticleInit => 1,
            Domain::Proposal => 2,
            Domain::Resample => 3,
            Domain::SimImu => 4,
            Domain::SimLandmark => 5,
            Domain::Test => 6,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the substream for `(seed, domain, step, lane)`.
pub fn substream(seed: u64, domain: Domain, step: u64, lane: u64) -> ChaCha12Rng {
    let mut s = splitmix(seed);
    s = splitmix(s ^ domain.tag());
    s = splitmix(s ^ step);
    s = splitmix(s ^ lane);
    ChaCha12Rng::seed_from_u64(s)
}
