//! Reproducible random streams.
//!
//! Every chain draws from a ChaCha stream keyed by `(seed, chain_id)`, so a run
//! is bit-identical however the chains are scheduled across threads. Named
//! substreams (init, main, bootstrap, ...) are derived from one user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// Named substreams of a single experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    Init,
    Main,
    Bootstrap,
    Anneal,
    Tune,
    Data,
    Train,
    Custom(u64),
}

impl Substream {
    fn tag(self) -> u64 {
        match self {
            Substream::Init => 0x1,
            Substream::Main => 0x2,
            Substream::Bootstrap => 0x3,
            Substream::Anneal => 0x4,
            Substream::Tune => 0x5,
            Substream::Data => 0x6,
            Substream::Train => 0x7,
            Substream::Custom(t) => 0x100 + t,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a named substream of `seed`.
pub fn substream_seed(seed: u64, stream: Substream) -> u64 {
    splitmix64(seed ^ splitmix64(stream.tag()))
}

/// Independent generator for chain `chain_id` under `seed`.
pub fn chain_rng(seed: u64, chain_id: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_id);
    rng
}
