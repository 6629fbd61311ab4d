//! Named random-number streams derived from a single master seed.
//!
//! A stream is identified by `(master seed, stream, ids...)`; the ids are
//! things like a day index, a node pair or a Monte Carlo path number. Deriving
//! a fresh generator per work item keeps results independent of how the work
//! is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Rates,
    Arrivals,
    Marks,
    Bonds,
    Oracle,
}

impl Stream {
    pub const ALL: [Stream; 5] = [
        Stream::Rates,
        Stream::Arrivals,
        Stream::Marks,
        Stream::Bonds,
        Stream::Oracle,
    ];

    fn tag(self) -> u64 {
        match self {
            Stream::Rates => 0x7261_7465_7300_0001,
            Stream::Arrivals => 0x6172_7269_7600_0002,
            Stream::Marks => 0x6d61_726b_7300_0003,
            Stream::Bonds => 0x626f_6e64_7300_0004,
            Stream::Oracle => 0x6f72_6163_6c00_0005,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stream::Rates => "rates",
            Stream::Arrivals => "arrivals",
            Stream::Marks => "marks",
            Stream::Bonds => "bonds",
            Stream::Oracle => "oracle",
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the master seed, stream tag and ids into a 64-bit stream seed.
pub fn derive_seed(master: u64, stream: Stream, ids: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ stream.tag());
    for &id in ids {
        h = splitmix64(h ^ splitmix64(id.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn stream_rng(master: u64, stream: Stream, ids: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, stream, ids))
}
