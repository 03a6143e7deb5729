//! Counter-based random streams.
//!
//! Every consumer draws from a ChaCha8 generator keyed by a 64-bit seed and
//! a stream index, so replications can run in any order or in parallel and
//! still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A `(key, stream)` pair identifying an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub key: u64,
    pub stream: u64,
}

impl StreamSeed {
    pub const fn new(key: u64, stream: u64) -> Self {
        Self { key, stream }
    }

    pub fn rng(self) -> ChaCha8Rng {
        stream_rng(self.key, self.stream)
    }
}

impl From<u64> for StreamSeed {
    fn from(key: u64) -> Self {
        Self { key, stream: 0 }
    }
}

impl From<(u64, u64)> for StreamSeed {
    fn from((key, stream): (u64, u64)) -> Self {
        Self { key, stream }
    }
}

pub fn stream_rng(key: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}
