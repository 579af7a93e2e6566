//! Seeded, hierarchically splittable random streams.
//!
//! A [`RandomStream`] is a `(seed, stream_id)` pair. Child streams are
//! derived deterministically, so work can be sharded over rows, repetitions
//! or bootstrap replicates without the result depending on the thread count.

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The generator handed out by [`RandomStream::rng`].
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Child stream number `index`.
    pub fn substream(&self, index: u64) -> Self {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)));
        Self::new(self.seed, id)
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut key = [0u8; 32];
        let words = [
            splitmix64(self.seed),
            splitmix64(self.seed ^ 0x5851_F42D_4C95_7F2D),
            splitmix64(self.stream_id),
            splitmix64(self.stream_id ^ 0x1405_7B7E_F767_814F),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

/// Unit exponential draw by inversion of an open uniform; always finite and positive.
#[inline]
pub fn unit_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -open_uniform(rng).ln()
}
