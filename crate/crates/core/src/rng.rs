//! Deterministic random streams.
//!
//! Every random draw in the simulator flows through an [`RngStream`]. A stream
//! is identified by `(seed, stream_id)` and backed by ChaCha8, whose output is
//! specified bit-for-bit and does not depend on the platform. The stream id is
//! fed to ChaCha's native stream selector, so streams sharing a seed are
//! independent keystreams rather than offsets into one sequence.
//!
//! Floating-point conversions are done here rather than through `rand`'s
//! distribution types so the mapping from bits to values is pinned by this
//! crate.

use rand::{Error as RandError, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Observation mask (the Bernoulli partial-observation draws).
pub const STREAM_BPO: u64 = 0x0062_706f;
/// Perturbation noise of NFPL policies.
pub const STREAM_NOISE: u64 = 0x006e_6f69;
/// Policy-side sampling decisions (the per-request keep/skip draw).
pub const STREAM_SAMPLING: u64 = 0x0073_6d70;
/// Synthetic trace generation.
pub const STREAM_TRACE: u64 = 0x0074_7263;

const F64_UNIT: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

/// Opens the substream `stream_id` of `seed`. Identical arguments always yield
/// identical draw sequences.
pub fn spawn_stream(seed: u64, stream_id: u64) -> RngStream {
    let mut inner = ChaCha8Rng::seed_from_u64(seed);
    inner.set_stream(stream_id);
    RngStream {
        seed,
        stream_id,
        inner,
    }
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * F64_UNIT
    }

    /// Uniform draw on the half-open interval `[0, upper)`.
    pub fn uniform(&mut self, upper: f64) -> f64 {
        let x = self.next_f64() * upper;
        // the product can round up to `upper` itself
        if x >= upper {
            f64::from_bits(upper.to_bits() - 1).max(0.0)
        } else {
            x
        }
    }

    /// Bernoulli trial. Always consumes exactly one draw, so masks built with
    /// different probabilities from the same stream are monotonically coupled.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.inner.try_fill_bytes(dest)
    }
}
