//! Deterministic, schedule-independent randomness.
//!
//! Every random quantity in a run is addressed, never stored: a master `u64`
//! seed expands into a ChaCha8 key, and each logical consumer (a weight row,
//! a bias vector, a Monte Carlo integral, a bootstrap pass) opens its own
//! counter-mode stream. Two consequences:
//!
//! * reruns with the same seed reproduce every draw bit-for-bit regardless
//!   of thread count or evaluation order, and
//! * a network's weights need never be materialized — any entry can be
//!   regenerated on demand from `(replicate, layer, row, column)`.
//!
//! Samplers built on top consume a **fixed number of words per variate**
//! (documented at each sampler) so that positions within a stream are pure
//! functions of the index being drawn.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 step: the standard 64-bit finalizer, used only for key
/// derivation (never as the draw stream itself).
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the seed-derivation tree.
///
/// The root is built from the user's seed; children are derived by integer
/// tags. The tree structure keeps independent experiment components
/// (simulation, prediction, bootstrap, sweep points) on provably disjoint
/// key material while remaining fully reproducible.
#[derive(Clone, Debug)]
pub struct SeedTree {
    key: [u8; 32],
    lineage: String,
}

impl SeedTree {
    /// Expand a master seed into a root key.
    pub fn new(seed: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        SeedTree {
            key,
            lineage: seed.to_string(),
        }
    }

    /// Derive an independent child keyed by `tag`.
    pub fn child(&self, tag: u64) -> Self {
        let mut state = tag ^ 0xA076_1D64_78BD_642F;
        let mut key = [0u8; 32];
        for (chunk, old) in key.chunks_exact_mut(8).zip(self.key.chunks_exact(8)) {
            state ^= u64::from_le_bytes(old.try_into().unwrap());
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        SeedTree {
            key,
            lineage: format!("{}/{}", self.lineage, tag),
        }
    }

    /// Human-readable derivation path (root seed and child tags), embedded
    /// in sample batches and reports.
    pub fn lineage(&self) -> &str {
        &self.lineage
    }

    /// Open counter-mode stream `id` under this node's key.
    pub fn stream(&self, id: u64) -> Stream {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(id);
        Stream { rng }
    }
}

/// Well-known child tags. Anything that draws randomness outside the MLP
/// weight/bias address space hangs off one of these.
pub mod tags {
    /// Finite-width network simulation.
    pub const SIMULATION: u64 = 1;
    /// Monte Carlo integrals of the limit recursion.
    pub const PREDICTION: u64 = 2;
    /// Bootstrap resampling.
    pub const BOOTSTRAP: u64 = 3;
    /// Spectral-measure atom sampling.
    pub const SPECTRAL: u64 = 4;
    /// Counterexample runs.
    pub const COUNTEREXAMPLE: u64 = 5;
    /// Parameter-sweep points (combine with a per-point child).
    pub const SWEEP: u64 = 6;
}

/// One ChaCha8 counter-mode stream.
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in the open interval `(0, 1)`; consumes exactly one word.
    #[inline]
    pub fn unit<T: crate::Real>(&mut self) -> T {
        T::unit_open01(self.next_u64())
    }

    /// Jump to an absolute position, counted in `u64` draws from the start
    /// of the stream.
    pub fn seek(&mut self, draw_index: u128) {
        // ChaCha words are 32-bit; one u64 draw consumes two.
        self.rng.set_word_pos(draw_index * 2);
    }
}

/// Stream-id packing for network weights and biases:
/// `(replicate:32) << 32 | (field:8) << 24 | (row:24)`.
///
/// `field` is `2ℓ` for layer ℓ's weights and `2ℓ+1` for its biases, so a
/// network may have at most 127 layers; rows (= output node index for the
/// per-row weight streams of layers ℓ ≥ 2) must stay below 2²⁴.
#[inline]
pub fn mlp_stream_id(replicate: u32, field: u8, row: u32) -> u64 {
    debug_assert!(row < (1 << 24), "row index {row} exceeds 24-bit stream space");
    ((replicate as u64) << 32) | ((field as u64) << 24) | row as u64
}

/// Maximum addressable layer index (inclusive) under the field packing.
pub const MAX_LAYER_INDEX: usize = 127;

#[inline]
pub fn weight_field(layer: usize) -> u8 {
    debug_assert!(layer >= 1 && layer <= MAX_LAYER_INDEX);
    (2 * layer) as u8
}

#[inline]
pub fn bias_field(layer: usize) -> u8 {
    debug_assert!(layer >= 1 && layer <= MAX_LAYER_INDEX);
    (2 * layer + 1) as u8
}
