//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 keystream whose
//! key is derived from a user seed and whose 64-bit stream id encodes what is
//! being sampled and at which index (time step, trial, ...). Two draws with
//! the same `(seed, purpose, index)` are bit-identical regardless of the order
//! in which other streams were consumed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// What a stream is used for. The discriminant occupies the top byte of the
/// ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    ReservoirWeights = 1,
    InputWeights = 2,
    Bias = 3,
    Signs = 4,
    InitialState = 5,
    Features = 6,
    Inputs = 7,
    Subsample = 8,
    Misc = 9,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Opens the stream `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(((purpose as u64) << 56) ^ (index & 0x00FF_FFFF_FFFF_FFFF));
    rng
}

/// Fills `out` with i.i.d. `N(0, std²)` samples.
pub fn fill_gaussian<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64], std: f64) {
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = std * z;
    }
}

/// Fills `out` with i.i.d. Rademacher signs (exactly `±1.0`).
pub fn fill_rademacher<R: RngCore + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for chunk in out.chunks_mut(64) {
        let bits = rng.next_u64();
        for (k, v) in chunk.iter_mut().enumerate() {
            *v = if (bits >> k) & 1 == 1 { 1.0 } else { -1.0 };
        }
    }
}
