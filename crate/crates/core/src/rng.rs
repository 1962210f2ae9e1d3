//! Seed derivation. A single root seed is split into independent ChaCha
//! streams, one per component, so that changing how one component consumes
//! randomness leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Synth = 1,
    Init = 2,
    Sampling = 3,
    Dropout = 4,
}

pub fn component_rng(seed: u64, stream: Stream) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed for a component that takes a plain `u64` (e.g. parameter init).
pub fn component_seed(seed: u64, stream: Stream) -> u64 {
    use rand::RngCore;
    component_rng(seed, stream).next_u64()
}
