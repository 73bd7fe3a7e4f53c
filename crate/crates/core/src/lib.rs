//! Secret-key generation by packet superposition (the AAA method) and the
//! tools to measure it: packed GF(2) algebra, Markov/erasure packet sources,
//! the XOR key accumulator, exact and Monte Carlo equivocation, partial
//! leakage rank tracking, and the reciprocal-channel baseline comparison.

pub mod baseline;
pub mod equivocation;
pub mod error;
pub mod gf2;
pub mod keygen;
pub mod leakage;
pub mod rng;
pub mod sources;
mod stats;

pub use error::{Error, Result};
pub use gf2::{binary_entropy, rank, xor_into, BitMatrix, BitVec};
