//! Fan-out of the single user seed into per-component streams.
//!
//! Every component that draws random numbers derives its own seed as
//! `derive(seed, STREAM)`, so changing how one component consumes randomness
//! leaves the others untouched.

pub const FOREST: u64 = 0x0100;
pub const SPLIT: u64 = 0x0200;
pub const SMOTE: u64 = 0x0300;
pub const CART: u64 = 0x0400;
pub const SYNTH: u64 = 0x0500;

/// SplitMix64 finaliser over `seed + stream`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
