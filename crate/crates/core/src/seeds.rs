//! Deterministic seed derivation.
//!
//! Every random decision flows from one master seed. Sub-tasks (one
//! projection per code bit, one trial per collision run, each parameter
//! init stream) get their own generator keyed by `derive(master, index)`,
//! so results do not depend on evaluation order or thread count.

/// SplitMix64 finalizer: bijective on `u64` with strong avalanche.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for task `index` under `master`.
pub fn derive(master: u64, index: u64) -> u64 {
    mix(master ^ mix(index.wrapping_add(1)))
}
