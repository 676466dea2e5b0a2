//! Deterministic derivation of independent RNG streams.

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream identified by `master` and a path of indices, e.g.
/// `(master, [epoch, batch, instance, sample])`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master ^ 0x9E37_79B9_7F4A_7C15), |acc, &p| {
        mix(acc.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(mix(p)))
    })
}
