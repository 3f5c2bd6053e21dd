//! Data-parallel execution helpers.
//!
//! Independent trials (Monte Carlo runs, sweep rows, seed batches) go
//! through `map_indexed`, which fans out over rayon when the `parallel`
//! feature is enabled and falls back to a plain loop otherwise. Results are
//! returned in index order either way, so outputs are identical across
//! thread counts. `map_indexed_seq` is always sequential and exists as the
//! benchmark baseline.

/// Map `f` over `0..n`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n` sequentially (the `parallel` feature is off).
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential reference implementation, independent of feature flags.
pub fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Derive a per-task seed from a master seed, a domain label and an index.
///
/// Stable across platforms and thread counts; used everywhere an
/// independent deterministic RNG stream is needed.
pub fn derive_seed(master: u64, domain: &str, index: u64) -> u64 {
    // FNV-1a over the domain, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in domain.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
