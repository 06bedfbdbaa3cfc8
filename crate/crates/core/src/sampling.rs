//! Uniform block sampling with an explicitly pinned draw scheme.
//!
//! All solver configurations share one sampling primitive so that runs with
//! the same seed consume the random stream identically regardless of which
//! execution engine is used. The scheme is rejection sampling against the
//! next power of two: draw `next_u64`, mask to `ceil_pow2(m) - 1`, reject
//! values >= m. When there is a single block no draw is consumed at all.

use rand::RngCore;

/// Sample an index uniformly from `0..m`.
///
/// Consumes a variable number of `next_u64` draws (one in expectation at
/// most two), and exactly zero draws when `m == 1`.
pub fn sample_block<R: RngCore + ?Sized>(rng: &mut R, m: usize) -> usize {
    assert!(m > 0, "cannot sample from zero blocks");
    if m == 1 {
        return 0;
    }
    let mask = (m.next_power_of_two() - 1) as u64;
    loop {
        let v = rng.next_u64() & mask;
        if (v as usize) < m {
            return v as usize;
        }
    }
}

/// Sample `p` distinct indices from `0..m` by repeated rejection, returned
/// in the order drawn.
pub fn sample_distinct<R: RngCore + ?Sized>(rng: &mut R, m: usize, p: usize) -> Vec<usize> {
    assert!(p <= m, "cannot sample {p} distinct blocks from {m}");
    let mut out = Vec::with_capacity(p);
    while out.len() < p {
        let i = sample_block(rng, m);
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}
