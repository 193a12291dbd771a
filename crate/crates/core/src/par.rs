//! Deterministic parallelism helpers.
//!
//! Work is split into a fixed number of bands that depends only on the
//! problem size, never on the worker count, and per-band results are
//! combined in band order. Outputs are therefore bit-identical for any
//! thread count, including the serial build without the `parallel` feature.

/// Upper bound on row bands for image-space work.
const MAX_BANDS: usize = 32;

/// Contiguous row ranges `[start, end)` covering `0..rows`.
pub fn row_bands(rows: usize) -> Vec<(usize, usize)> {
    let bands = rows.min(MAX_BANDS).max(1);
    let base = rows / bands;
    let extra = rows % bands;
    let mut out = Vec::with_capacity(bands);
    let mut start = 0;
    for b in 0..bands {
        let len = base + usize::from(b < extra);
        out.push((start, start + len));
        start += len;
    }
    out
}

/// Maps `f` over `0..n`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub fn ordered_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn ordered_map<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}
