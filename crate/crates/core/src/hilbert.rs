//! Hilbert curve indexing for multi-column layouts.
//!
//! Points are mapped to positions on a Hilbert curve so that rows close on
//! the curve are close in every keyed column. The transform is Skilling's
//! transpose algorithm: coordinates are folded into the transposed index in
//! place, then the index is read off by interleaving bits most significant
//! first. Supports 2 and 3 dimensions at up to 16 bits per dimension; a
//! min-max quantizer maps raw column values onto the grid.

use crate::{Result, SimError};

pub const MIN_DIMS: usize = 2;
pub const MAX_DIMS: usize = 3;
pub const MAX_BITS: u32 = 16;

/// Map `coords` (each `< 2^bits`) to the point's position along the Hilbert
/// curve of order `bits` in `coords.len()` dimensions.
pub fn hilbert_index(coords: &[u64], bits: u32) -> Result<u64> {
    let n = coords.len();
    if !(MIN_DIMS..=MAX_DIMS).contains(&n) {
        return Err(SimError::Quantization(format!(
            "curve supports {MIN_DIMS}-{MAX_DIMS} dimensions, got {n}"
        )));
    }
    if bits == 0 || bits > MAX_BITS {
        return Err(SimError::Quantization(format!(
            "curve order must be 1-{MAX_BITS} bits, got {bits}"
        )));
    }
    let limit = 1u64 << bits;
    for (i, &c) in coords.iter().enumerate() {
        if c >= limit {
            return Err(SimError::Quantization(format!(
                "coordinate {c} on axis {i} exceeds {bits}-bit grid"
            )));
        }
    }

    // Skilling's transform: fold the coordinates into transposed-index form.
    let mut x = [0u64; MAX_DIMS];
    x[..n].copy_from_slice(coords);
    let m = 1u64 << (bits - 1);
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0u64;
    let mut q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for xi in x[..n].iter_mut() {
        *xi ^= t;
    }

    // Read the index out of the transpose: bit (bits-1-j) of axis i lands at
    // position (bits-1-j)*n + (n-1-i), most significant level first.
    let mut index = 0u64;
    for j in (0..bits).rev() {
        for (i, &xi) in x[..n].iter().enumerate() {
            index = (index << 1) | ((xi >> j) & 1);
            let _ = i;
        }
    }
    Ok(index)
}

/// Quantize a value from `[min, max]` onto the `bits`-wide grid. Degenerate
/// ranges collapse to 0; the mapping is monotone with endpoints pinned to the
/// grid's ends.
pub fn quantize(value: i64, min: i64, max: i64, bits: u32) -> u64 {
    if max <= min {
        return 0;
    }
    let cells = (1u128 << bits) - 1;
    let span = (max - min) as u128;
    let off = (value.clamp(min, max) - min) as u128;
    (off * cells / span) as u64
}
