//! Exact square-window median filter for large float rasters.
//!
//! Values are replaced by their rank among the distinct values of the map,
//! and each output row is produced by sliding a rank histogram (a Fenwick
//! tree) across the row. Moving one column costs `O(k log U)` where `U` is
//! the number of distinct values; stacked similarity maps are piecewise
//! constant, so most column updates cancel and are skipped.
//!
//! Borders use half-sample symmetric reflection: `... c b a | a b c ...`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::map::ProbabilityMap;

pub fn median_filter(map: &ProbabilityMap, kernel: usize) -> Result<ProbabilityMap> {
    if kernel % 2 == 0 {
        return Err(Error::EvenKernel(kernel));
    }
    let (height, width) = map.dims();
    if kernel > height.min(width) {
        return Err(Error::KernelTooLarge { kernel, height, width });
    }
    if kernel == 1 {
        return Ok(map.clone());
    }

    // Nonnegative finite floats order the same way as their bit patterns.
    let bits: Vec<u32> = map.values().iter().map(|v| v.to_bits()).collect();
    let mut distinct = bits.clone();
    distinct.par_sort_unstable();
    distinct.dedup();
    let ranks: Vec<u32> = bits
        .par_iter()
        .map(|b| distinct.binary_search(b).expect("value present") as u32)
        .collect();

    let half = kernel / 2;
    let row_index: Vec<usize> = (0..height + 2 * half)
        .map(|i| reflect(i as isize - half as isize, height))
        .collect();
    let col_index: Vec<usize> = (0..width + 2 * half)
        .map(|i| reflect(i as isize - half as isize, width))
        .collect();

    let threads = rayon::current_num_threads().max(1);
    let band_rows = (height / (threads * 4)).clamp(1, 64);
    let mut out = vec![0f32; height * width];
    out.par_chunks_mut(band_rows * width)
        .enumerate()
        .for_each(|(band, chunk)| {
            let mut hist = Fenwick::new(distinct.len());
            let r0 = band * band_rows;
            let target = (kernel * kernel / 2) as u32;
            for (dr, out_row) in chunk.chunks_mut(width).enumerate() {
                let r = r0 + dr;
                let rows = &row_index[r..r + kernel];
                for &c in &col_index[0..kernel] {
                    for &rr in rows {
                        hist.add(ranks[rr * width + c] as usize, 1);
                    }
                }
                out_row[0] = f32::from_bits(distinct[hist.kth(target)]);
                for c in 1..width {
                    let old = col_index[c - 1];
                    let new = col_index[c + kernel - 1];
                    for &rr in rows {
                        let a = ranks[rr * width + old];
                        let b = ranks[rr * width + new];
                        if a != b {
                            hist.add(a as usize, -1);
                            hist.add(b as usize, 1);
                        }
                    }
                    out_row[c] = f32::from_bits(distinct[hist.kth(target)]);
                }
                // Drain the final window so the tree is empty for the next row.
                for &c in &col_index[width - 1..width - 1 + kernel] {
                    for &rr in rows {
                        hist.add(ranks[rr * width + c] as usize, -1);
                    }
                }
            }
        });
    Ok(ProbabilityMap::from_parts_unchecked(height, width, out))
}

/// Half-sample symmetric reflection of `i` into `0..n`. Valid for
/// `-n <= i < 2n`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i - 1
    } else if i >= n {
        2 * n - i - 1
    } else {
        i
    };
    j as usize
}

struct Fenwick {
    tree: Vec<i32>,
    top: usize,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        let top = if n == 0 {
            0
        } else {
            1 << (usize::BITS - 1 - n.leading_zeros())
        };
        Self {
            tree: vec![0; n + 1],
            top,
        }
    }

    #[inline]
    fn add(&mut self, index: usize, delta: i32) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Smallest index whose inclusive prefix count exceeds `k`, i.e. the
    /// element at zero-based sorted position `k`.
    #[inline]
    fn kth(&self, k: u32) -> usize {
        let mut pos = 0usize;
        let mut remaining = k as i32;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= remaining {
                pos = next;
                remaining -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}
