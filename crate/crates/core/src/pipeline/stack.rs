use rayon::prelude::*;

use super::tiles::Tile;
use crate::error::{Error, Result};
use crate::map::ProbabilityMap;

const BAND_ROWS: usize = 64;

/// Averages per-tile scores into a per-pixel raster.
///
/// Every pixel receives the mean score of the tiles covering it. Negative
/// scores are clamped to zero first. Accumulation uses one `f32` sum raster
/// and one `u16` count raster; rows are processed in disjoint bands, each
/// visiting tiles in input order, so the result does not depend on thread
/// scheduling.
pub fn stack_similarities(tiles: &[Tile], scores: &[f64], height: usize, width: usize) -> Result<ProbabilityMap> {
    if tiles.len() != scores.len() {
        return Err(Error::LengthMismatch {
            what: "tiles vs scores",
            left: tiles.len(),
            right: scores.len(),
        });
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidConfig(format!(
            "map dims must be positive, got {height}x{width}"
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidMap(format!("non-finite tile score {s}")));
    }
    if let Some(t) = tiles.iter().find(|t| t.side == 0 || t.x1() > width || t.y1() > height) {
        return Err(Error::InvalidConfig(format!(
            "tile at ({}, {}) side {} exceeds {height}x{width}",
            t.x0, t.y0, t.side
        )));
    }
    let clamped: Vec<f32> = scores.iter().map(|&s| s.max(0.0) as f32).collect();

    let mut sums = vec![0f32; height * width];
    let mut counts = vec![0u16; height * width];
    let overflow = sums
        .par_chunks_mut(BAND_ROWS * width)
        .zip(counts.par_chunks_mut(BAND_ROWS * width))
        .enumerate()
        .map(|(band, (sum, count))| {
            let r0 = band * BAND_ROWS;
            let r1 = r0 + sum.len() / width;
            let mut overflow = false;
            for (t, &s) in tiles.iter().zip(&clamped) {
                let (lo, hi) = (t.y0.max(r0), t.y1().min(r1));
                for r in lo..hi {
                    let base = (r - r0) * width;
                    for v in &mut sum[base + t.x0..base + t.x1()] {
                        *v += s;
                    }
                    for n in &mut count[base + t.x0..base + t.x1()] {
                        let (next, o) = n.overflowing_add(1);
                        *n = next;
                        overflow |= o;
                    }
                }
            }
            overflow
        })
        .reduce(|| false, |a, b| a | b);
    if overflow {
        return Err(Error::InvalidConfig(
            "more than 65535 tiles cover a single pixel".into(),
        ));
    }
    if let Some(i) = counts.iter().position(|&n| n == 0) {
        return Err(Error::UncoveredPixel {
            row: i / width,
            col: i % width,
        });
    }
    let values = sums
        .into_par_iter()
        .zip(counts.into_par_iter())
        .map(|(s, n)| s / n as f32)
        .collect();
    Ok(ProbabilityMap::from_parts_unchecked(height, width, values))
}

/// Per-pixel number of tiles covering it.
pub fn coverage_counts(tiles: &[Tile], height: usize, width: usize) -> Vec<u32> {
    let mut counts = vec![0u32; height * width];
    for t in tiles {
        for r in t.y0..t.y1().min(height) {
            for n in &mut counts[r * width + t.x0..r * width + t.x1().min(width)] {
                *n += 1;
            }
        }
    }
    counts
}
