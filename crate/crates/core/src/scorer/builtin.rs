use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fnv1a64, ScoreBatch, Scorer, FNV_OFFSET};
use crate::annotations::Point;
use crate::error::ScorerError;
use crate::map::Mask;
use crate::pipeline::Tile;

#[derive(Debug, Clone)]
pub struct ConstantScorer {
    value: f64,
}

impl ConstantScorer {
    pub fn new(value: f64) -> Self {
        Self { value }
    }
}

impl Scorer for ConstantScorer {
    fn name(&self) -> &str {
        "constant"
    }

    fn score_tiles(&mut self, batch: &ScoreBatch<'_>) -> Result<Vec<f64>, ScorerError> {
        Ok(vec![self.value; batch.tiles.len()])
    }
}

/// Each tile's score depends only on the seed and the tile geometry, so
/// results are independent of tile order and batching.
#[derive(Debug, Clone)]
pub struct SeededRandomScorer {
    seed: u64,
}

impl SeededRandomScorer {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn score(&self, tile: &Tile) -> f64 {
        let mut h = fnv1a64(&self.seed.to_le_bytes(), FNV_OFFSET);
        for v in [tile.x0, tile.y0, tile.side] {
            h = fnv1a64(&(v as u64).to_le_bytes(), h);
        }
        ChaCha8Rng::seed_from_u64(h).random::<f64>()
    }
}

impl Scorer for SeededRandomScorer {
    fn name(&self) -> &str {
        "seeded-random"
    }

    fn score_tiles(&mut self, batch: &ScoreBatch<'_>) -> Result<Vec<f64>, ScorerError> {
        Ok(batch.tiles.par_iter().map(|t| self.score(t)).collect())
    }
}

/// Scores a tile by the fraction of its pixels inside the ground truth,
/// using a summed-area table of the mask.
#[derive(Debug, Clone)]
pub struct GtOracleScorer {
    width: usize,
    height: usize,
    integral: Vec<u32>,
}

impl GtOracleScorer {
    pub fn new(mask: &Mask) -> Self {
        let (h, w) = mask.dims();
        let stride = w + 1;
        let mut integral = vec![0u32; (h + 1) * stride];
        for r in 0..h {
            let mut row_sum = 0u32;
            for c in 0..w {
                row_sum += mask.get(r, c) as u32;
                integral[(r + 1) * stride + c + 1] = integral[r * stride + c + 1] + row_sum;
            }
        }
        Self {
            width: w,
            height: h,
            integral,
        }
    }

    /// `|tile ∩ GT| / |tile|`, with out-of-image parts counted as outside.
    pub fn overlap_fraction(&self, tile: &Tile) -> f64 {
        let stride = self.width + 1;
        let (x0, y0) = (tile.x0.min(self.width), tile.y0.min(self.height));
        let (x1, y1) = (tile.x1().min(self.width), tile.y1().min(self.height));
        let at = |r: usize, c: usize| self.integral[r * stride + c] as i64;
        let inside = at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
        inside as f64 / tile.area() as f64
    }
}

impl Scorer for GtOracleScorer {
    fn name(&self) -> &str {
        "gt-oracle"
    }

    fn score_tiles(&mut self, batch: &ScoreBatch<'_>) -> Result<Vec<f64>, ScorerError> {
        Ok(batch.tiles.iter().map(|t| self.overlap_fraction(t)).collect())
    }
}

/// Single-peak (per target) synthetic scorer with an analytically known
/// argmax.
#[derive(Debug, Clone)]
pub struct GaussianTargetScorer {
    targets: Vec<Point>,
    sigma: f64,
}

impl GaussianTargetScorer {
    pub fn new(targets: Vec<Point>, sigma: f64) -> Self {
        Self { targets, sigma }
    }

    pub fn score(&self, tile: &Tile) -> f64 {
        let (cx, cy) = tile.center();
        let c = Point::new(cx, cy);
        let d2 = self
            .targets
            .iter()
            .map(|t| {
                let d = t.distance(c);
                d * d
            })
            .fold(f64::INFINITY, f64::min);
        (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

impl Scorer for GaussianTargetScorer {
    fn name(&self) -> &str {
        "gaussian-target"
    }

    fn score_tiles(&mut self, batch: &ScoreBatch<'_>) -> Result<Vec<f64>, ScorerError> {
        Ok(batch.tiles.iter().map(|t| self.score(t)).collect())
    }
}
