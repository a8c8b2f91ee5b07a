//! SeLo map generation: tile planning, scoring, stacking, smoothing and
//! normalization, with per-stage wall-clock timings.

mod median;
mod stack;
mod tiles;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use median::median_filter;
pub use stack::{coverage_counts, stack_similarities};
pub use tiles::{plan_tiles, MedianKernel, PipelineConfig, Tile, TilePlan};

use crate::error::Result;
use crate::io::{crop_png_base64, RasterRef};
use crate::map::ProbabilityMap;
use crate::scorer::{score_tiles, ScoreBatch, Scorer};

pub const DEGENERATE_RELATIVE_SPAN: f64 = 1e-6;

/// Min-max normalization to `[0, 1]`.
///
/// A map without contrast gives all zeros and a `true` flag. Contrast below
/// [`DEGENERATE_RELATIVE_SPAN`] of the maximum counts as none: averaging equal
/// scores in single precision can leave a few ulps of spread.
pub fn normalize(map: &ProbabilityMap) -> (ProbabilityMap, bool) {
    let (lo, hi) = map.min_max();
    let (h, w) = map.dims();
    if (hi - lo) as f64 <= DEGENERATE_RELATIVE_SPAN * hi as f64 {
        return (ProbabilityMap::from_parts_unchecked(h, w, vec![0.0; h * w]), true);
    }
    let (lo, span) = (lo as f64, hi as f64 - lo as f64);
    let values = map
        .values()
        .par_iter()
        .map(|&v| ((v as f64 - lo) / span) as f32)
        .collect();
    (ProbabilityMap::from_parts_unchecked(h, w, values), false)
}

/// Wall time of each generation stage, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    /// Tile planning and crop extraction.
    #[serde(rename = "cut_s")]
    pub cut: f64,
    /// Slice similarity scoring.
    #[serde(rename = "sim_s")]
    pub sim: f64,
    /// Pixel-level stacking.
    #[serde(rename = "gnt_s")]
    pub gnt: f64,
    /// Median filtering and normalization.
    #[serde(rename = "flt_s")]
    pub flt: f64,
    /// Measured independently around the whole run.
    #[serde(rename = "total_s")]
    pub total: f64,
}

impl StageTimings {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("timings serialize")
    }
}

#[derive(Debug, Clone)]
pub struct SeloOutput {
    pub map: ProbabilityMap,
    /// The smoothed map was constant before normalization.
    pub degenerate: bool,
    pub timings: StageTimings,
    pub tile_count: usize,
    pub median_kernel: usize,
    pub skipped_scales: Vec<u32>,
}

/// Runs plan → score → stack → median filter → normalize for one query.
pub fn generate_selo_map(
    image: &RasterRef,
    query: &str,
    scorer: &mut dyn Scorer,
    config: &PipelineConfig,
) -> Result<SeloOutput> {
    let started = Instant::now();
    let (height, width) = (image.height, image.width);

    let t = Instant::now();
    let plan = plan_tiles(height, width, config)?;
    let payloads = if scorer.wants_payloads() {
        let rgb = image.load_rgb()?;
        Some(
            plan.tiles
                .par_iter()
                .map(|t| crop_png_base64(&rgb, t.x0, t.y0, t.side))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let cut = t.elapsed();

    let t = Instant::now();
    let scores = score_tiles(
        scorer,
        &ScoreBatch {
            query,
            image,
            tiles: &plan.tiles,
            payloads: payloads.as_deref(),
        },
    )?;
    let sim = t.elapsed();

    let t = Instant::now();
    let raw = stack_similarities(&plan.tiles, &scores, height, width)?;
    let gnt = t.elapsed();

    let t = Instant::now();
    let kernel = config.median_kernel.resolve(height, width);
    let smoothed = median_filter(&raw, kernel)?;
    let (map, degenerate) = normalize(&smoothed);
    let flt = t.elapsed();

    let secs = Duration::as_secs_f64;
    Ok(SeloOutput {
        map,
        degenerate,
        timings: StageTimings {
            cut: secs(&cut),
            sim: secs(&sim),
            gnt: secs(&gnt),
            flt: secs(&flt),
            total: secs(&started.elapsed()),
        },
        tile_count: plan.tiles.len(),
        median_kernel: kernel,
        skipped_scales: plan.skipped_scales,
    })
}
