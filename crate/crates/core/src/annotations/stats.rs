use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use super::polygon::rasterize_region;
use crate::error::Result;
use crate::map::Mask;

/// Dataset statistics in the shape of a testset summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub sample_number: usize,
    pub image_number: usize,
    /// Distinct lowercase words across all queries.
    pub word_number: usize,
    pub caption_ave_length: f64,
    pub ave_region_number: f64,
    /// Per case: ground-truth pixels (union of regions) over image pixels,
    /// averaged over cases.
    pub ave_attention_ratio: f64,
}

pub fn manifest_stats(manifest: &Manifest) -> Result<ManifestStats> {
    let mut samples = 0usize;
    let mut words = 0usize;
    let mut regions = 0usize;
    let mut ratio_sum = 0.0;
    let mut vocab = BTreeSet::new();
    for (entry, case) in manifest.cases() {
        samples += 1;
        words += case.query_words();
        regions += case.regions.len();
        for w in case.query.split_whitespace() {
            let w = w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
            if !w.is_empty() {
                vocab.insert(w);
            }
        }
        let masks = case
            .regions
            .iter()
            .map(|p| rasterize_region(p, entry.height, entry.width))
            .collect::<Result<Vec<_>>>()?;
        let gt = Mask::union(&masks)?.map_or(0, |m| m.count());
        ratio_sum += gt as f64 / (entry.height * entry.width) as f64;
    }
    let per_case = |x: f64| if samples == 0 { 0.0 } else { x / samples as f64 };
    Ok(ManifestStats {
        sample_number: samples,
        image_number: manifest.images.len(),
        word_number: vocab.len(),
        caption_ave_length: per_case(words as f64),
        ave_region_number: per_case(regions as f64),
        ave_attention_ratio: per_case(ratio_sum),
    })
}
