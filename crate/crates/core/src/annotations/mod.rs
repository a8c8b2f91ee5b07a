//! Test manifests, ground-truth polygons and their derived geometry.

mod manifest;
mod polygon;
mod stats;

pub use manifest::{load_manifest, ImageEntry, Manifest, TestCase, MANIFEST_VERSION};
pub use polygon::{candidate_radius, rasterize_region, region_center, Point, Polygon};
pub use stats::{manifest_stats, ManifestStats};

use crate::error::{Error, Result};
use crate::map::Mask;

/// Everything the metrics need to know about one ground-truth region.
#[derive(Debug, Clone)]
pub struct GtRegionContext {
    pub polygon: Polygon,
    pub mask: Mask,
    pub center: Point,
    pub candidate_radius: f64,
}

impl GtRegionContext {
    pub fn new(polygon: &Polygon, height: usize, width: usize, expansion: f64) -> Result<Self> {
        if expansion.is_nan() || expansion <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "expansion must be positive, got {expansion}"
            )));
        }
        let mask = rasterize_region(polygon, height, width)?;
        let center = region_center(polygon);
        let candidate_radius = candidate_radius(polygon, expansion);
        Ok(Self {
            polygon: polygon.clone(),
            mask,
            center,
            candidate_radius,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_for_square() {
        let sq = Polygon::rect(2.0, 2.0, 6.0, 6.0).unwrap();
        let ctx = GtRegionContext::new(&sq, 8, 8, 1.5).unwrap();
        assert_eq!(ctx.mask.count(), 16);
        assert_eq!(ctx.center, Point::new(4.0, 4.0));
        assert!((ctx.candidate_radius - 1.5 * 8f64.sqrt()).abs() < 1e-12);
        assert!(GtRegionContext::new(&sq, 8, 8, 0.0).is_err());
    }
}
