//! The four SeLo indicators: significant-area proportion (`R_su`),
//! attention shift (`R_as`), attention dispersion (`R_da`) and their weighted
//! combination (`R_mi`).

mod attention;
mod params;

use log::warn;
use serde::{Deserialize, Serialize};

pub use attention::{detect_attention, filter_to_region, find_local_maxima, AttentionPoint};
pub use params::MetricParams;

use crate::annotations::{GtRegionContext, Point, TestCase};
use crate::error::{Error, Result};
use crate::map::{Mask, ProbabilityMap};
use crate::pipeline::StageTimings;

/// Significant-area proportion of the map inside the union of `masks`.
pub fn compute_rsu(map: &ProbabilityMap, masks: &[&Mask], params: &MetricParams) -> Result<f64> {
    let union = Mask::union(masks.iter().copied())?.ok_or(Error::EmptyGt)?;
    if union.dims() != map.dims() {
        let (h, w) = map.dims();
        return Err(Error::DimMismatch {
            expected_h: h,
            expected_w: w,
            actual_h: union.height(),
            actual_w: union.width(),
        });
    }
    let (mut gt_mass, mut all_mass, mut gt_area) = (0.0f64, 0.0f64, 0usize);
    for (&v, &inside) in map.values().iter().zip(union.bits()) {
        all_mass += v as f64;
        if inside {
            gt_mass += v as f64;
            gt_area += 1;
        }
    }
    if gt_area == 0 {
        return Err(Error::EmptyGt);
    }
    let total_area = map.values().len();
    if gt_area == total_area {
        warn!("ground truth covers the whole image; R_su is 0 by definition");
        return Ok(0.0);
    }
    let t_l = gt_mass / ((all_mass - gt_mass).max(0.0) + params.eps);
    let t_r = (total_area - gt_area) as f64 / gt_area as f64;
    if !t_l.is_finite() {
        // all mass inside the GT with eps = 0
        return Ok(1.0);
    }
    Ok(1.0 - (-params.alpha * t_l * t_r).exp())
}

/// Mean attention-point distance to the region center relative to the
/// candidate radius, clipped to `[0, 1]`; 1 when there are no points.
pub fn region_offset(points: &[AttentionPoint], context: &GtRegionContext) -> f64 {
    if points.is_empty() {
        return 1.0;
    }
    let mean = points.iter().map(|p| p.distance_to(context.center)).sum::<f64>() / points.len() as f64;
    (mean / context.candidate_radius).clamp(0.0, 1.0)
}

/// Probability divergence distance of two or more points around their own
/// mean, relative to the candidate radius. `None` below two points.
pub fn region_divergence(points: &[AttentionPoint], context: &GtRegionContext) -> Option<f64> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n as f64;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n as f64;
    let spread: f64 = points.iter().map(|p| p.distance_to(Point::new(cx, cy))).sum();
    Some(spread / (n as f64 * context.candidate_radius))
}

/// Per-region dispersion score.
pub fn region_rda(points: &[AttentionPoint], context: &GtRegionContext, eta: f64) -> f64 {
    match points.len() {
        0 => 0.0,
        1 => 1.0,
        n => {
            let d_pd = region_divergence(points, context).expect("two or more points");
            ((1.0 - d_pd) + (-eta * (n as f64 + 2.0)).exp()) / 2.0
        }
    }
}

fn check_regions(points: &[Vec<AttentionPoint>], contexts: &[GtRegionContext]) -> Result<()> {
    if contexts.is_empty() {
        return Err(Error::EmptyGt);
    }
    if points.len() != contexts.len() {
        return Err(Error::LengthMismatch {
            what: "attention lists vs regions",
            left: points.len(),
            right: contexts.len(),
        });
    }
    Ok(())
}

pub fn compute_ras(
    per_region: &[Vec<AttentionPoint>],
    contexts: &[GtRegionContext],
    params: &MetricParams,
) -> Result<f64> {
    check_regions(per_region, contexts)?;
    let denom = params.beta.exp() - 1.0;
    let sum: f64 = per_region
        .iter()
        .zip(contexts)
        .map(|(pts, ctx)| ((region_offset(pts, ctx) * params.beta).exp() - 1.0) / denom)
        .sum();
    Ok(sum / contexts.len() as f64)
}

pub fn compute_rda(
    per_region: &[Vec<AttentionPoint>],
    contexts: &[GtRegionContext],
    params: &MetricParams,
) -> Result<f64> {
    check_regions(per_region, contexts)?;
    let sum: f64 = per_region
        .iter()
        .zip(contexts)
        .map(|(pts, ctx)| region_rda(pts, ctx, params.eta))
        .sum();
    Ok(sum / contexts.len() as f64)
}

pub fn compute_rmi(r_su: f64, r_as: f64, r_da: f64, params: &MetricParams) -> f64 {
    params.w_su * r_su + params.w_as * (1.0 - r_as) + params.w_da * r_da
}

/// Diagnostics for one ground-truth region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDiagnostics {
    pub center: Point,
    pub candidate_radius: f64,
    /// Number of attention points in the candidate disk.
    pub attention_count: usize,
    pub offset: f64,
    /// Present only with two or more attention points.
    pub divergence: Option<f64>,
    pub points: Vec<AttentionPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Indicators {
    pub r_su: f64,
    pub r_as: f64,
    pub r_da: f64,
    pub r_mi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeLoScores {
    pub case_id: String,
    #[serde(flatten)]
    pub indicators: Indicators,
    pub regions: Vec<RegionDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<StageTimings>,
}

/// Scores one map against one test case.
pub fn evaluate_case(map: &ProbabilityMap, case: &TestCase, params: &MetricParams) -> Result<SeLoScores> {
    params.validate()?;
    let (_, hi) = map.min_max();
    if hi > 1.0 {
        return Err(Error::InvalidMap(format!(
            "map is not normalized: maximum {hi} exceeds 1"
        )));
    }
    if case.regions.is_empty() {
        return Err(Error::EmptyGt);
    }
    let (h, w) = map.dims();
    let contexts = case
        .regions
        .iter()
        .map(|p| GtRegionContext::new(p, h, w, params.expansion))
        .collect::<Result<Vec<_>>>()?;

    let masks: Vec<&Mask> = contexts.iter().map(|c| &c.mask).collect();
    let r_su = compute_rsu(map, &masks, params)?;

    let maxima = find_local_maxima(map, params.nms_window, params.rho);
    let per_region: Vec<Vec<AttentionPoint>> = contexts.iter().map(|c| filter_to_region(&maxima, c)).collect();
    let r_as = compute_ras(&per_region, &contexts, params)?;
    let r_da = compute_rda(&per_region, &contexts, params)?;
    let r_mi = compute_rmi(r_su, r_as, r_da, params);

    let regions = contexts
        .iter()
        .zip(per_region)
        .map(|(ctx, points)| RegionDiagnostics {
            center: ctx.center,
            candidate_radius: ctx.candidate_radius,
            attention_count: points.len(),
            offset: region_offset(&points, ctx),
            divergence: region_divergence(&points, ctx),
            points,
        })
        .collect();

    Ok(SeLoScores {
        case_id: case.case_id.clone(),
        indicators: Indicators { r_su, r_as, r_da, r_mi },
        regions,
        timings: None,
    })
}

/// Testset-level summary: unweighted mean of each indicator over cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub count: usize,
    pub mean: Indicators,
    pub per_case: Vec<(String, Indicators)>,
}

pub fn aggregate(scores: &[SeLoScores]) -> Result<AggregateSummary> {
    if scores.is_empty() {
        return Err(Error::EmptyList);
    }
    let n = scores.len() as f64;
    let mean_of = |f: fn(&Indicators) -> f64| scores.iter().map(|s| f(&s.indicators)).sum::<f64>() / n;
    Ok(AggregateSummary {
        count: scores.len(),
        mean: Indicators {
            r_su: mean_of(|i| i.r_su),
            r_as: mean_of(|i| i.r_as),
            r_da: mean_of(|i| i.r_da),
            r_mi: mean_of(|i| i.r_mi),
        },
        per_case: scores.iter().map(|s| (s.case_id.clone(), s.indicators)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::Polygon;
    use rand::{Rng, SeedableRng};

    fn square_ctx(cx: f64, cy: f64, half: f64, h: usize, w: usize) -> GtRegionContext {
        let p = Polygon::rect(cx - half, cy - half, cx + half, cy + half).unwrap();
        GtRegionContext::new(&p, h, w, 1.5).unwrap()
    }

    fn pt(x: f64, y: f64) -> AttentionPoint {
        AttentionPoint { x, y, prob: 1.0 }
    }

    #[test]
    fn uniform_map_calibration() {
        let p = MetricParams::default();
        let expected = 1.0 - (-0.694f64).exp();
        for (h, w, v) in [(16, 16, 1.0f32), (40, 25, 0.3)] {
            let map = ProbabilityMap::filled(h, w, v).unwrap();
            let ctx = square_ctx(8.0, 8.0, 4.0, h, w);
            let r = compute_rsu(&map, &[&ctx.mask], &p).unwrap();
            assert!((r - expected).abs() < 1e-6, "{r}");
        }
    }

    #[test]
    fn rsu_matches_double_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let p = MetricParams::default();
        let map = ProbabilityMap::from_fn(8, 8, |_, _| rng.random::<f32>()).unwrap();
        let ctx = square_ctx(4.0, 4.0, 2.0, 8, 8);
        let (mut inside, mut outside) = (0.0f64, 0.0f64);
        for r in 0..8 {
            for c in 0..8 {
                if (2..6).contains(&r) && (2..6).contains(&c) {
                    inside += map.get(r, c) as f64;
                } else {
                    outside += map.get(r, c) as f64;
                }
            }
        }
        let expected = 1.0 - (-0.694 * inside / (outside + 1e-7) * (48.0 / 16.0)).exp();
        let got = compute_rsu(&map, &[&ctx.mask], &p).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn rsu_all_mass_inside() {
        let map =
            ProbabilityMap::from_fn(8, 8, |r, c| ((2..6).contains(&r) && (2..6).contains(&c)) as u8 as f32).unwrap();
        let ctx = square_ctx(4.0, 4.0, 2.0, 8, 8);
        let r = compute_rsu(&map, &[&ctx.mask], &MetricParams::default()).unwrap();
        assert!(r > 1.0 - 1e-12);
        let zero_eps = MetricParams {
            eps: 0.0,
            ..Default::default()
        };
        assert_eq!(compute_rsu(&map, &[&ctx.mask], &zero_eps).unwrap(), 1.0);
    }

    #[test]
    fn rsu_overlapping_masks_are_unioned() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let map = ProbabilityMap::from_fn(8, 8, |_, _| rng.random::<f32>()).unwrap();
        let a = square_ctx(4.0, 4.0, 2.0, 8, 8);
        let p = MetricParams::default();
        assert_eq!(
            compute_rsu(&map, &[&a.mask, &a.mask], &p).unwrap(),
            compute_rsu(&map, &[&a.mask], &p).unwrap()
        );
    }

    #[test]
    fn rsu_edge_cases() {
        let map = ProbabilityMap::filled(4, 4, 0.5).unwrap();
        let p = MetricParams::default();
        let full = Mask::from_fn(4, 4, |_, _| true);
        assert_eq!(compute_rsu(&map, &[&full], &p).unwrap(), 0.0);
        assert!(matches!(compute_rsu(&map, &[], &p), Err(Error::EmptyGt)));
        let empty = Mask::empty(4, 4);
        assert!(matches!(compute_rsu(&map, &[&empty], &p), Err(Error::EmptyGt)));
        // zero map, nonempty GT: no mass anywhere
        let zero = ProbabilityMap::zeros(4, 4).unwrap();
        let sq = Mask::from_fn(4, 4, |r, _| r == 0);
        assert_eq!(compute_rsu(&zero, &[&sq], &p).unwrap(), 0.0);
    }

    #[test]
    fn rsu_moves_mass_monotonically() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let p = MetricParams::default();
        let ctx = square_ctx(4.0, 4.0, 2.0, 8, 8);
        let mut values: Vec<f32> = (0..64).map(|_| rng.random::<f32>() * 0.5 + 0.25).collect();
        let mut last = compute_rsu(&ProbabilityMap::new(8, 8, values.clone()).unwrap(), &[&ctx.mask], &p).unwrap();
        for _ in 0..10 {
            // (0, 0) is outside, (3, 3) inside
            values[0] -= 0.02;
            values[3 * 8 + 3] += 0.02;
            let next = compute_rsu(&ProbabilityMap::new(8, 8, values.clone()).unwrap(), &[&ctx.mask], &p).unwrap();
            assert!(next > last);
            last = next;
        }
    }

    #[test]
    fn rsu_scale_invariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let ctx = square_ctx(8.0, 8.0, 4.0, 16, 16);
        let base: Vec<f32> = (0..256).map(|_| rng.random::<f32>()).collect();
        let map = ProbabilityMap::new(16, 16, base.clone()).unwrap();
        let half = ProbabilityMap::new(16, 16, base.iter().map(|v| v * 0.5).collect()).unwrap();
        let zero_eps = MetricParams {
            eps: 0.0,
            ..Default::default()
        };
        let a = compute_rsu(&map, &[&ctx.mask], &zero_eps).unwrap();
        let b = compute_rsu(&half, &[&ctx.mask], &zero_eps).unwrap();
        assert!((a - b).abs() < 1e-12);
        let p = MetricParams::default();
        let a = compute_rsu(&map, &[&ctx.mask], &p).unwrap();
        let b = compute_rsu(&half, &[&ctx.mask], &p).unwrap();
        assert!((a - b).abs() < 1e-4);
    }

    #[test]
    fn ras_examples() {
        let p = MetricParams::default();
        let ctx = square_ctx(10.0, 10.0, 4.0, 20, 20);
        let r = ctx.candidate_radius;
        assert_eq!(
            compute_ras(&[vec![pt(10.0, 10.0)]], std::slice::from_ref(&ctx), &p).unwrap(),
            0.0
        );
        assert_eq!(
            compute_ras(&[vec![pt(10.0 + r, 10.0)]], std::slice::from_ref(&ctx), &p).unwrap(),
            1.0
        );
        assert_eq!(compute_ras(&[vec![]], std::slice::from_ref(&ctx), &p).unwrap(), 1.0);
        let two = vec![pt(10.0 + 0.2 * r, 10.0), pt(10.0, 10.0 - 0.6 * r)];
        let expected = (1.2f64.exp() - 1.0) / (3f64.exp() - 1.0);
        assert!((compute_ras(&[two], std::slice::from_ref(&ctx), &p).unwrap() - expected).abs() < 1e-12);
        // far outside is clipped to the worst value
        assert_eq!(compute_ras(&[vec![pt(10.0 + 3.0 * r, 10.0)]], &[ctx], &p).unwrap(), 1.0);
    }

    #[test]
    fn rda_examples() {
        let p = MetricParams::default();
        let ctx = square_ctx(10.0, 10.0, 4.0, 20, 20);
        assert_eq!(
            compute_rda(&[vec![pt(3.0, 4.0)]], std::slice::from_ref(&ctx), &p).unwrap(),
            1.0
        );
        assert_eq!(compute_rda(&[vec![]], std::slice::from_ref(&ctx), &p).unwrap(), 0.0);
        let coincident = vec![pt(9.0, 9.0), pt(9.0, 9.0)];
        let got = compute_rda(&[coincident], std::slice::from_ref(&ctx), &p).unwrap();
        assert!((got - (1.0 + (-2.0f64).exp()) / 2.0).abs() < 1e-12);
        assert!((got - 0.567667641618306).abs() < 1e-12);
        // mixed regions are scored separately and averaged
        let got = compute_rda(&[vec![pt(1.0, 1.0)], vec![]], &[ctx.clone(), ctx], &p).unwrap();
        assert_eq!(got, 0.5);
    }

    #[test]
    fn divergence_of_spread_points() {
        let ctx = square_ctx(10.0, 10.0, 4.0, 20, 20);
        let r = ctx.candidate_radius;
        let pts = [pt(8.0, 10.0), pt(12.0, 10.0)];
        assert!((region_divergence(&pts, &ctx).unwrap() - 2.0 / r).abs() < 1e-12);
        assert_eq!(region_divergence(&pts[..1], &ctx), None);
    }

    #[test]
    fn rmi_examples() {
        let p = MetricParams::default();
        assert!((compute_rmi(0.6920, 0.3323, 0.6667, &p) - 0.6772).abs() < 5e-4);
        assert!((compute_rmi(0.6682, 0.2694, 0.7072, &p) - 0.6998).abs() < 5e-4);
        assert!((compute_rmi(1.0, 0.0, 1.0, &p) - 1.0).abs() < 1e-15);
        assert_eq!(compute_rmi(0.0, 1.0, 0.0, &p), 0.0);
    }

    fn case(regions: Vec<Polygon>) -> TestCase {
        TestCase {
            case_id: "c".into(),
            query: "a test query".into(),
            regions,
        }
    }

    #[test]
    fn degenerate_map_scores() {
        let map = ProbabilityMap::zeros(32, 32).unwrap();
        let c = case(vec![Polygon::rect(4.0, 4.0, 12.0, 12.0).unwrap()]);
        let s = evaluate_case(&map, &c, &MetricParams::default()).unwrap();
        assert_eq!(
            s.indicators,
            Indicators {
                r_su: 0.0,
                r_as: 1.0,
                r_da: 0.0,
                r_mi: 0.0
            }
        );
        assert_eq!(s.regions[0].attention_count, 0);
    }

    #[test]
    fn gaussian_at_center_scores_well() {
        let map = ProbabilityMap::from_fn(64, 64, |r, c| {
            let d2 = (r as f32 + 0.5 - 20.0).powi(2) + (c as f32 + 0.5 - 30.0).powi(2);
            (-d2 / 50.0).exp()
        })
        .unwrap();
        let c = case(vec![Polygon::rect(24.0, 14.0, 36.0, 26.0).unwrap()]);
        let s = evaluate_case(&map, &c, &MetricParams::default()).unwrap();
        assert_eq!(s.indicators.r_da, 1.0);
        assert!(s.indicators.r_as <= 0.05, "{s:?}");
        assert_eq!(s.regions[0].points.len(), 1);
    }

    #[test]
    fn rejects_unnormalized_map() {
        let map = ProbabilityMap::filled(8, 8, 2.0).unwrap();
        let c = case(vec![Polygon::rect(0.0, 0.0, 4.0, 4.0).unwrap()]);
        assert!(matches!(
            evaluate_case(&map, &c, &MetricParams::default()),
            Err(Error::InvalidMap(_))
        ));
    }

    #[test]
    fn aggregate_means() {
        let mk = |id: &str, r_mi: f64| SeLoScores {
            case_id: id.into(),
            indicators: Indicators {
                r_su: r_mi,
                r_as: 0.0,
                r_da: 0.0,
                r_mi,
            },
            regions: vec![],
            timings: None,
        };
        let a = aggregate(&[mk("a", 0.4), mk("b", 0.6)]).unwrap();
        assert!((a.mean.r_mi - 0.5).abs() < 1e-15);
        assert_eq!(a.count, 2);
        let one = aggregate(&[mk("a", 0.3)]).unwrap();
        assert_eq!(one.mean, mk("a", 0.3).indicators);
        assert!(matches!(aggregate(&[]), Err(Error::EmptyList)));
    }
}
