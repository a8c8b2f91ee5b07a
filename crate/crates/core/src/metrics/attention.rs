use serde::{Deserialize, Serialize};

use crate::annotations::GtRegionContext;
use crate::map::ProbabilityMap;

use super::MetricParams;

/// A local maximum of the map, in pixel coordinates (pixel centers sit at
/// half-integers).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionPoint {
    pub x: f64,
    pub y: f64,
    pub prob: f64,
}

impl AttentionPoint {
    pub fn distance_to(&self, p: crate::annotations::Point) -> f64 {
        (self.x - p.x).hypot(self.y - p.y)
    }
}

/// Sliding maximum over a `window`-wide neighborhood along each row, with the
/// neighborhood truncated at the borders.
fn sliding_max_rows(src: &[f32], height: usize, width: usize, half: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; src.len()];
    let mut deque = std::collections::VecDeque::with_capacity(2 * half + 1);
    for r in 0..height {
        let row = &src[r * width..(r + 1) * width];
        let dst = &mut out[r * width..(r + 1) * width];
        deque.clear();
        let mut next = 0;
        for (c, d) in dst.iter_mut().enumerate() {
            let hi = (c + half).min(width - 1);
            while next <= hi {
                while deque.back().is_some_and(|&j: &usize| row[j] <= row[next]) {
                    deque.pop_back();
                }
                deque.push_back(next);
                next += 1;
            }
            while deque.front().is_some_and(|&j| j + half < c) {
                deque.pop_front();
            }
            *d = row[*deque.front().unwrap()];
        }
    }
    out
}

fn transpose(src: &[f32], height: usize, width: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; src.len()];
    for r in 0..height {
        for c in 0..width {
            out[c * height + r] = src[r * width + c];
        }
    }
    out
}

/// Maximum of each pixel's `window × window` neighborhood.
pub(crate) fn window_max(map: &ProbabilityMap, window: usize) -> Vec<f32> {
    let (h, w) = map.dims();
    let half = window / 2;
    let rows = sliding_max_rows(map.values(), h, w, half);
    let cols = sliding_max_rows(&transpose(&rows, h, w), w, h, half);
    transpose(&cols, w, h)
}

/// All local maxima with probability above `threshold`.
///
/// A pixel is a candidate when it equals the maximum of its neighborhood.
/// Candidates are grouped with their 8-connected equal-valued neighbors; a
/// group counts as one peak only if every member is a candidate, and the peak
/// sits at the group's centroid. Points come out in row-major order of each
/// group's first pixel.
pub fn find_local_maxima(map: &ProbabilityMap, window: usize, threshold: f64) -> Vec<AttentionPoint> {
    let (h, w) = map.dims();
    if h == 0 || w == 0 {
        return Vec::new();
    }
    let values = map.values();
    let wmax = window_max(map, window.max(1));
    let mut visited = vec![false; h * w];
    let mut stack = Vec::new();
    let mut points = Vec::new();

    for start in 0..h * w {
        let v = values[start];
        if visited[start] || v as f64 <= threshold || v < wmax[start] {
            continue;
        }
        let (mut sum_r, mut sum_c, mut count) = (0u64, 0u64, 0u64);
        let mut all_max = true;
        visited[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            sum_r += r as u64;
            sum_c += c as u64;
            count += 1;
            all_max &= values[i] >= wmax[i];
            for nr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for nc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    let j = nr * w + nc;
                    if !visited[j] && values[j] == v {
                        visited[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if all_max {
            points.push(AttentionPoint {
                x: sum_c as f64 / count as f64 + 0.5,
                y: sum_r as f64 / count as f64 + 0.5,
                prob: v as f64,
            });
        }
    }
    points
}

/// Keeps the points inside the region's closed candidate disk.
pub fn filter_to_region(points: &[AttentionPoint], context: &GtRegionContext) -> Vec<AttentionPoint> {
    points
        .iter()
        .filter(|p| p.distance_to(context.center) <= context.candidate_radius)
        .copied()
        .collect()
}

/// Attention points of one region: local maxima above `rho` inside the
/// candidate disk.
pub fn detect_attention(map: &ProbabilityMap, context: &GtRegionContext, params: &MetricParams) -> Vec<AttentionPoint> {
    let all = find_local_maxima(map, params.nms_window, params.rho);
    filter_to_region(&all, context)
}
