use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::Mask;

/// A point in pixel space: `x` runs along columns, `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// A simple ground-truth region given as vertices in drawing order.
///
/// Construction enforces at least three vertices, no repeated consecutive
/// vertex (including the wrap from last to first) and a nonzero enclosed
/// area. A trailing vertex equal to the first is treated as an explicit
/// ring closure and dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: impl IntoIterator<Item = Point>) -> Result<Self> {
        let mut vertices: Vec<Point> = vertices.into_iter().collect();
        if vertices.len() > 3 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        check_vertices(&vertices).map_err(|reason| Error::PolygonDegenerate {
            location: "polygon".into(),
            reason,
        })?;
        Ok(Self { vertices })
    }

    pub fn from_coords(coords: &[(f64, f64)]) -> Result<Self> {
        Self::new(coords.iter().copied().map(Point::from))
    }

    /// Axis-aligned rectangle with corners `(x0, y0)` and `(x1, y1)`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::from_coords(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Enclosed area by the shoelace formula.
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect(),
        }
    }

    /// Scales about the origin. `k` must be positive.
    pub fn scaled(&self, k: f64) -> Self {
        assert!(k > 0.0, "scale factor must be positive");
        Self {
            vertices: self.vertices.iter().map(|p| Point::new(p.x * k, p.y * k)).collect(),
        }
    }

    /// Iterates edges as `(start, end)` pairs, closing the ring.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

impl TryFrom<Vec<[f64; 2]>> for Polygon {
    type Error = Error;

    fn try_from(coords: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(coords.into_iter().map(|[x, y]| Point::new(x, y)))
    }
}

impl From<Polygon> for Vec<[f64; 2]> {
    fn from(p: Polygon) -> Self {
        p.vertices.into_iter().map(|v| [v.x, v.y]).collect()
    }
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum();
    twice / 2.0
}

fn check_vertices(v: &[Point]) -> std::result::Result<(), String> {
    if v.len() < 3 {
        return Err(format!("needs at least 3 vertices, got {}", v.len()));
    }
    if let Some(p) = v.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(format!("non-finite vertex ({}, {})", p.x, p.y));
    }
    let n = v.len();
    if let Some(i) = (0..n).find(|&i| v[i] == v[(i + 1) % n]) {
        return Err(format!("vertices {i} and {} are identical", (i + 1) % n));
    }
    if signed_area(v) == 0.0 {
        return Err("enclosed area is zero".into());
    }
    Ok(())
}

/// Vertex centroid: the arithmetic mean of the vertices.
///
/// This is not the area centroid; for concave regions it may fall outside
/// the polygon.
pub fn region_center(polygon: &Polygon) -> Point {
    let m = polygon.len() as f64;
    let (sx, sy) = polygon
        .vertices()
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point::new(sx / m, sy / m)
}

/// Candidate-region radius: `expansion` times the mean vertex distance from
/// the vertex centroid.
pub fn candidate_radius(polygon: &Polygon, expansion: f64) -> f64 {
    let c = region_center(polygon);
    let mean = polygon.vertices().iter().map(|p| p.distance(c)).sum::<f64>() / polygon.len() as f64;
    expansion * mean
}

/// Rasterizes `polygon` onto a `height`×`width` grid.
///
/// Pixel `(r, c)` is set iff its center `(c + 0.5, r + 0.5)` lies inside the
/// polygon under the even-odd rule, or exactly on its boundary. Edge crossings
/// are computed in `f64`; for vertices on a dyadic grid (multiples of 1/4, say)
/// this agrees with exact arithmetic, otherwise centers within rounding
/// distance of an edge may land on either side.
pub fn rasterize_region(polygon: &Polygon, height: usize, width: usize) -> Result<Mask> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidConfig(format!(
            "raster dims must be positive, got {height}x{width}"
        )));
    }
    let mut mask = Mask::empty(height, width);
    let (_, min_y, _, max_y) = polygon.bounds();
    let row_lo = (min_y - 0.5).ceil().max(0.0);
    let row_hi = (max_y - 0.5).floor().min(height as f64 - 1.0);
    if row_lo > row_hi {
        return Err(Error::EmptyMask { height, width });
    }
    let mut crossings: Vec<f64> = Vec::with_capacity(polygon.len());
    for r in row_lo as usize..=row_hi as usize {
        let y = r as f64 + 0.5;
        crossings.clear();
        for (a, b) in polygon.edges() {
            if (a.y <= y) != (b.y <= y) {
                crossings.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        crossings.sort_by(f64::total_cmp);
        let row = mask.row_mut(r);
        for span in crossings.chunks_exact(2) {
            fill_span(row, span[0], span[1]);
        }
        // Centers lying exactly on an edge count as inside.
        for (a, b) in polygon.edges() {
            if a.y == b.y {
                if a.y == y {
                    fill_span(row, a.x.min(b.x), a.x.max(b.x));
                }
            } else if a.y.min(b.y) <= y && y <= a.y.max(b.y) {
                let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                let c = x - 0.5;
                if c.fract() == 0.0 && c >= 0.0 && c < width as f64 {
                    row[c as usize] = true;
                }
            }
        }
    }
    if mask.count() == 0 {
        return Err(Error::EmptyMask { height, width });
    }
    Ok(mask)
}

/// Sets every pixel whose center x lies in `[x0, x1]`.
fn fill_span(row: &mut [bool], x0: f64, x1: f64) {
    let lo = (x0 - 0.5).ceil().max(0.0);
    let hi = (x1 - 0.5).floor().min(row.len() as f64 - 1.0);
    if lo <= hi {
        row[lo as usize..=hi as usize].fill(true);
    }
}
