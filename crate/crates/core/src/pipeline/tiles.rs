use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One square sliding-window slice of the source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tile {
    pub x0: usize,
    pub y0: usize,
    pub side: usize,
    /// Index into [`PipelineConfig::scales`].
    pub scale_index: usize,
    /// Index into [`PipelineConfig::offsets`].
    pub offset_index: usize,
}

impl Tile {
    pub fn x1(&self) -> usize {
        self.x0 + self.side
    }

    pub fn y1(&self) -> usize {
        self.y0 + self.side
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.y0 && row < self.y1() && col >= self.x0 && col < self.x1()
    }

    /// Geometric center in pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        let h = self.side as f64 / 2.0;
        (self.x0 as f64 + h, self.y0 as f64 + h)
    }

    pub fn area(&self) -> usize {
        self.side * self.side
    }
}

/// Median kernel side: either explicit (odd) or derived from the image size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MedianKernel {
    #[default]
    Auto,
    Fixed(usize),
}

impl MedianKernel {
    /// Resolves the kernel for an image. `Auto` is `0.02 * min(h, w)`
    /// rounded to the nearest odd integer, at least 3, and never larger than
    /// the image.
    pub fn resolve(self, height: usize, width: usize) -> usize {
        let min_dim = height.min(width);
        match self {
            MedianKernel::Fixed(k) => k,
            MedianKernel::Auto => {
                let target = 0.02 * min_dim as f64;
                let k = (2.0 * ((target - 1.0) / 2.0).round() + 1.0).max(3.0) as usize;
                let cap = if min_dim % 2 == 1 { min_dim } else { min_dim - 1 };
                k.min(cap.max(1))
            }
        }
    }
}

impl fmt::Display for MedianKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MedianKernel::Auto => f.write_str("auto"),
            MedianKernel::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for MedianKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(MedianKernel::Auto);
        }
        let k: usize = s.trim().parse().map_err(|_| {
            Error::InvalidConfig(format!("median kernel must be \"auto\" or an odd integer, got {s:?}"))
        })?;
        Ok(MedianKernel::Fixed(k))
    }
}

impl Serialize for MedianKernel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MedianKernel::Auto => s.serialize_str("auto"),
            MedianKernel::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for MedianKernel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(usize),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(k) => Ok(MedianKernel::Fixed(k)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Tile side lengths in pixels.
    pub scales: Vec<u32>,
    /// Grid shifts as fractions of the tile side, each in `[0, 1)`.
    pub offsets: Vec<f64>,
    pub median_kernel: MedianKernel,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scales: vec![256, 512, 768],
            offsets: vec![0.0, 0.5],
            median_kernel: MedianKernel::Auto,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::InvalidConfig("at least one scale is required".into()));
        }
        if self.scales.contains(&0) {
            return Err(Error::InvalidConfig("scales must be positive".into()));
        }
        if let Some(f) = self.offsets.iter().find(|f| !(0.0..1.0).contains(*f)) {
            return Err(Error::InvalidConfig(format!("offset {f} is outside [0, 1)")));
        }
        if !self.offsets.contains(&0.0) {
            return Err(Error::InvalidConfig("offsets must include 0 for full coverage".into()));
        }
        if let MedianKernel::Fixed(k) = self.median_kernel {
            if k == 0 || k % 2 == 0 {
                return Err(Error::EvenKernel(k));
            }
        }
        Ok(())
    }
}

/// Result of tile planning.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan {
    pub tiles: Vec<Tile>,
    /// Scales larger than the image's shorter side.
    pub skipped_scales: Vec<u32>,
}

impl TilePlan {
    /// Number of scales that produced tiles.
    pub fn applicable_scales(&self) -> usize {
        let set: HashSet<usize> = self.tiles.iter().map(|t| t.scale_index).collect();
        set.len()
    }
}

/// Plans the multi-scale, multi-offset tile grid over an image.
///
/// At offset 0 the last row and column of tiles are clamped against the far
/// image edge so every pixel is covered; at nonzero offsets only tiles that
/// fit entirely are kept. Tiles with identical `(x0, y0, side)` are emitted
/// once, keeping the first scale/offset that produced them.
pub fn plan_tiles(height: usize, width: usize, config: &PipelineConfig) -> Result<TilePlan> {
    config.validate()?;
    let min_dim = height.min(width);
    let mut seen = HashSet::new();
    let mut tiles = Vec::new();
    let mut skipped_scales = Vec::new();
    for (scale_index, &scale) in config.scales.iter().enumerate() {
        let side = scale as usize;
        if side > min_dim {
            log::warn!("scale {side} skipped: image is {height}x{width}");
            skipped_scales.push(scale);
            continue;
        }
        for (offset_index, &offset) in config.offsets.iter().enumerate() {
            let start = (offset * side as f64).floor() as usize;
            let clamp = offset == 0.0;
            let ys = grid_origins(height, side, start, clamp);
            let xs = grid_origins(width, side, start, clamp);
            for &y0 in &ys {
                for &x0 in &xs {
                    if seen.insert((x0, y0, side)) {
                        tiles.push(Tile {
                            x0,
                            y0,
                            side,
                            scale_index,
                            offset_index,
                        });
                    }
                }
            }
        }
    }
    if tiles.is_empty() {
        return Err(Error::NoApplicableScale {
            height,
            width,
            scales: config.scales.clone(),
        });
    }
    Ok(TilePlan { tiles, skipped_scales })
}

fn grid_origins(dim: usize, side: usize, start: usize, clamp: bool) -> Vec<usize> {
    let mut out = Vec::new();
    let mut o = start;
    while o + side <= dim {
        out.push(o);
        o += side;
    }
    if clamp && out.last().is_none_or(|&last| last + side < dim) {
        out.push(dim - side);
    }
    out
}
