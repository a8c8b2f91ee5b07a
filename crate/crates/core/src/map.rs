//! Dense row-major rasters shared by the pipeline and the metrics.

use crate::error::{Error, Result};

/// An H×W grid of finite, nonnegative single-precision values.
///
/// Both the raw stacked similarity raster and the final normalized SeLo map
/// use this type. Values are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidMap(format!("empty dimensions {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(Error::LengthMismatch {
                what: "map values vs height*width",
                left: values.len(),
                right: height * width,
            });
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidMap(format!(
                "value {v} at row {}, col {} is negative or not finite",
                i / width,
                i % width
            )));
        }
        Ok(Self::from_parts_unchecked(height, width, values))
    }

    /// Uniform map.
    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 0.0)
    }

    /// Builds a map by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(height, width, values)
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, mut values: Vec<f32>) -> Self {
        // -0.0 would sort below +0.0 when compared by bit pattern.
        for v in values.iter_mut() {
            if *v == 0.0 {
                *v = 0.0;
            }
        }
        Self { height, width, values }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    /// Smallest and largest value.
    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Sum of all values, accumulated in double precision.
    pub fn total(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }
}

/// Binary raster with the same layout as [`ProbabilityMap`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub(crate) fn row_mut(&mut self, row: usize) -> &mut [bool] {
        &mut self.bits[row * self.width..(row + 1) * self.width]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Pixel-wise OR of several masks of identical dimensions.
    pub fn union<'a>(masks: impl IntoIterator<Item = &'a Mask>) -> Result<Option<Mask>> {
        let mut acc: Option<Mask> = None;
        for m in masks {
            match acc.as_mut() {
                None => acc = Some(m.clone()),
                Some(a) => {
                    if a.dims() != m.dims() {
                        return Err(Error::DimMismatch {
                            expected_h: a.height,
                            expected_w: a.width,
                            actual_h: m.height,
                            actual_w: m.width,
                        });
                    }
                    for (x, y) in a.bits.iter_mut().zip(&m.bits) {
                        *x |= *y;
                    }
                }
            }
        }
        Ok(acc)
    }
}
