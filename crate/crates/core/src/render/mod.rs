//! Heatmap overlays: the source image blended half-and-half with the
//! colormapped SeLo map, with ground-truth outlines on top.

mod colormap;

use std::path::Path;

use image::RgbImage;

pub use colormap::HOT;

use crate::annotations::Polygon;
use crate::error::{Error, Result};
use crate::map::ProbabilityMap;

/// Outline color for ground-truth polygons.
pub const OUTLINE: [u8; 3] = [0, 255, 0];

/// Colormap index of a probability: `floor(p * 255 + 0.5)`, clamped.
pub fn colormap_index(p: f32) -> usize {
    ((p.clamp(0.0, 1.0) as f64 * 255.0 + 0.5).floor() as usize).min(255)
}

pub fn overlay(source: &RgbImage, map: &ProbabilityMap, outlines: &[Polygon]) -> Result<RgbImage> {
    let (w, h) = source.dimensions();
    let (w, h) = (w as usize, h as usize);
    if (h, w) != map.dims() {
        return Err(Error::DimMismatch {
            expected_h: map.height(),
            expected_w: map.width(),
            actual_h: h,
            actual_w: w,
        });
    }
    let mut out = source.clone();
    for (px, &p) in out.pixels_mut().zip(map.values()) {
        let color = HOT[colormap_index(p)];
        for (s, c) in px.0.iter_mut().zip(color) {
            *s = ((*s as u16 + c as u16) / 2) as u8;
        }
    }
    for poly in outlines {
        draw_outline(&mut out, poly);
    }
    Ok(out)
}

/// Samples every edge at unit steps along its major axis and paints the
/// containing pixels.
fn draw_outline(img: &mut RgbImage, poly: &Polygon) {
    let (w, h) = img.dimensions();
    let clamp = |v: f64, n: u32| (v.floor().max(0.0) as u32).min(n - 1);
    for (a, b) in poly.edges() {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let steps = dx.abs().max(dy.abs()).ceil().max(1.0) as u32;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let (x, y) = (a.x + t * dx, a.y + t * dy);
            img.put_pixel(clamp(x, w), clamp(y, h), image::Rgb(OUTLINE));
        }
    }
}

/// Loads the source image, renders the overlay and writes it as PNG.
pub fn render_to_file(image_path: &Path, map: &ProbabilityMap, outlines: &[Polygon], out: &Path) -> Result<()> {
    let source = image::open(image_path)
        .map_err(|e| Error::image(image_path, e))?
        .to_rgb8();
    let img = overlay(&source, map, outlines)?;
    img.save_with_format(out, image::ImageFormat::Png)
        .map_err(|e| Error::image(out, e))
}
