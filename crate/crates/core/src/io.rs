//! Raster input and SeLo map persistence.
//!
//! Maps are written in two interchangeable forms:
//! - `.npy` (format 1.0, little-endian `<f4`, C order, shape `(H, W)`),
//!   bit-exact;
//! - 16-bit grayscale PNG with `value = round(p * 65535)`, exact to
//!   `1 / 65535`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use base64::Engine;
use image::{ImageBuffer, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::map::ProbabilityMap;

/// A source image on disk and its pixel dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterRef {
    pub path: PathBuf,
    pub height: usize,
    pub width: usize,
}

impl RasterRef {
    /// Trusts the given dimensions without touching the file.
    pub fn new(path: impl Into<PathBuf>, height: usize, width: usize) -> Self {
        Self {
            path: path.into(),
            height,
            width,
        }
    }

    /// Reads only the image header to learn its dimensions.
    pub fn probe(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let (w, h) = image::image_dimensions(&path).map_err(|e| Error::image(&path, e))?;
        Ok(Self::new(path, h as usize, w as usize))
    }

    /// Probes the file and checks it against the expected dimensions.
    pub fn probe_expecting(path: impl Into<PathBuf>, height: usize, width: usize) -> Result<Self> {
        let r = Self::probe(path)?;
        if (r.height, r.width) != (height, width) {
            return Err(Error::DimMismatch {
                expected_h: height,
                expected_w: width,
                actual_h: r.height,
                actual_w: r.width,
            });
        }
        Ok(r)
    }

    pub fn load_rgb(&self) -> Result<RgbImage> {
        let img = image::open(&self.path).map_err(|e| Error::image(&self.path, e))?;
        Ok(img.to_rgb8())
    }
}

/// Encodes a square crop of `image` as base64 PNG.
pub fn crop_png_base64(image: &RgbImage, x0: usize, y0: usize, side: usize) -> Result<String> {
    let crop = image::imageops::crop_imm(image, x0 as u32, y0 as u32, side as u32, side as u32).to_image();
    let mut bytes = Vec::new();
    crop.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::image("<crop>", e))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
}

const NPY_MAGIC: &[u8] = b"\x93NUMPY";

pub fn write_npy(map: &ProbabilityMap, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    write_npy_to(map, &mut file).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

pub fn write_npy_to(map: &ProbabilityMap, out: &mut impl Write) -> std::io::Result<()> {
    let mut header = format!(
        "{{'descr': '<f4', 'fortran_order': False, 'shape': ({}, {}), }}",
        map.height(),
        map.width()
    );
    // magic(6) + version(2) + len(2) + header + '\n' must be a multiple of 64
    let unpadded = NPY_MAGIC.len() + 4 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    out.write_all(NPY_MAGIC)?;
    out.write_all(&[1, 0])?;
    out.write_all(&(header.len() as u16).to_le_bytes())?;
    out.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(map.values().len() * 4);
    for v in map.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_npy(path: &Path) -> Result<ProbabilityMap> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_npy(&bytes)
}

pub fn parse_npy(bytes: &[u8]) -> Result<ProbabilityMap> {
    let bad = |m: &str| Error::Npy(m.to_string());
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(bad("missing magic"));
    }
    let (header_len, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (
            u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
            12,
        ),
        v => return Err(Error::Npy(format!("unsupported version {v}"))),
    };
    let header = std::str::from_utf8(
        bytes
            .get(start..start + header_len)
            .ok_or_else(|| bad("truncated header"))?,
    )
    .map_err(|_| bad("header is not UTF-8"))?;
    let descr = dict_value(header, "descr").ok_or_else(|| bad("no descr"))?;
    let fortran = dict_value(header, "fortran_order").ok_or_else(|| bad("no fortran_order"))?;
    if fortran.trim() != "False" {
        return Err(bad("fortran order is not supported"));
    }
    let shape = dict_value(header, "shape").ok_or_else(|| bad("no shape"))?;
    let dims: Vec<usize> = shape
        .trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Npy(format!("bad shape entry {s:?}"))))
        .collect::<Result<_>>()?;
    let [h, w] = dims[..] else {
        return Err(Error::Npy(format!("expected a 2-D array, got shape {dims:?}")));
    };
    let data = &bytes[start + header_len..];
    let descr = descr.trim().trim_matches('\'').trim_matches('"');
    let values: Vec<f32> = match descr {
        "<f4" => {
            if data.len() != h * w * 4 {
                return Err(bad("data length does not match shape"));
            }
            data.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        }
        "<f8" => {
            if data.len() != h * w * 8 {
                return Err(bad("data length does not match shape"));
            }
            data.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as f32)
                .collect()
        }
        other => return Err(Error::Npy(format!("unsupported dtype {other}"))),
    };
    ProbabilityMap::new(h, w, values)
}

/// Extracts the raw text of `key`'s value from a Python dict literal.
fn dict_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("'{key}':");
    let rest = &header[header.find(&pat)? + pat.len()..];
    let rest = rest.trim_start();
    if rest.starts_with('(') {
        let end = rest.find(')')?;
        Some(&rest[..=end])
    } else {
        let end = rest.find(',').or_else(|| rest.find('}'))?;
        Some(&rest[..end])
    }
}

/// Writes `round(p * 65535)` per pixel. Values are clamped to `[0, 1]`.
pub fn write_png16(map: &ProbabilityMap, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
        map.width() as u32,
        map.height() as u32,
        map.values()
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16)
            .collect(),
    )
    .expect("buffer matches dims");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}

pub fn read_png16(path: &Path) -> Result<ProbabilityMap> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_luma16();
    let (w, h) = img.dimensions();
    let values = img
        .into_raw()
        .into_iter()
        .map(|v| (v as f64 / 65535.0) as f32)
        .collect();
    ProbabilityMap::new(h as usize, w as usize, values)
}

/// Loads a map from `.npy` or `.png` based on the extension.
pub fn read_map(path: &Path) -> Result<ProbabilityMap> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("npy") => read_npy(path),
        Some("png") => read_png16(path),
        _ => Err(Error::InvalidConfig(format!(
            "unsupported map format {}; use .npy or .png",
            path.display()
        ))),
    }
}
