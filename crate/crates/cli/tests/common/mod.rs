#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::RgbImage;

pub const SELO: &str = env!("CARGO_BIN_EXE_selo");
pub const STUB: &str = env!("CARGO_BIN_EXE_selo-stub-scorer");

pub const MANIFEST: &str = r#"{
  "version": 1,
  "images": [
    {"file": "a.png", "height": 200, "width": 240, "cases": [
      {"id": "a-1", "query": "a grey roof", "regions": [[[20, 20], [80, 20], [80, 70], [20, 70]]]},
      {"id": "a-2", "query": "the pond", "regions": [[[150, 100], [220, 120], [190, 180]]]}
    ]},
    {"file": "b.png", "height": 160, "width": 160, "cases": [
      {"id": "b-1", "query": "two sheds", "regions": [[[10, 10], [50, 10], [50, 40], [10, 40]], [[100, 100], [140, 100], [140, 150], [100, 150]]]}
    ]}
  ]
}"#;

pub fn write_image(path: &Path, width: u32, height: u32) {
    RgbImage::from_fn(width, height, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, 90]))
        .save(path)
        .unwrap();
}

/// Two images, three cases; returns the manifest path.
pub fn fixture(dir: &Path) -> PathBuf {
    write_image(&dir.join("a.png"), 240, 200);
    write_image(&dir.join("b.png"), 160, 160);
    let path = dir.join("manifest.json");
    std::fs::write(&path, MANIFEST).unwrap();
    path
}

pub fn selo(args: &[&str]) -> Output {
    Command::new(SELO)
        .args(args)
        .env("SELO_LOG", "error")
        .output()
        .expect("selo runs")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// The stub scorer's hash score, computed independently of the binary.
pub fn stub_hash(query: &str, x0: usize, y0: usize, side: usize) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in format!("{query}\0{x0}\0{y0}\0{side}").bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    (h % 1_000_000) as f64 / 1e6
}
