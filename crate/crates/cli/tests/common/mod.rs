//! Deterministic synthetic images shared by the command and release-gate
//! suites.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use samam_cli::image::{write_ppm, Image};

fn hash2(x: usize, y: usize) -> u64 {
    let h = (x as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((y as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    (h ^ (h >> 31)).wrapping_mul(0x94D0_49BB_1331_11EB)
}

pub fn pattern(kind: &str, width: usize, height: usize) -> Image {
    let mut px = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let rgb: [u8; 3] = match kind {
                "grad" => [
                    (255 * x / (width - 1).max(1)) as u8,
                    (255 * y / (height - 1).max(1)) as u8,
                    128,
                ],
                "checker" => {
                    let v = if (x / 6 + y / 6) % 2 == 0 { 235 } else { 20 };
                    [v, v, v]
                }
                "rings" => {
                    let dx = x as f64 - width as f64 / 2.0;
                    let dy = y as f64 - height as f64 / 2.0;
                    let d = (dx * dx + dy * dy).sqrt();
                    let v = (128.0 + 127.0 * (d / 3.0).sin()).round() as u8;
                    [v, 255 - v, 128]
                }
                "stripes" => {
                    if (x + y) % 12 < 6 {
                        [240, 200, 40]
                    } else {
                        [40, 60, 200]
                    }
                }
                "red" => [200, 30, 30],
                "blue" => [30, 40, 200],
                "green" => [30, 160, 60],
                "noise" => {
                    let h = hash2(x, y);
                    [(h >> 16) as u8, (h >> 32) as u8, (h >> 48) as u8]
                }
                other => panic!("unknown pattern {other}"),
            };
            px.extend_from_slice(&rgb);
        }
    }
    Image::new(width, height, px).unwrap()
}

pub fn write_fixture(dir: &Path, name: &str, img: &Image) -> PathBuf {
    let path = dir.join(name);
    write_ppm(&path, img).unwrap();
    path
}

/// Four content and four style images, the corpus for toy training runs.
pub fn training_corpus(root: &Path, size: usize) -> (PathBuf, PathBuf) {
    let content = root.join("content");
    let style = root.join("style");
    fs::create_dir_all(&content).unwrap();
    fs::create_dir_all(&style).unwrap();
    for kind in ["grad", "checker", "rings", "stripes"] {
        write_fixture(&content, &format!("{kind}.ppm"), &pattern(kind, size, size));
    }
    for kind in ["red", "blue", "green", "noise"] {
        write_fixture(&style, &format!("{kind}.ppm"), &pattern(kind, size, size));
    }
    (content, style)
}
