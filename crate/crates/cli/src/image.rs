//! Binary PPM (P6) reading and writing, bit-exact both ways, plus the
//! conversions between 8-bit images and [3,H,W] float tensors.

use anyhow::{bail, Context, Result};
use samam::tensor::Tensor;
use std::fs;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major, `width * height * 3` bytes.
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            bail!("image dimensions must be positive, got {width}x{height}");
        }
        if pixels.len() != width * height * 3 {
            bail!(
                "pixel buffer holds {} bytes, expected {} for {width}x{height}",
                pixels.len(),
                width * height * 3
            );
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    /// Solid-color image, handy for tests and fixtures.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Image {
            width,
            height,
            pixels,
        }
    }

    /// Channel-planar float tensor in [0,1].
    pub fn to_tensor(&self) -> Tensor<f64> {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0f64; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    data[c * h * w + y * w + x] = self.pixels[(y * w + x) * 3 + c] as f64 / 255.0;
                }
            }
        }
        Tensor::from_vec(data, &[3, h, w]).expect("image tensor shape")
    }

    /// Quantizes a [3,H,W] tensor, clamping to [0,1] first.
    pub fn from_tensor(t: &Tensor<f64>) -> Result<Self> {
        let shape = t.shape().to_vec();
        if shape.len() != 3 || shape[0] != 3 {
            bail!("expected a [3,H,W] tensor, got {shape:?}");
        }
        let (h, w) = (shape[1], shape[2]);
        let data = t.data();
        let mut pixels = vec![0u8; w * h * 3];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let v = data[c * h * w + y * w + x].clamp(0.0, 1.0);
                    pixels[(y * w + x) * 3 + c] = (v * 255.0).round() as u8;
                }
            }
        }
        drop(data);
        Image::new(w, h, pixels)
    }
}

struct HeaderScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderScanner<'a> {
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            bail!("missing {what} in PPM header");
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("digits are ascii")
            .parse()
            .with_context(|| format!("PPM {what} out of range"))
    }
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        bail!("{}: not a binary PPM (P6) file", path.display());
    }
    let mut scan = HeaderScanner {
        bytes: &bytes,
        pos: 2,
    };
    let width = scan.number("width")?;
    let height = scan.number("height")?;
    let maxval = scan.number("maxval")?;
    if maxval != 255 {
        bail!("{}: unsupported maxval {maxval}, only 255", path.display());
    }
    // exactly one whitespace byte separates the header from the pixels
    let pos = scan.pos + 1;
    if scan.pos >= bytes.len() || !bytes[scan.pos].is_ascii_whitespace() {
        bail!("{}: malformed header terminator", path.display());
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .context("PPM dimensions overflow")?;
    let have = bytes.len() - pos;
    if have < need {
        bail!(
            "{}: truncated pixel data ({have} of {need} bytes)",
            path.display()
        );
    }
    if have > need {
        bail!(
            "{}: {} trailing bytes after pixel data",
            path.display(),
            have - need
        );
    }
    Image::new(width, height, bytes[pos..].to_vec())
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let mut out = Vec::with_capacity(img.pixels.len() + 32);
    write!(out, "P6\n{} {}\n255\n", img.width, img.height)?;
    out.extend_from_slice(&img.pixels);
    atomic_write(path, &out)
}

/// Writes via a same-directory temp file and rename so readers never see
/// a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .with_context(|| format!("bad output path {}", path.display()))?;
    let tmp = dir.unwrap_or_else(|| Path::new(".")).join(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let write = (|| -> std::io::Result<()> {
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)
    })();
    if write.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    write.with_context(|| format!("writing {}", path.display()))
}
