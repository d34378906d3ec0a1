use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// RGB image, row-major, three channels per pixel.
///
/// Values are unclamped; clamping happens only on export.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T: Real> {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::Size(format!("{width}x{height} image needs {} values, got {}", width * height * 3, pixels.len())));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [T; 3]) -> Self {
        let pixels = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, pixels }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [T; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [T; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_size(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Binary PPM (P6, maxval 255): channels clamped to [0, 1], then rounded half up.
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|&v| quantize(v.to_f64_lossy())));
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_ppm_bytes())?;
        Ok(())
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = BufReader::new(bytes);
        let mut tokens: Vec<String> = Vec::new();
        // header: magic, width, height, maxval; '#' comments allowed
        while tokens.len() < 4 {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::Parse("truncated PPM header".into()));
            }
            let line = line.split('#').next().unwrap_or("");
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        if tokens[0] != "P6" {
            return Err(Error::Parse(format!("unsupported PPM magic {}", tokens[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("PPM header field {s}: {e}")));
        let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval != 255 {
            return Err(Error::Parse(format!("PPM maxval {maxval} unsupported")));
        }
        let mut raw = Vec::with_capacity(w * h * 3);
        reader.read_to_end(&mut raw)?;
        if raw.len() < w * h * 3 {
            return Err(Error::Parse("truncated PPM data".into()));
        }
        let pixels = raw[..w * h * 3].iter().map(|&b| T::of(f64::from(b) / 255.0)).collect();
        Self::new(w, h, pixels)
    }

    pub fn read_ppm(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_ppm_bytes(&std::fs::read(path)?)
    }
}

fn quantize(v: f64) -> u8 {
    let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (c * 255.0 + 0.5).floor() as u8
}
