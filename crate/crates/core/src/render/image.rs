use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Linear-RGB float image with per-pixel accumulated alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    rgb: Vec<[f64; 3]>,
    alpha: Vec<f64>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            rgb: vec![[0.0; 3]; n],
            alpha: vec![0.0; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        self.rgb[self.offset(x, y)]
    }

    pub fn alpha(&self, x: u32, y: u32) -> f64 {
        self.alpha[self.offset(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [f64; 3], alpha: f64) {
        let i = self.offset(x, y);
        self.rgb[i] = rgb;
        self.alpha[i] = alpha;
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.rgb
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    /// Largest per-channel absolute difference. Panics on size mismatch.
    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.rgb
            .iter()
            .zip(&other.rgb)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max)
    }

    /// 8-bit sRGB bytes, row-major RGB.
    pub fn to_srgb8(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .flat_map(|p| p.iter().map(|&c| encode_srgb(c)))
            .collect()
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), self.width, self.height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_source_srgb(png::SrgbRenderingIntent::Perceptual);
        let png_err = |e: png::EncodingError| Error::Format(format!("png encoding of {}: {e}", path.display()));
        let mut writer = encoder.write_header().map_err(png_err)?;
        writer.write_image_data(&self.to_srgb8()).map_err(png_err)?;
        writer.finish().map_err(png_err)
    }

    /// Binary P6 PPM, sRGB encoded.
    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(self.to_srgb8());
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}

pub fn encode_srgb(linear: f64) -> u8 {
    let c = linear.clamp(0.0, 1.0);
    let s = if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    };
    (s * 255.0).round().clamp(0.0, 255.0) as u8
}
