//! Pixel buffers passed between rendering and compositing stages, plus the
//! binary PPM writer used for all image output.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::moments::MomentVector;

/// Premultiplied RGBA image with single-precision channels. Alpha may
/// marginally exceed one before display compositing; it is clamped when the
/// image is quantized.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    width: u32,
    height: u32,
    data: Vec<[f32; 4]>,
}

impl ColorImage {
    pub fn new(width: u32, height: u32) -> Self {
        ColorImage {
            width,
            height,
            data: vec![[0.0; 4]; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.data.len()
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 4] {
        self.data[self.index(x, y)]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, value: [f32; 4]) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        (y as usize) * (self.width as usize) + x as usize
    }

    pub fn data(&self) -> &[[f32; 4]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[f32; 4]] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest absolute per-channel difference over all four channels.
    pub fn max_channel_difference(&self, other: &ColorImage) -> Result<f64> {
        check_dims(self.dimensions(), other.dimensions())?;
        let mut worst = 0.0f64;
        for (a, b) in self.data.iter().zip(&other.data) {
            for c in 0..4 {
                worst = worst.max((a[c] as f64 - b[c] as f64).abs());
            }
        }
        Ok(worst)
    }

    /// Composites over an opaque background and quantizes to 8-bit RGB.
    pub fn to_rgb8(&self, background: Background) -> Vec<[u8; 3]> {
        let bg = background.rgb();
        self.data
            .iter()
            .map(|px| {
                let alpha = px[3].clamp(0.0, 1.0);
                let mut out = [0u8; 3];
                for c in 0..3 {
                    let v = px[c] + (1.0 - alpha) * bg[c];
                    out[c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                }
                out
            })
            .collect()
    }
}

/// One [`MomentVector`] per pixel. Accumulation stays in double precision;
/// the wire format for byte accounting models single-precision scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentImage {
    width: u32,
    height: u32,
    data: Vec<MomentVector>,
}

impl MomentImage {
    pub fn new(width: u32, height: u32) -> Self {
        MomentImage {
            width,
            height,
            data: vec![MomentVector::ZERO; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel(&self, x: u32, y: u32) -> &MomentVector {
        &self.data[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn data(&self) -> &[MomentVector] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [MomentVector] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|m| m.is_finite())
    }
}

pub(crate) fn check_dims(expected: (u32, u32), found: (u32, u32)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Display background composited under the reduced image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Background {
    #[default]
    Black,
    White,
}

impl Background {
    pub fn rgb(self) -> [f32; 3] {
        match self {
            Background::Black => [0.0; 3],
            Background::White => [1.0; 3],
        }
    }
}

impl std::str::FromStr for Background {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "black" => Ok(Background::Black),
            "white" => Ok(Background::White),
            other => Err(Error::InvalidParameter(format!(
                "unknown background '{other}' (expected black or white)"
            ))),
        }
    }
}

impl std::fmt::Display for Background {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Background::Black => "black",
            Background::White => "white",
        })
    }
}

/// Binary (P6) PPM encoding of quantized RGB rows.
pub fn encode_ppm(width: u32, height: u32, rgb: &[[u8; 3]]) -> Vec<u8> {
    assert_eq!(rgb.len(), (width as usize) * (height as usize));
    let mut out = Vec::with_capacity(rgb.len() * 3 + 32);
    out.extend_from_slice(format!("P6\n{width} {height}\n255\n").as_bytes());
    for px in rgb {
        out.extend_from_slice(px);
    }
    out
}

pub fn write_ppm(path: &Path, image: &ColorImage, background: Background) -> Result<()> {
    let rgb = image.to_rgb8(background);
    let bytes = encode_ppm(image.width(), image.height(), &rgb);
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Grayscale helper for count maps: writes value/max as gray levels.
pub fn counts_to_gray_image(width: u32, height: u32, counts: &[u32]) -> ColorImage {
    assert_eq!(counts.len(), (width as usize) * (height as usize));
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f32;
    let mut img = ColorImage::new(width, height);
    for (px, &c) in img.data_mut().iter_mut().zip(counts) {
        let g = c as f32 / max;
        *px = [g, g, g, 1.0];
    }
    img
}
