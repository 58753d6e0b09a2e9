//! Image quality metrics.
//!
//! All comparisons run on the 8-bit RGB frames a viewer would actually see,
//! after compositing over a background. SSIM uses the standard 11x11
//! Gaussian window (sigma 1.5) on valid positions only, averaged over the
//! three channels.

use crate::compositor::SegmentCensus;
use crate::error::{Error, Result};
use crate::image::{check_dims, counts_to_gray_image, Background, ColorImage};

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const DYNAMIC_RANGE: f64 = 255.0;

/// How close two composited frames are.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    pub ssim: f64,
    pub mse: f64,
    /// dB, infinite for identical frames.
    pub psnr: f64,
    /// Largest channel difference on the 0..255 scale.
    pub max_abs_diff: f64,
}

pub fn compare_images(a: &ColorImage, b: &ColorImage, background: Background) -> Result<QualityReport> {
    check_dims(a.dimensions(), b.dimensions())?;
    let (width, height) = a.dimensions();
    if (width as usize) < SSIM_WINDOW || (height as usize) < SSIM_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "{width}x{height} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} comparison window"
        )));
    }
    let a8 = a.to_rgb8(background);
    let b8 = b.to_rgb8(background);

    let mut square_error = 0.0f64;
    let mut max_abs_diff = 0.0f64;
    for (pa, pb) in a8.iter().zip(&b8) {
        for c in 0..3 {
            let diff = pa[c] as f64 - pb[c] as f64;
            square_error += diff * diff;
            max_abs_diff = max_abs_diff.max(diff.abs());
        }
    }
    let mse = square_error / (a8.len() as f64 * 3.0);
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / mse).log10()
    };

    let mut ssim_sum = 0.0f64;
    for channel in 0..3 {
        let plane_a: Vec<f64> = a8.iter().map(|p| p[channel] as f64).collect();
        let plane_b: Vec<f64> = b8.iter().map(|p| p[channel] as f64).collect();
        ssim_sum += ssim_plane(&plane_a, &plane_b, width as usize, height as usize);
    }

    Ok(QualityReport {
        ssim: ssim_sum / 3.0,
        mse,
        psnr,
        max_abs_diff,
    })
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut kernel = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, k) in kernel.iter_mut().enumerate() {
        let d = i as f64 - center;
        *k = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *k;
    }
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

/// Separable Gaussian blur keeping only fully covered positions.
fn blur_valid(plane: &[f64], width: usize, height: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let out_w = width - SSIM_WINDOW + 1;
    let out_h = height - SSIM_WINDOW + 1;
    let mut horizontal = vec![0.0f64; out_w * height];
    for y in 0..height {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                acc += plane[y * width + x + i] * k;
            }
            horizontal[y * out_w + x] = acc;
        }
    }
    let mut out = vec![0.0f64; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                acc += horizontal[(y + i) * out_w + x] * k;
            }
            out[y * out_w + x] = acc;
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], width: usize, height: usize) -> f64 {
    let kernel = gaussian_kernel();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();

    let mu_a = blur_valid(a, width, height, &kernel);
    let mu_b = blur_valid(b, width, height, &kernel);
    let e_aa = blur_valid(&aa, width, height, &kernel);
    let e_bb = blur_valid(&bb, width, height, &kernel);
    let e_ab = blur_valid(&ab, width, height, &kernel);

    let c1 = (SSIM_K1 * DYNAMIC_RANGE) * (SSIM_K1 * DYNAMIC_RANGE);
    let c2 = (SSIM_K2 * DYNAMIC_RANGE) * (SSIM_K2 * DYNAMIC_RANGE);

    let mut sum = 0.0f64;
    for i in 0..mu_a.len() {
        let var_a = (e_aa[i] - mu_a[i] * mu_a[i]).max(0.0);
        let var_b = (e_bb[i] - mu_b[i] * mu_b[i]).max(0.0);
        let cov = e_ab[i] - mu_a[i] * mu_b[i];
        let numerator = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        let denominator = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
        sum += numerator / denominator;
    }
    sum / mu_a.len() as f64
}

/// Absolute per-channel difference of the composited frames, amplified by
/// `scale` for visibility.
pub fn diff_image(a: &ColorImage, b: &ColorImage, scale: f32, background: Background) -> Result<ColorImage> {
    check_dims(a.dimensions(), b.dimensions())?;
    let a8 = a.to_rgb8(background);
    let b8 = b.to_rgb8(background);
    let mut out = ColorImage::new(a.width(), a.height());
    for (pixel, (pa, pb)) in out.data_mut().iter_mut().zip(a8.iter().zip(&b8)) {
        for c in 0..3 {
            let diff = (pa[c] as f32 - pb[c] as f32).abs() / 255.0;
            pixel[c] = (diff * scale).clamp(0.0, 1.0);
        }
        pixel[3] = 1.0;
    }
    Ok(out)
}

/// Gray map of how many segments each pixel would ship under sort-last.
pub fn census_heatmap(census: &SegmentCensus) -> ColorImage {
    let (width, height) = census.dimensions();
    let mut totals = vec![0u32; (width as usize) * (height as usize)];
    for y in 0..height {
        for x in 0..width {
            let i = (y as usize) * (width as usize) + x as usize;
            totals[i] = census.pixel_total(x, y).min(u32::MAX as u64) as u32;
        }
    }
    counts_to_gray_image(width, height, &totals)
}
