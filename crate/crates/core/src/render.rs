//! Ray-marched rendering passes.
//!
//! All passes sample the same global grid along each primary ray: sample k
//! sits at distance `(k + 0.5) * step` from the camera, and a brick claims
//! the half-open slice of samples whose distance falls in its `[entry, exit)`
//! interval. Abutting bricks share bitwise-identical plane coordinates, so
//! every sample belongs to exactly one brick and per-rank results add up to
//! the single-node result without duplication or gaps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{ColorImage, MomentImage};
use crate::math::{Aabb, Ray};
use crate::moments::{DepthBounds, MomentVector, ReconstructionParams, TransmittanceResolver};
use crate::scene::{Camera, TransferFunction, VolumeBrick};

/// Default marching step in world units (half a voxel at unit spacing).
pub const DEFAULT_STEP: f64 = 0.5;
/// Transfer-function opacity is defined per this much world distance.
pub const REFERENCE_STEP: f64 = 1.0;

/// Image size and sampling knobs shared by a whole run.
#[derive(Clone, Copy, Debug)]
pub struct RenderSettings {
    pub width: u32,
    pub height: u32,
    pub step: f64,
    pub params: ReconstructionParams,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            width: 512,
            height: 512,
            step: DEFAULT_STEP,
            params: ReconstructionParams::default(),
        }
    }
}

/// Everything a pass needs besides the bricks it renders.
#[derive(Clone, Copy, Debug)]
pub struct RenderContext<'a> {
    pub camera: &'a Camera,
    pub transfer: &'a TransferFunction,
    pub width: u32,
    pub height: u32,
    pub step: f64,
    pub bounds: DepthBounds,
    pub params: ReconstructionParams,
}

impl<'a> RenderContext<'a> {
    pub fn new(
        camera: &'a Camera,
        transfer: &'a TransferFunction,
        width: u32,
        height: u32,
        step: f64,
        bounds: DepthBounds,
        params: ReconstructionParams,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions {width}x{height} must be positive"
            )));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParameter(format!("step size {step} must be positive")));
        }
        Ok(RenderContext {
            camera,
            transfer,
            width,
            height,
            step,
            bounds,
            params,
        })
    }

    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

/// Depth bounds for a camera viewing a scene: nearest point of the bounding
/// box to the farthest corner. A camera inside the box gets a small positive
/// near plane instead of zero.
pub fn depth_bounds_for(world: &Aabb, camera: &Camera) -> Result<DepthBounds> {
    let pos = camera.position();
    let near_raw = world.distance_to_point(pos);
    let far = world
        .corners()
        .iter()
        .map(|c| (*c - pos).length())
        .fold(0.0f64, f64::max);
    let near = if near_raw > 0.0 {
        near_raw
    } else {
        (world.half_diagonal() * 2.0) * 1.0e-4
    };
    DepthBounds::new(near, far)
}

/// One brick's half-open slice of the global sample grid along a ray.
struct BrickInterval<'a> {
    brick: &'a VolumeBrick,
    t_enter: f64,
    t_exit: f64,
    k_lo: i64,
    k_hi: i64,
}

fn brick_intervals<'a>(bricks: &[&'a VolumeBrick], ray: &Ray, step: f64) -> Vec<BrickInterval<'a>> {
    let mut out = Vec::new();
    for brick in bricks {
        let Some((t_enter, t_exit)) = brick.bounds().intersect_ray(ray) else {
            continue;
        };
        if t_exit <= 0.0 || t_exit <= t_enter {
            continue;
        }
        // first grid index at or past each boundary; shared boundaries give
        // bitwise-equal quotients, so neighbors neither overlap nor leave gaps
        let k_lo = ((t_enter / step - 0.5).ceil() as i64).max(0);
        let k_hi = ((t_exit / step - 0.5).ceil() as i64).max(0);
        if k_hi > k_lo {
            out.push(BrickInterval {
                brick,
                t_enter,
                t_exit,
                k_lo,
                k_hi,
            });
        }
    }
    out.sort_by(|a, b| a.t_enter.total_cmp(&b.t_enter));
    out
}

struct SampleInfo {
    t: f64,
    alpha: f64,
    transmittance: f64,
    rgb: [f64; 3],
}

fn sample_absorbance(alpha: f64, step: f64, absorbance_max: f64) -> f64 {
    ((-(-alpha).ln_1p()) * (step / REFERENCE_STEP)).min(absorbance_max)
}

/// Walks every sample with positive opacity in front-to-back order and hands
/// it to the visitor.
fn march(
    intervals: &[BrickInterval],
    ray: &Ray,
    transfer: &TransferFunction,
    step: f64,
    absorbance_max: f64,
    mut visit: impl FnMut(&SampleInfo),
) {
    for iv in intervals {
        for k in iv.k_lo..iv.k_hi {
            let t = (k as f64 + 0.5) * step;
            let scalar = iv.brick.sample(ray.at(t));
            let rgba = transfer.evaluate(scalar);
            if rgba[3] <= 0.0 {
                continue;
            }
            let a = sample_absorbance(rgba[3], step, absorbance_max);
            let transmittance = (-a).exp();
            visit(&SampleInfo {
                t,
                alpha: -(-a).exp_m1(),
                transmittance,
                rgb: [rgba[0], rgba[1], rgba[2]],
            });
        }
    }
}

/// First stage: accumulate depth moments for one rank's bricks.
pub fn render_moment_pass(ctx: &RenderContext, bricks: &[&VolumeBrick]) -> MomentImage {
    let width = ctx.width as usize;
    let mut image = MomentImage::new(ctx.width, ctx.height);
    image
        .data_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let ray = ctx.camera.ray(x as u32, y as u32, ctx.width, ctx.height);
                let intervals = brick_intervals(bricks, &ray, ctx.step);
                let mut moments = MomentVector::ZERO;
                march(
                    &intervals,
                    &ray,
                    ctx.transfer,
                    ctx.step,
                    ctx.params.absorbance_max(),
                    |s| {
                        moments.add_sample(
                            ctx.bounds.warp(s.t),
                            s.transmittance,
                            ctx.params.absorbance_max(),
                        );
                    },
                );
                *out = moments;
            }
        });
    image
}

/// Second stage: weight one rank's samples by the transmittance
/// reconstructed from the scene-wide moments.
pub fn render_resolve_pass(
    ctx: &RenderContext,
    bricks: &[&VolumeBrick],
    global_moments: &MomentImage,
) -> Result<ColorImage> {
    crate::image::check_dims((ctx.width, ctx.height), global_moments.dimensions())?;
    let width = ctx.width as usize;
    let mut image = ColorImage::new(ctx.width, ctx.height);
    image
        .data_mut()
        .par_chunks_mut(width)
        .enumerate()
        .try_for_each(|(y, row)| -> Result<()> {
            for (x, out) in row.iter_mut().enumerate() {
                let resolver =
                    TransmittanceResolver::new(global_moments.pixel(x as u32, y as u32), &ctx.params)
                        .map_err(|e| Error::Resolve {
                            x: x as u32,
                            y: y as u32,
                            source: Box::new(e),
                        })?;
                let ray = ctx.camera.ray(x as u32, y as u32, ctx.width, ctx.height);
                let intervals = brick_intervals(bricks, &ray, ctx.step);
                let mut acc = [0.0f64; 4];
                march(
                    &intervals,
                    &ray,
                    ctx.transfer,
                    ctx.step,
                    ctx.params.absorbance_max(),
                    |s| {
                        let t = resolver.transmittance_at(ctx.bounds.warp(s.t));
                        let w = t * s.alpha;
                        acc[0] += w * s.rgb[0];
                        acc[1] += w * s.rgb[1];
                        acc[2] += w * s.rgb[2];
                        acc[3] += w;
                    },
                );
                *out = [acc[0] as f32, acc[1] as f32, acc[2] as f32, acc[3] as f32];
            }
            Ok(())
        })?;
    Ok(image)
}

/// Both stages on one node. Identical code path to the distributed pipeline
/// with the componentwise moment sum replaced by a single all-brick pass.
pub fn render_single_node_mboit(ctx: &RenderContext, bricks: &[&VolumeBrick]) -> Result<ColorImage> {
    let moments = render_moment_pass(ctx, bricks);
    render_resolve_pass(ctx, bricks, &moments)
}

/// Pre-blended span of consecutive samples from one rank.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub z_start: f64,
    pub z_end: f64,
    /// Premultiplied RGBA blended front to back within the span.
    pub color: [f64; 4],
}

impl Segment {
    pub fn alpha(&self) -> f64 {
        self.color[3]
    }
}

/// Per-pixel segment lists produced by one rank.
#[derive(Clone, Debug, Default)]
pub struct SegmentImage {
    width: u32,
    height: u32,
    pixels: Vec<Vec<Segment>>,
}

impl SegmentImage {
    pub fn new(width: u32, height: u32) -> Self {
        SegmentImage {
            width,
            height,
            pixels: vec![Vec::new(); (width as usize) * (height as usize)],
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[Segment] {
        &self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn pixels(&self) -> &[Vec<Segment>] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Vec<Segment>] {
        &mut self.pixels
    }

    pub fn counts(&self) -> Vec<u32> {
        self.pixels.iter().map(|p| p.len() as u32).collect()
    }

    pub fn total_segments(&self) -> u64 {
        self.pixels.iter().map(|p| p.len() as u64).sum()
    }
}

/// Sort-last first stage: blend one rank's bricks into per-pixel segments.
/// Consecutive bricks that share an exact exit/entry boundary merge into one
/// segment, so a rank contributes one segment per contiguous run it owns.
pub fn render_segment_pass(ctx: &RenderContext, bricks: &[&VolumeBrick]) -> SegmentImage {
    let width = ctx.width as usize;
    let mut image = SegmentImage::new(ctx.width, ctx.height);
    image
        .pixels_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let ray = ctx.camera.ray(x as u32, y as u32, ctx.width, ctx.height);
                let intervals = brick_intervals(bricks, &ray, ctx.step);
                let mut segments = Vec::new();
                let mut open: Option<(f64, f64, [f64; 4], f64)> = None; // start, end, premult color, transparency
                for iv in &intervals {
                    match open {
                        Some((_, end, _, _)) if end == iv.t_enter => {}
                        Some(seg) => {
                            segments.push(close_segment(seg));
                            open = None;
                        }
                        None => {}
                    }
                    let (start, mut color, mut transparency) = match open {
                        Some((start, _, color, transparency)) => (start, color, transparency),
                        None => (iv.t_enter, [0.0; 4], 1.0),
                    };
                    march(
                        std::slice::from_ref(iv),
                        &ray,
                        ctx.transfer,
                        ctx.step,
                        ctx.params.absorbance_max(),
                        |s| {
                            let w = transparency * s.alpha;
                            color[0] += w * s.rgb[0];
                            color[1] += w * s.rgb[1];
                            color[2] += w * s.rgb[2];
                            color[3] += w;
                            transparency *= 1.0 - s.alpha;
                        },
                    );
                    open = Some((start, iv.t_exit, color, transparency));
                }
                if let Some(seg) = open {
                    segments.push(close_segment(seg));
                }
                *out = segments;
            }
        });
    image
}

fn close_segment((start, end, color, _): (f64, f64, [f64; 4], f64)) -> Segment {
    Segment {
        z_start: start,
        z_end: end,
        color,
    }
}

/// Plain front-to-back ray marching over all given bricks; the exact
/// reference the approximate pipeline is judged against.
pub fn render_raymarch(ctx: &RenderContext, bricks: &[&VolumeBrick]) -> ColorImage {
    let width = ctx.width as usize;
    let mut image = ColorImage::new(ctx.width, ctx.height);
    image
        .data_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let ray = ctx.camera.ray(x as u32, y as u32, ctx.width, ctx.height);
                let intervals = brick_intervals(bricks, &ray, ctx.step);
                let mut color = [0.0f64; 4];
                let mut transparency = 1.0f64;
                march(
                    &intervals,
                    &ray,
                    ctx.transfer,
                    ctx.step,
                    ctx.params.absorbance_max(),
                    |s| {
                        let w = transparency * s.alpha;
                        color[0] += w * s.rgb[0];
                        color[1] += w * s.rgb[1];
                        color[2] += w * s.rgb[2];
                        color[3] += w;
                        transparency *= 1.0 - s.alpha;
                    },
                );
                *out = [color[0] as f32, color[1] as f32, color[2] as f32, color[3] as f32];
            }
        });
    image
}

/// Number of contributing samples per pixel; used by tests and the traffic
/// accounting to tell covered pixels from empty ones.
pub fn render_sample_counts(ctx: &RenderContext, bricks: &[&VolumeBrick]) -> Vec<u32> {
    let width = ctx.width as usize;
    let mut counts = vec![0u32; width * ctx.height as usize];
    counts
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let ray = ctx.camera.ray(x as u32, y as u32, ctx.width, ctx.height);
                let intervals = brick_intervals(bricks, &ray, ctx.step);
                let mut n = 0u32;
                march(
                    &intervals,
                    &ray,
                    ctx.transfer,
                    ctx.step,
                    ctx.params.absorbance_max(),
                    |_| n += 1,
                );
                *out = n;
            }
        });
    counts
}
