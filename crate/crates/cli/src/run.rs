//! The `render` and `bench` commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use apc_core::compositor::{
    cost_model, run_apc, run_sort_last, ApcRun, CompositingAlgorithm, SortLastRun,
};
use apc_core::image::{write_ppm, Background, ColorImage};
use apc_core::metrics::{census_heatmap, compare_images, diff_image};
use apc_core::moments::ReconstructionParams;
use apc_core::render::{
    depth_bounds_for, render_raymarch, render_single_node_mboit, RenderContext, RenderSettings,
};
use apc_core::report::{
    apc_traffic_rows, average_segments_per_nonempty_pixel, exchange_cost_row, quality_row,
    sort_last_traffic_rows, Report,
};
use apc_core::scene::{orbit_cameras, Camera, SceneDesc, ScenePartition, TransferFunction, VolumeBrick};

use crate::config::{Algorithm, RunConfig};

/// Distributed and single-node frames must agree to this per-channel bound.
pub const CHECK_MAX_CHANNEL_DIFF: f64 = 1e-4;
/// Approximate and exact frames must stay at least this similar.
pub const CHECK_MIN_SSIM: f64 = 0.95;
/// Brightness boost for difference images.
pub const DIFF_SCALE: f32 = 3.0;

/// What a render produced: written image paths, threshold breaches (exit
/// code material in check mode only), and the human-readable summary.
pub struct RenderOutcome {
    pub images: Vec<PathBuf>,
    pub failures: Vec<String>,
    pub summary: String,
}

struct Prepared {
    partition: ScenePartition,
    transfer: TransferFunction,
    cameras: Vec<Camera>,
    settings: RenderSettings,
}

fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let params = ReconstructionParams::new(
        config.moment_bias,
        config.overestimation,
        config.absorbance_max,
    )?;
    let mut desc = SceneDesc::new(config.scene, config.ranks);
    desc.resolution = config.resolution;
    desc.shells = config.shells;
    desc.seed = config.seed;
    let (partition, transfer) = desc.build()?;
    let aspect = config.width as f64 / config.height as f64;
    let cameras = orbit_cameras(
        &partition.world_bounds(),
        config.orbit,
        config.orbit_radius,
        aspect,
    )?;
    Ok(Prepared {
        partition,
        transfer,
        cameras,
        settings: RenderSettings {
            width: config.width,
            height: config.height,
            step: config.step,
            params,
        },
    })
}

fn render_whole_volume(
    prepared: &Prepared,
    camera: &Camera,
    algorithm: Algorithm,
) -> Result<ColorImage> {
    let bricks: Vec<&VolumeBrick> = prepared.partition.bricks().collect();
    let ctx = RenderContext::new(
        camera,
        &prepared.transfer,
        prepared.settings.width,
        prepared.settings.height,
        prepared.settings.step,
        depth_bounds_for(&prepared.partition.world_bounds(), camera)?,
        prepared.settings.params,
    )?;
    match algorithm {
        Algorithm::SingleNodeMboit => Ok(render_single_node_mboit(&ctx, &bricks)?),
        Algorithm::Raymarch => Ok(render_raymarch(&ctx, &bricks)),
        _ => unreachable!("distributed algorithms take the compositor path"),
    }
}

fn write_frame(
    dir: &Path,
    name: &str,
    image: &ColorImage,
    config: &RunConfig,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let ppm = dir.join(format!("{name}.ppm"));
    write_ppm(&ppm, image, config.background)?;
    written.push(ppm);
    if config.png {
        let png = dir.join(format!("{name}.png"));
        write_png(&png, image, config.background)?;
        written.push(png);
    }
    Ok(())
}

pub fn write_png(path: &Path, image: &ColorImage, background: Background) -> Result<()> {
    let rgb = image.to_rgb8(background);
    let flat: Vec<u8> = rgb.iter().flatten().copied().collect();
    let buffer: image::RgbImage =
        image::ImageBuffer::from_raw(image.width(), image.height(), flat)
            .expect("rgb buffer matches dimensions");
    buffer
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_render(config: &RunConfig) -> Result<RenderOutcome> {
    let prepared = prepare(config)?;
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating output directory {}", config.out.display()))?;
    config.save(&config.out.join("config.txt"))?;

    let mut report = Report::new();
    let mut images = Vec::new();
    let mut failures = Vec::new();
    let mut summary = String::new();
    let scene = config.scene.to_string();
    let _ = writeln!(
        summary,
        "scene {scene}, {} ranks, {} bricks, {}x{} pixels, {} cameras",
        config.ranks,
        prepared.partition.brick_count(),
        config.width,
        config.height,
        prepared.cameras.len()
    );

    for (cam, camera) in prepared.cameras.iter().enumerate() {
        let mut apc: Option<ApcRun> = None;
        let mut sort_last: Option<SortLastRun> = None;
        let mut single_node: Option<ColorImage> = None;

        for &algorithm in &config.algorithms {
            let frame = match algorithm {
                Algorithm::Apc => {
                    let run = run_apc(&prepared.partition, &prepared.transfer, camera, &prepared.settings)?;
                    let image = run.image.clone();
                    apc = Some(run);
                    image
                }
                Algorithm::SortLast => {
                    let run = run_sort_last(
                        &prepared.partition,
                        &prepared.transfer,
                        camera,
                        &prepared.settings,
                        None,
                    )?;
                    let image = run.image.clone();
                    sort_last = Some(run);
                    image
                }
                Algorithm::SingleNodeMboit => {
                    let image = render_whole_volume(&prepared, camera, algorithm)?;
                    single_node = Some(image.clone());
                    image
                }
                Algorithm::Raymarch => render_whole_volume(&prepared, camera, algorithm)?,
            };
            write_frame(
                &config.out,
                &format!("{scene}_{algorithm}_cam{cam}"),
                &frame,
                config,
                &mut images,
            )?;
        }

        if let Some(run) = &apc {
            report.extend(apc_traffic_rows(&scene, cam, &run.stats));
            let _ = writeln!(
                summary,
                "cam{cam} apc: {} bytes over 2 reductions, {:.2} equivalent segments per covered pixel",
                run.stats.bytes_total(),
                run.stats.equivalent_segments_avg
            );
        }
        if let Some(run) = &sort_last {
            report.extend(sort_last_traffic_rows(&scene, cam, &run.stats, &run.census));
            report.push(exchange_cost_row(
                &scene,
                config.ranks,
                cam,
                "direct_send",
                &cost_model(&run.census, CompositingAlgorithm::DirectSend)?,
            ));
            if config.ranks.is_power_of_two() {
                report.push(exchange_cost_row(
                    &scene,
                    config.ranks,
                    cam,
                    "binary_swap",
                    &cost_model(&run.census, CompositingAlgorithm::BinarySwap)?,
                ));
            }
            let heatmap = census_heatmap(&run.census);
            write_frame(
                &config.out,
                &format!("{scene}_heatmap_cam{cam}"),
                &heatmap,
                config,
                &mut images,
            )?;
            let _ = writeln!(
                summary,
                "cam{cam} sort_last: {} segments gathered, max {} per pixel, avg {:.2} per covered pixel",
                run.stats.segments_exchanged,
                run.stats.max_segments_per_pixel,
                average_segments_per_nonempty_pixel(&run.census)
            );
        }

        if config.compare {
            if let (Some(a), Some(b)) = (&apc, &sort_last) {
                let quality = compare_images(&a.image, &b.image, config.background)?;
                report.push(quality_row(&scene, config.ranks, cam, "apc", "sort_last", quality));
                let diff = diff_image(&a.image, &b.image, DIFF_SCALE, config.background)?;
                write_frame(
                    &config.out,
                    &format!("{scene}_diff_apc_vs_sort_last_cam{cam}"),
                    &diff,
                    config,
                    &mut images,
                )?;
                let _ = writeln!(
                    summary,
                    "cam{cam} apc vs sort_last: ssim {:.4}, psnr {:.2} dB, mse {:.3}",
                    quality.ssim, quality.psnr, quality.mse
                );
                if quality.ssim < CHECK_MIN_SSIM {
                    failures.push(format!(
                        "cam{cam}: ssim(apc, sort_last) = {:.4} below {CHECK_MIN_SSIM}",
                        quality.ssim
                    ));
                }
            }
            if let (Some(a), Some(b)) = (&apc, &single_node) {
                let max_diff = a.image.max_channel_difference(b)?;
                let quality = compare_images(&a.image, b, config.background)?;
                report.push(quality_row(
                    &scene,
                    config.ranks,
                    cam,
                    "apc",
                    "single_node_mboit",
                    quality,
                ));
                let diff = diff_image(&a.image, b, DIFF_SCALE, config.background)?;
                write_frame(
                    &config.out,
                    &format!("{scene}_diff_apc_vs_single_node_cam{cam}"),
                    &diff,
                    config,
                    &mut images,
                )?;
                let _ = writeln!(
                    summary,
                    "cam{cam} apc vs single_node_mboit: max channel diff {max_diff:.3e}"
                );
                if max_diff > CHECK_MAX_CHANNEL_DIFF {
                    failures.push(format!(
                        "cam{cam}: max diff apc vs single_node_mboit = {max_diff:.3e} above {CHECK_MAX_CHANNEL_DIFF:.0e}"
                    ));
                }
            }
        }
    }

    report.write(&config.out.join("report.csv"))?;
    std::fs::write(config.out.join("summary.txt"), &summary)?;
    Ok(RenderOutcome {
        images,
        failures,
        summary,
    })
}

/// Wall-clock stage timings, kept out of the deterministic report file.
struct TimingRow {
    scene: String,
    ranks: usize,
    camera: usize,
    algorithm: &'static str,
    stage: &'static str,
    seconds: f64,
}

impl TimingRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6}",
            self.scene, self.ranks, self.camera, self.algorithm, self.stage, self.seconds
        )
    }
}

const TIMING_HEADER: &str = "scene,ranks,camera,algorithm,stage,seconds";

pub struct BenchOutcome {
    pub summary: String,
}

/// Runs the approximate and exact pipelines over a sweep of rank counts,
/// recording traffic, timings, and segment heatmaps for each point.
pub fn cmd_bench(config: &RunConfig, sweep: &[usize]) -> Result<BenchOutcome> {
    if sweep.is_empty() {
        return Err(apc_core::Error::EmptySweep.into());
    }
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating output directory {}", config.out.display()))?;
    config.save(&config.out.join("config.txt"))?;

    let mut report = Report::new();
    let mut timings = vec![TIMING_HEADER.to_string()];
    let mut summary = String::new();
    let scene = config.scene.to_string();

    for &ranks in sweep {
        let mut point = config.clone();
        point.ranks = ranks;
        let prepared = prepare(&point)?;
        let _ = writeln!(
            summary,
            "n={ranks}: {} bricks, image {}x{}",
            prepared.partition.brick_count(),
            point.width,
            point.height
        );

        for (cam, camera) in prepared.cameras.iter().enumerate() {
            let apc = run_apc(&prepared.partition, &prepared.transfer, camera, &prepared.settings)?;
            report.extend(apc_traffic_rows(&scene, cam, &apc.stats));
            timings.push(
                TimingRow {
                    scene: scene.clone(),
                    ranks,
                    camera: cam,
                    algorithm: "apc",
                    stage: "local_render_and_moment_reduce",
                    seconds: apc.stats.seconds_moment_stage,
                }
                .to_csv(),
            );
            timings.push(
                TimingRow {
                    scene: scene.clone(),
                    ranks,
                    camera: cam,
                    algorithm: "apc",
                    stage: "resolve_and_color_reduce",
                    seconds: apc.stats.seconds_resolve_stage,
                }
                .to_csv(),
            );

            let exact = run_sort_last(
                &prepared.partition,
                &prepared.transfer,
                camera,
                &prepared.settings,
                None,
            )?;
            report.extend(sort_last_traffic_rows(&scene, cam, &exact.stats, &exact.census));
            report.push(exchange_cost_row(
                &scene,
                ranks,
                cam,
                "direct_send",
                &cost_model(&exact.census, CompositingAlgorithm::DirectSend)?,
            ));
            if ranks.is_power_of_two() {
                report.push(exchange_cost_row(
                    &scene,
                    ranks,
                    cam,
                    "binary_swap",
                    &cost_model(&exact.census, CompositingAlgorithm::BinarySwap)?,
                ));
            }
            timings.push(
                TimingRow {
                    scene: scene.clone(),
                    ranks,
                    camera: cam,
                    algorithm: "sort_last",
                    stage: "local_render",
                    seconds: exact.stats.seconds_render_stage,
                }
                .to_csv(),
            );
            timings.push(
                TimingRow {
                    scene: scene.clone(),
                    ranks,
                    camera: cam,
                    algorithm: "sort_last",
                    stage: "gather_and_merge",
                    seconds: exact.stats.seconds_merge_stage,
                }
                .to_csv(),
            );

            let heatmap = census_heatmap(&exact.census);
            let mut written = Vec::new();
            write_frame(
                &config.out,
                &format!("{scene}_heatmap_n{ranks}_cam{cam}"),
                &heatmap,
                config,
                &mut written,
            )?;
            let _ = writeln!(
                summary,
                "n={ranks} cam{cam}: sort_last max segments per pixel {}, total {}, bytes {}; apc bytes {} ({} covered pixels, {:.2} equivalent segments)",
                exact.stats.max_segments_per_pixel,
                exact.stats.segments_exchanged,
                exact.stats.bytes_segment_exchange,
                apc.stats.bytes_total(),
                apc.stats.nonempty_pixels,
                apc.stats.equivalent_segments_avg
            );
        }
    }

    report.write(&config.out.join("bench_traffic.csv"))?;
    std::fs::write(config.out.join("bench_timings.csv"), timings.join("\n") + "\n")?;
    std::fs::write(config.out.join("bench_summary.txt"), &summary)?;
    Ok(BenchOutcome { summary })
}

pub fn parse_sweep(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse::<usize>().with_context(|| format!("bad rank count '{part}'"))?);
    }
    Ok(out)
}
