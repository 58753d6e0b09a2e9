//! Acceptance gate for the whole workspace: one test per criterion, each
//! printing a single `acceptance k/9 ...: PASS` or `FAIL` line (visible under
//! `cargo test --test acceptance -- --nocapture`). Every tolerance is a named
//! constant next to the test that enforces it.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use apc_core::compositor::{run_apc, run_sort_last, combine_moment_images};
use apc_core::image::{encode_ppm, Background, MomentImage};
use apc_core::math::Vec3;
use apc_core::metrics::compare_images;
use apc_core::moments::{
    MomentVector, ReconstructionParams, TransmittanceResolver, DEFAULT_ABSORBANCE_MAX,
    DEFAULT_OVERESTIMATION,
};
use apc_core::render::{
    depth_bounds_for, render_moment_pass, render_raymarch, render_single_node_mboit,
    RenderContext, RenderSettings, DEFAULT_STEP,
};
use apc_core::scene::{
    make_random_scene, orbit_cameras, random_partition, SceneDesc, SceneKind, ScenePartition,
    TransferFunction, VolumeBrick, DEFAULT_ORBIT_RADIUS_SCALE,
};
use apc_cli::{cmd_render, Algorithm, RunConfig};

fn criterion(number: usize, title: &str, body: impl FnOnce() -> Result<String, String>) {
    match body() {
        Ok(detail) => println!("acceptance {number}/9 {title}: PASS ({detail})"),
        Err(detail) => {
            println!("acceptance {number}/9 {title}: FAIL ({detail})");
            panic!("acceptance {number}/9 {title}: {detail}");
        }
    }
}

fn settings(width: u32, height: u32) -> RenderSettings {
    RenderSettings {
        width,
        height,
        step: DEFAULT_STEP,
        params: ReconstructionParams::default(),
    }
}

fn front_camera(partition: &ScenePartition, aspect: f64) -> apc_core::scene::Camera {
    orbit_cameras(&partition.world_bounds(), 1, DEFAULT_ORBIT_RADIUS_SCALE, aspect)
        .expect("camera")
        .remove(0)
}

fn whole_scene_context<'a>(
    partition: &'a ScenePartition,
    transfer: &'a TransferFunction,
    camera: &'a apc_core::scene::Camera,
    settings: &RenderSettings,
) -> RenderContext<'a> {
    let bounds = partition.world_bounds();
    let depth = depth_bounds_for(&bounds, camera).expect("depth bounds");
    RenderContext::new(
        camera,
        transfer,
        settings.width,
        settings.height,
        settings.step,
        depth,
        settings.params,
    )
    .expect("render context")
}

/// The distributed pipeline and the single-node renderer run the same
/// arithmetic, so their images must agree to far below one 8-bit level.
#[test]
fn c1_distributed_render_matches_the_single_node_renderer() {
    const MAX_CHANNEL_DIFF: f64 = 1e-4;
    const TIME_LIMIT: Duration = Duration::from_secs(30);

    criterion(1, "distributed render matches the single node renderer", || {
        let mut worst_diff: f64 = 0.0;
        let mut slowest = Duration::ZERO;
        for ranks in [2usize, 3, 8] {
            let start = Instant::now();
            let (partition, transfer) = SceneDesc::new(SceneKind::Sandwich, ranks)
                .build()
                .map_err(|e| e.to_string())?;
            let settings = settings(256, 256);
            let camera = front_camera(&partition, 1.0);

            let apc = run_apc(&partition, &transfer, &camera, &settings)
                .map_err(|e| e.to_string())?;
            let ctx = whole_scene_context(&partition, &transfer, &camera, &settings);
            let all: Vec<&VolumeBrick> = partition.bricks().collect();
            let single = render_single_node_mboit(&ctx, &all).map_err(|e| e.to_string())?;

            let diff = apc
                .image
                .max_channel_difference(&single)
                .map_err(|e| e.to_string())?;
            let elapsed = start.elapsed();
            worst_diff = worst_diff.max(diff);
            slowest = slowest.max(elapsed);
            if diff > MAX_CHANNEL_DIFF {
                return Err(format!(
                    "n={ranks}: max channel diff {diff:.3e} above {MAX_CHANNEL_DIFF:.0e}"
                ));
            }
            if elapsed > TIME_LIMIT {
                return Err(format!("n={ranks}: took {elapsed:.2?}, limit {TIME_LIMIT:?}"));
            }
        }
        Ok(format!(
            "n in {{2, 3, 8}} at 256x256, worst diff {worst_diff:.2e}, slowest case {slowest:.2?}"
        ))
    });
}

/// Moment images are plain sums over samples, so any partition of one volume
/// must produce rank images that add up to the unpartitioned pass.
#[test]
fn c2_rank_moment_images_sum_to_the_whole_scene_pass() {
    const RELATIVE_TOL: f64 = 1e-10;
    const PARTITIONS: u64 = 20;
    const TIME_LIMIT: Duration = Duration::from_secs(10);

    criterion(2, "rank moment images sum to the whole scene pass", || {
        let start = Instant::now();
        let dims = [6usize, 40, 40];
        let origin = Vec3::new(-3.0, -20.0, -20.0);
        let field = |g: [usize; 3]| -> f32 {
            let s = (g[0] as f64 * 0.9 + g[1] as f64 * 0.35 + g[2] as f64 * 0.2).sin();
            (0.5 + 0.5 * s) as f32
        };
        let transfer = TransferFunction::rainbow(0.2);
        let settings = settings(64, 64);

        let mut worst_rel: f64 = 0.0;
        for seed in 0..PARTITIONS {
            let partition = random_partition(origin, dims, 1.0, 8, 4, seed, &field)
                .map_err(|e| e.to_string())?;
            let camera = front_camera(&partition, 1.0);
            let ctx = whole_scene_context(&partition, &transfer, &camera, &settings);

            let all: Vec<&VolumeBrick> = partition.bricks().collect();
            let whole = render_moment_pass(&ctx, &all);

            let per_rank: Vec<MomentImage> = (0..partition.ranks())
                .map(|rank| render_moment_pass(&ctx, &partition.bricks_of(rank)))
                .collect();
            let parts: Vec<&MomentImage> = per_rank.iter().collect();
            let summed = combine_moment_images(&parts).map_err(|e| e.to_string())?;

            for (p, (a, b)) in summed.data().iter().zip(whole.data()).enumerate() {
                let scale = a.total_absorbance().max(b.total_absorbance());
                for i in 0..5 {
                    let diff = (a.0[i] - b.0[i]).abs();
                    if scale == 0.0 {
                        if diff != 0.0 {
                            return Err(format!(
                                "seed {seed}, pixel {p}: empty pixel disagrees by {diff:e}"
                            ));
                        }
                        continue;
                    }
                    let rel = diff / scale;
                    worst_rel = worst_rel.max(rel);
                    if rel > RELATIVE_TOL {
                        return Err(format!(
                            "seed {seed}, pixel {p}, moment {i}: relative error {rel:.3e} above {RELATIVE_TOL:.0e}"
                        ));
                    }
                }
            }
        }
        let elapsed = start.elapsed();
        if elapsed > TIME_LIMIT {
            return Err(format!("took {elapsed:.2?}, limit {TIME_LIMIT:?}"));
        }
        Ok(format!(
            "{PARTITIONS} random partitions, worst relative error {worst_rel:.2e}, {elapsed:.2?}"
        ))
    });
}

/// On smooth data the moment approximation should be close to the exact
/// sort-last composite at full working resolution.
#[test]
fn c3_moment_compositing_tracks_sort_last_on_smooth_data() {
    const MIN_SSIM: f64 = 0.95;
    const MIN_PSNR_DB: f64 = 25.0;
    const TIME_LIMIT: Duration = Duration::from_secs(60);

    criterion(3, "moment compositing tracks sort-last on smooth data", || {
        let start = Instant::now();
        let (partition, transfer) = SceneDesc::new(SceneKind::Concentric, 2)
            .build()
            .map_err(|e| e.to_string())?;
        let settings = settings(512, 512);
        let camera = front_camera(&partition, 1.0);

        let apc = run_apc(&partition, &transfer, &camera, &settings).map_err(|e| e.to_string())?;
        let exact = run_sort_last(&partition, &transfer, &camera, &settings, None)
            .map_err(|e| e.to_string())?;
        let quality =
            compare_images(&apc.image, &exact.image, Background::Black).map_err(|e| e.to_string())?;

        let elapsed = start.elapsed();
        if quality.ssim < MIN_SSIM {
            return Err(format!("ssim {:.4} below {MIN_SSIM}", quality.ssim));
        }
        if quality.psnr < MIN_PSNR_DB {
            return Err(format!("psnr {:.2} dB below {MIN_PSNR_DB}", quality.psnr));
        }
        if elapsed > TIME_LIMIT {
            return Err(format!("took {elapsed:.2?}, limit {TIME_LIMIT:?}"));
        }
        Ok(format!(
            "concentric 512x512: ssim {:.4}, psnr {:.2} dB, {elapsed:.2?}",
            quality.ssim, quality.psnr
        ))
    });
}

/// Near-opaque sheets produce abrupt transmittance steps that four moments
/// cannot follow, so quality must drop measurably below the smooth case.
#[test]
fn c4_abrupt_transmittance_steps_degrade_quality() {
    const RESOLUTION: usize = 96;

    criterion(4, "abrupt transmittance steps degrade quality", || {
        let image_size = (256, 256);
        let ssim_of = |kind: SceneKind| -> Result<f64, String> {
            let mut desc = SceneDesc::new(kind, 2);
            desc.resolution = Some(RESOLUTION);
            let (partition, transfer) = desc.build().map_err(|e| e.to_string())?;
            let settings = settings(image_size.0, image_size.1);
            let camera = front_camera(&partition, 1.0);
            let apc =
                run_apc(&partition, &transfer, &camera, &settings).map_err(|e| e.to_string())?;
            let exact = run_sort_last(&partition, &transfer, &camera, &settings, None)
                .map_err(|e| e.to_string())?;
            Ok(compare_images(&apc.image, &exact.image, Background::Black)
                .map_err(|e| e.to_string())?
                .ssim)
        };

        let spikes = ssim_of(SceneKind::Spikes)?;
        let concentric = ssim_of(SceneKind::Concentric)?;
        if spikes >= concentric {
            return Err(format!(
                "spikes ssim {spikes:.4} not strictly below concentric ssim {concentric:.4}"
            ));
        }
        Ok(format!(
            "spikes ssim {spikes:.4} < concentric ssim {concentric:.4} at identical settings"
        ))
    });
}

/// Four power moments determine a two-point mass exactly, so with no bias the
/// reconstruction between two point masses must return the front one's
/// transmittance.
#[test]
fn c5_two_point_masses_reconstruct_exactly_without_bias() {
    const CONFIGURATIONS: usize = 1_000;
    const TOL: f64 = 1e-3;
    const MIN_SEPARATION: f64 = 0.1;
    const TIME_LIMIT: Duration = Duration::from_secs(5);

    /// Reference transmittance: bin the depths and sum the absorbance of all
    /// samples strictly in front of the query's bin.
    fn oracle(samples: &[(f64, f64)], query: f64) -> f64 {
        const BINS: usize = 10_000;
        let bin = |z: f64| (((z + 1.0) * 0.5 * BINS as f64) as usize).min(BINS - 1);
        let query_bin = bin(query);
        let mass: f64 = samples
            .iter()
            .filter(|(z, _)| bin(*z) < query_bin)
            .map(|(_, a)| a)
            .sum();
        (-mass).exp()
    }

    criterion(5, "two point masses reconstruct exactly without bias", || {
        let start = Instant::now();
        let params = ReconstructionParams::new(0.0, DEFAULT_OVERESTIMATION, DEFAULT_ABSORBANCE_MAX)
            .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;

        for case in 0..CONFIGURATIONS {
            let (z1, z2) = loop {
                let a: f64 = rng.gen_range(-0.95..0.95);
                let b: f64 = rng.gen_range(-0.95..0.95);
                if (a - b).abs() >= MIN_SEPARATION {
                    break (a.min(b), a.max(b));
                }
            };
            let a1: f64 = rng.gen_range(0.05..2.5);
            let a2: f64 = rng.gen_range(0.05..2.5);

            let mut moments = MomentVector::ZERO;
            moments.add_sample(z1, (-a1).exp(), 1.0e12);
            moments.add_sample(z2, (-a2).exp(), 1.0e12);
            let resolver = TransmittanceResolver::new(&moments, &params)
                .map_err(|e| format!("case {case}: {e}"))?;

            let expected = (-a1).exp();
            for fraction in [0.25, 0.5, 0.75] {
                let query = z1 + (z2 - z1) * fraction;
                let got = resolver.transmittance_at(query);
                let reference = oracle(&[(z1, a1), (z2, a2)], query);
                let err = (got - expected).abs().max((got - reference).abs());
                worst = worst.max(err);
                if err > TOL {
                    return Err(format!(
                        "case {case}: z=({z1:.3}, {z2:.3}), A=({a1:.3}, {a2:.3}), query {query:.3}: \
                         got {got:.6}, expected {expected:.6}, oracle {reference:.6}"
                    ));
                }
            }
        }
        let elapsed = start.elapsed();
        if elapsed > TIME_LIMIT {
            return Err(format!("took {elapsed:.2?}, limit {TIME_LIMIT:?}"));
        }
        Ok(format!(
            "{CONFIGURATIONS} configurations, worst error {worst:.2e}, {elapsed:.2?}"
        ))
    });
}

/// Whatever the input moments, the reconstruction must stay a transmittance:
/// inside [0, 1], non-increasing front to back, and equal to exp(-b0) behind
/// everything.
#[test]
fn c6_reconstruction_is_bounded_monotone_and_exact_far_field() {
    const SAMPLE_SETS: usize = 10_000;
    const MONOTONE_TOL: f64 = 1e-3;
    const FAR_FIELD_TOL: f64 = 1e-3;
    const QUERIES: usize = 21;

    criterion(6, "reconstruction is bounded, monotone, exact far field", || {
        let params = ReconstructionParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut worst_monotone: f64 = 0.0;
        let mut worst_far: f64 = 0.0;

        for set in 0..SAMPLE_SETS {
            let count = rng.gen_range(1..=10);
            let mut moments = MomentVector::ZERO;
            for _ in 0..count {
                let z: f64 = rng.gen_range(-1.0..=1.0);
                let alpha: f64 = rng.gen_range(0.02..0.98);
                moments.add_sample(z, 1.0 - alpha, DEFAULT_ABSORBANCE_MAX);
            }
            let resolver = TransmittanceResolver::new(&moments, &params)
                .map_err(|e| format!("set {set}: {e}"))?;

            let mut previous = f64::INFINITY;
            for q in 0..QUERIES {
                let z = -1.0 + 2.0 * q as f64 / (QUERIES - 1) as f64;
                let t = resolver.transmittance_at(z);
                if !(0.0..=1.0).contains(&t) {
                    return Err(format!("set {set}: t({z:.2}) = {t} outside [0, 1]"));
                }
                let rise = t - previous;
                if rise > 0.0 {
                    worst_monotone = worst_monotone.max(rise);
                }
                if rise > MONOTONE_TOL {
                    return Err(format!(
                        "set {set}: t rises by {rise:.3e} at z = {z:.2}, tolerance {MONOTONE_TOL:.0e}"
                    ));
                }
                previous = t.min(previous);
            }

            let far = resolver.transmittance_at(1.0);
            let expected = (-moments.total_absorbance()).exp();
            let err = (far - expected).abs();
            worst_far = worst_far.max(err);
            if err > FAR_FIELD_TOL {
                return Err(format!(
                    "set {set}: far field {far:.6} vs exp(-b0) {expected:.6}, error {err:.3e}"
                ));
            }
        }
        Ok(format!(
            "{SAMPLE_SETS} sample sets, worst rise {worst_monotone:.2e}, worst far-field error {worst_far:.2e}"
        ))
    });
}

/// The two reductions ship a fixed five-plus-four scalars per rank and pixel,
/// and a fully covered sandwich pixel owns exactly one segment per slab.
#[test]
fn c7_traffic_matches_the_closed_forms() {
    const SCALAR_BYTES: u64 = 4;
    const SCALARS_PER_RANK_PIXEL: u64 = 9;

    criterion(7, "traffic matches the closed forms", || {
        for ranks in [2usize, 4, 8, 16] {
            let (partition, transfer) = SceneDesc::new(SceneKind::Sandwich, ranks)
                .build()
                .map_err(|e| e.to_string())?;
            let settings = settings(128, 96);
            let camera = front_camera(&partition, 128.0 / 96.0);

            let apc =
                run_apc(&partition, &transfer, &camera, &settings).map_err(|e| e.to_string())?;
            let pixels = settings.width as u64 * settings.height as u64;
            let expected = SCALARS_PER_RANK_PIXEL * ranks as u64 * pixels * SCALAR_BYTES;
            if apc.stats.bytes_total() != expected {
                return Err(format!(
                    "n={ranks}: apc bytes {} != closed form {expected}",
                    apc.stats.bytes_total()
                ));
            }

            let exact = run_sort_last(&partition, &transfer, &camera, &settings, None)
                .map_err(|e| e.to_string())?;
            let center = exact
                .census
                .pixel_total(settings.width / 2, settings.height / 2);
            let slabs = 4 * ranks as u64;
            if center != slabs {
                return Err(format!(
                    "n={ranks}: fully covered pixel carries {center} segments, expected {slabs}"
                ));
            }
            if exact.stats.max_segments_per_pixel as u64 != slabs {
                return Err(format!(
                    "n={ranks}: max segments per pixel {} != {slabs}",
                    exact.stats.max_segments_per_pixel
                ));
            }

            let bound = 2.0 * ranks as f64;
            if apc.stats.equivalent_segments_avg > bound {
                return Err(format!(
                    "n={ranks}: equivalent segment average {:.3} exceeds 2n = {bound}",
                    apc.stats.equivalent_segments_avg
                ));
            }
        }
        Ok("n in {2, 4, 8, 16}: bytes = 9nP scalars, covered pixels = 4n segments, average <= 2n".into())
    });
}

/// Bitwise reproducibility: rerunning one configuration, or dealing the same
/// bricks to ranks in a different order, must leave every output byte alone.
#[test]
fn c8_same_config_and_seed_reproduce_byte_identical_images() {
    criterion(8, "same config and seed reproduce byte-identical images", || {
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut config = RunConfig::default();
        config.scene = SceneKind::Random;
        config.ranks = 3;
        config.resolution = Some(24);
        config.shells = 3;
        config.seed = 11;
        config.width = 48;
        config.height = 40;
        config.orbit = 2;
        config.algorithms = vec![Algorithm::Apc, Algorithm::SortLast];

        let mut runs = Vec::new();
        for name in ["first", "second"] {
            let mut run = config.clone();
            run.out = root.path().join(name);
            cmd_render(&run).map_err(|e| e.to_string())?;
            let mut files: Vec<_> = std::fs::read_dir(&run.out)
                .map_err(|e| e.to_string())?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "ppm"))
                .collect();
            files.sort();
            runs.push(files);
        }
        if runs[0].len() != runs[1].len() || runs[0].is_empty() {
            return Err(format!(
                "runs wrote {} and {} images",
                runs[0].len(),
                runs[1].len()
            ));
        }
        for (a, b) in runs[0].iter().zip(&runs[1]) {
            let bytes_a = std::fs::read(a).map_err(|e| e.to_string())?;
            let bytes_b = std::fs::read(b).map_err(|e| e.to_string())?;
            if bytes_a != bytes_b {
                return Err(format!("{} and {} differ", a.display(), b.display()));
            }
        }

        let partition = make_random_scene(3, 24, 3, 11).map_err(|e| e.to_string())?;
        let permuted = partition.permuted(&[2, 0, 1]).map_err(|e| e.to_string())?;
        let transfer = apc_core::scene::concentric_transfer_function();
        let settings = settings(48, 40);
        let camera = front_camera(&partition, 48.0 / 40.0);
        let ppm_of = |p: &ScenePartition| -> Result<Vec<u8>, String> {
            let run = run_apc(p, &transfer, &camera, &settings).map_err(|e| e.to_string())?;
            let rgb = run.image.to_rgb8(Background::Black);
            Ok(encode_ppm(48, 40, &rgb))
        };
        if ppm_of(&partition)? != ppm_of(&permuted)? {
            return Err("rank permutation changed the rendered bytes".into());
        }
        Ok(format!(
            "{} images byte-identical across reruns and under rank permutation",
            runs[0].len()
        ))
    });
}

/// With one convex brick per rank the segment sort is a true depth order, so
/// sort-last must reproduce plain front-to-back raymarching.
#[test]
fn c9_sort_last_matches_raymarching_on_convex_partitions() {
    const MAX_CHANNEL_DIFF: f64 = 1e-6;

    criterion(9, "sort-last matches raymarching on convex partitions", || {
        let mut desc = SceneDesc::new(SceneKind::Concentric, 4);
        desc.resolution = Some(32);
        let (partition, transfer) = desc.build().map_err(|e| e.to_string())?;
        let settings = settings(96, 96);
        let camera = front_camera(&partition, 1.0);

        let exact = run_sort_last(&partition, &transfer, &camera, &settings, None)
            .map_err(|e| e.to_string())?;
        let ctx = whole_scene_context(&partition, &transfer, &camera, &settings);
        let all: Vec<&VolumeBrick> = partition.bricks().collect();
        let reference = render_raymarch(&ctx, &all);

        let diff = exact
            .image
            .max_channel_difference(&reference)
            .map_err(|e| e.to_string())?;
        if diff > MAX_CHANNEL_DIFF {
            return Err(format!(
                "max channel diff {diff:.3e} above {MAX_CHANNEL_DIFF:.0e}"
            ));
        }
        Ok(format!(
            "one convex brick per rank, max channel diff {diff:.2e}"
        ))
    });
}
