//! Cross-module checks wiring scenes, passes, and compositors together.

use apc_core::compositor::{
    combine_moment_images, cost_model, run_apc, run_sort_last, CompositingAlgorithm,
};
use apc_core::image::Background;
use apc_core::metrics::compare_images;
use apc_core::render::{
    depth_bounds_for, render_moment_pass, render_raymarch, render_segment_pass, RenderContext,
    RenderSettings,
};
use apc_core::scene::{
    concentric_transfer_function, make_concentric_scene, make_sandwich_scene, orbit_cameras,
    sandwich_transfer_function, Camera, ScenePartition, TransferFunction, VolumeBrick,
};

fn small_settings(width: u32, height: u32) -> RenderSettings {
    RenderSettings {
        width,
        height,
        ..RenderSettings::default()
    }
}

fn context<'a>(
    scene: &ScenePartition,
    transfer: &'a TransferFunction,
    camera: &'a Camera,
    settings: &RenderSettings,
) -> RenderContext<'a> {
    RenderContext::new(
        camera,
        transfer,
        settings.width,
        settings.height,
        settings.step,
        depth_bounds_for(&scene.world_bounds(), camera).unwrap(),
        settings.params,
    )
    .unwrap()
}

/// The total absorbance moment and the blended segment transparency are two
/// routes to the same line integral; they must agree to float accuracy.
#[test]
fn segment_transparency_product_matches_total_absorbance() {
    let scene = make_sandwich_scene(3, 16).unwrap();
    let transfer = sandwich_transfer_function();
    let cameras = orbit_cameras(&scene.world_bounds(), 1, 2.8, 1.0).unwrap();
    let settings = small_settings(24, 24);
    let ctx = context(&scene, &transfer, &cameras[0], &settings);

    let per_rank_moments: Vec<_> = (0..scene.ranks())
        .map(|r| render_moment_pass(&ctx, &scene.bricks_of(r)))
        .collect();
    let refs: Vec<_> = per_rank_moments.iter().collect();
    let global = combine_moment_images(&refs).unwrap();

    let per_rank_segments: Vec<_> = (0..scene.ranks())
        .map(|r| render_segment_pass(&ctx, &scene.bricks_of(r)))
        .collect();

    for y in 0..settings.height {
        for x in 0..settings.width {
            let mut transparency = 1.0f64;
            for segments in &per_rank_segments {
                for segment in segments.pixel(x, y) {
                    transparency *= 1.0 - segment.alpha();
                }
            }
            let b0 = global.pixel(x, y).total_absorbance();
            let expected = -transparency.ln();
            assert!(
                (b0 - expected).abs() <= 1e-9 * b0.max(1.0),
                "pixel ({x}, {y}): b0 {b0} vs -ln product {expected}"
            );
        }
    }
}

/// Summing per-rank moment images must reproduce the single-pass moments of
/// the whole volume exactly, because both see the identical sample set.
#[test]
fn rank_moments_add_up_to_the_single_pass() {
    let scene = make_concentric_scene(4, 32, 4).unwrap();
    let transfer = concentric_transfer_function();
    let cameras = orbit_cameras(&scene.world_bounds(), 2, 2.8, 1.0).unwrap();
    let settings = small_settings(28, 28);

    for camera in &cameras {
        let ctx = context(&scene, &transfer, camera, &settings);
        let all: Vec<&VolumeBrick> = scene.bricks().collect();
        let single = render_moment_pass(&ctx, &all);

        let per_rank: Vec<_> = (0..scene.ranks())
            .map(|r| render_moment_pass(&ctx, &scene.bricks_of(r)))
            .collect();
        let refs: Vec<_> = per_rank.iter().collect();
        let summed = combine_moment_images(&refs).unwrap();

        for (a, b) in single.data().iter().zip(summed.data()) {
            for c in 0..5 {
                let scale = a.0[c].abs().max(1.0);
                assert!(
                    (a.0[c] - b.0[c]).abs() <= 1e-12 * scale,
                    "moment {c}: {} vs {}",
                    a.0[c],
                    b.0[c]
                );
            }
        }
    }
}

/// Renumbering ranks must not change a single bit of the output frame.
#[test]
fn rank_permutation_leaves_the_frame_bit_identical() {
    let scene = make_sandwich_scene(3, 16).unwrap();
    let permuted = scene.permuted(&[2, 0, 1]).unwrap();
    let transfer = sandwich_transfer_function();
    let cameras = orbit_cameras(&scene.world_bounds(), 1, 2.8, 1.0).unwrap();
    let settings = small_settings(32, 32);

    let a = run_apc(&scene, &transfer, &cameras[0], &settings).unwrap();
    let b = run_apc(&permuted, &transfer, &cameras[0], &settings).unwrap();

    for (pa, pb) in a.image.data().iter().zip(b.image.data()) {
        for c in 0..4 {
            assert_eq!(pa[c].to_bits(), pb[c].to_bits());
        }
    }
    for (ma, mb) in a.global_moments.data().iter().zip(b.global_moments.data()) {
        for c in 0..5 {
            assert_eq!(ma.0[c].to_bits(), mb.0[c].to_bits());
        }
    }
}

/// Same run twice must be bit-identical as well.
#[test]
fn repeated_runs_are_bit_identical() {
    let scene = make_concentric_scene(2, 24, 3).unwrap();
    let transfer = concentric_transfer_function();
    let cameras = orbit_cameras(&scene.world_bounds(), 1, 2.8, 1.0).unwrap();
    let settings = small_settings(24, 24);

    let a = run_apc(&scene, &transfer, &cameras[0], &settings).unwrap();
    let b = run_apc(&scene, &transfer, &cameras[0], &settings).unwrap();
    for (pa, pb) in a.image.data().iter().zip(b.image.data()) {
        for c in 0..4 {
            assert_eq!(pa[c].to_bits(), pb[c].to_bits());
        }
    }
}

/// Sort-last over convex per-rank bricks is exact: it must match plain ray
/// marching over the whole volume to well under display precision.
#[test]
fn sort_last_is_an_exact_compositor() {
    let scene = make_concentric_scene(4, 32, 4).unwrap();
    let transfer = concentric_transfer_function();
    let cameras = orbit_cameras(&scene.world_bounds(), 2, 2.8, 1.0).unwrap();
    let settings = small_settings(32, 32);

    for camera in &cameras {
        let run = run_sort_last(&scene, &transfer, camera, &settings, None).unwrap();
        let ctx = context(&scene, &transfer, camera, &settings);
        let all: Vec<&VolumeBrick> = scene.bricks().collect();
        let reference = render_raymarch(&ctx, &all);
        let diff = run.image.max_channel_difference(&reference).unwrap();
        assert!(diff < 1e-6, "sort-last is off by {diff}");
    }
}

/// The approximate frame should stay visually close to the exact one on a
/// smooth scene even at thumbnail size.
#[test]
fn apc_tracks_sort_last_on_a_smooth_scene() {
    let scene = make_concentric_scene(4, 32, 4).unwrap();
    let transfer = concentric_transfer_function();
    let cameras = orbit_cameras(&scene.world_bounds(), 1, 2.8, 1.0).unwrap();
    let settings = small_settings(64, 64);

    let approx = run_apc(&scene, &transfer, &cameras[0], &settings).unwrap();
    let exact = run_sort_last(&scene, &transfer, &cameras[0], &settings, None).unwrap();
    let report = compare_images(&approx.image, &exact.image, Background::Black).unwrap();
    assert!(report.ssim > 0.9, "ssim {}", report.ssim);
    assert!(report.psnr > 20.0, "psnr {}", report.psnr);

    let direct = cost_model(&exact.census, CompositingAlgorithm::DirectSend).unwrap();
    let swap = cost_model(&exact.census, CompositingAlgorithm::BinarySwap).unwrap();
    assert!(direct.bytes > 0);
    assert!(swap.bytes > 0);
    assert!(approx.stats.bytes_total() > 0);
}

/// Byte accounting invariants that hold for any scene: the dense exchange is
/// exactly (5 + 4) f32 per rank per pixel, and the sparse estimate never
/// exceeds it.
#[test]
fn traffic_accounting_is_consistent() {
    let scene = make_sandwich_scene(4, 16).unwrap();
    let transfer = sandwich_transfer_function();
    let cameras = orbit_cameras(&scene.world_bounds(), 1, 2.8, 1.0).unwrap();
    let settings = small_settings(40, 30);

    let run = run_apc(&scene, &transfer, &cameras[0], &settings).unwrap();
    let stats = run.stats;
    let pixels = 40 * 30u64;
    assert_eq!(stats.pixels, pixels);
    assert_eq!(stats.bytes_moment_exchange, 4 * pixels * 5 * 4);
    assert_eq!(stats.bytes_color_exchange, 4 * pixels * 4 * 4);
    assert_eq!(stats.bytes_total(), 36 * 4 * pixels);
    assert!(stats.bytes_moment_exchange_nonempty <= stats.bytes_moment_exchange);
    assert!(stats.bytes_color_exchange_nonempty <= stats.bytes_color_exchange);
    assert!(stats.bytes_moment_exchange_nonempty_compact <= stats.bytes_moment_exchange_nonempty);
    assert!(stats.nonempty_pixels <= pixels);
    assert!(stats.equivalent_segments_avg <= 2.0 * 4.0 + 1e-12);
    assert_eq!(stats.reduction_rounds, 2);
}
