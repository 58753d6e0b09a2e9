//! Simulated multi-rank compositing.
//!
//! Ranks are threads coordinated through a barrier-synchronized slot
//! exchange, the moral equivalent of MPI collectives. Every reduction sorts
//! the per-rank contributions by value before folding, so results are
//! bit-identical no matter how bricks are numbered or threads scheduled.

use std::any::Any;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{check_dims, ColorImage, MomentImage};
use crate::moments::MOMENT_COUNT;
use crate::render::{
    depth_bounds_for, render_moment_pass, render_resolve_pass, render_segment_pass,
    RenderContext, RenderSettings, Segment, SegmentImage,
};
use crate::scene::{Camera, ScenePartition, TransferFunction};

/// Rank that ends up with the composited image.
pub const ROOT: usize = 0;

/// Pixels per tile edge for the sparse traffic estimates.
pub const TILE_SIZE: u32 = 64;

/// Wire size of one segment: two depths and a premultiplied RGBA color,
/// all f32.
pub const SEGMENT_WIRE_BYTES: u64 = 24;
/// Wire size when depths are implied by a fixed blend order.
pub const SEGMENT_WIRE_BYTES_COLOR_ONLY: u64 = 16;

const SCALAR_BYTES: u64 = 4;

/// A barrier whose waiters wake with an error once any rank gives up, so a
/// failing rank can never strand its peers.
struct PoisonBarrier {
    parties: usize,
    state: Mutex<BarrierState>,
    condvar: Condvar,
}

#[derive(Default)]
struct BarrierState {
    arrived: usize,
    generation: u64,
    poisoned: Option<usize>,
}

impl PoisonBarrier {
    fn new(parties: usize) -> Self {
        PoisonBarrier {
            parties,
            state: Mutex::new(BarrierState::default()),
            condvar: Condvar::new(),
        }
    }

    fn wait(&self) -> Result<()> {
        let mut state = self.state.lock().unwrap();
        if let Some(rank) = state.poisoned {
            return Err(Error::PeerFailure { rank });
        }
        state.arrived += 1;
        if state.arrived == self.parties {
            state.arrived = 0;
            state.generation += 1;
            self.condvar.notify_all();
            return Ok(());
        }
        let generation = state.generation;
        while state.generation == generation && state.poisoned.is_none() {
            state = self.condvar.wait(state).unwrap();
        }
        match state.poisoned {
            Some(rank) if state.generation == generation => Err(Error::PeerFailure { rank }),
            _ => Ok(()),
        }
    }

    fn poison(&self, rank: usize) {
        let mut state = self.state.lock().unwrap();
        if state.poisoned.is_none() {
            state.poisoned = Some(rank);
        }
        self.condvar.notify_all();
    }
}

struct Shared {
    slots: Mutex<Vec<Option<Arc<dyn Any + Send + Sync>>>>,
    barrier: PoisonBarrier,
}

/// Handle a rank uses to talk to its group.
pub struct Communicator<'a> {
    rank: usize,
    ranks: usize,
    shared: &'a Shared,
}

impl Communicator<'_> {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    pub fn is_root(&self) -> bool {
        self.rank == ROOT
    }

    /// Two-phase exchange: every rank deposits a value, waits, and reads all
    /// of them back. Every collective in a run must be reached by every rank
    /// with the same payload type.
    pub fn allgather<T: Send + Sync + 'static>(&self, value: T) -> Result<Vec<Arc<T>>> {
        {
            let mut slots = self.shared.slots.lock().unwrap();
            slots[self.rank] = Some(Arc::new(value));
        }
        self.shared.barrier.wait()?;
        let gathered = {
            let slots = self.shared.slots.lock().unwrap();
            slots
                .iter()
                .map(|slot| {
                    slot.clone()
                        .expect("collective slot left empty")
                        .downcast::<T>()
                        .expect("collective payload types diverged across ranks")
                })
                .collect()
        };
        self.shared.barrier.wait()?;
        Ok(gathered)
    }
}

/// Runs one closure per rank on its own thread and collects the results in
/// rank order. A rank that fails or panics poisons the group: peers blocked
/// in a collective return `PeerFailure` instead of deadlocking, and the
/// first real error (lowest rank) is reported.
pub struct RankGroup;

impl RankGroup {
    pub fn run<T, F>(ranks: usize, task: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Communicator) -> Result<T> + Sync,
    {
        if ranks == 0 {
            return Err(Error::InvalidParameter("rank group needs at least one rank".into()));
        }
        let shared = Shared {
            slots: Mutex::new(vec![None; ranks]),
            barrier: PoisonBarrier::new(ranks),
        };
        let mut joined: Vec<std::thread::Result<Result<T>>> = Vec::with_capacity(ranks);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..ranks)
                .map(|rank| {
                    let shared = &shared;
                    let task = &task;
                    scope.spawn(move || {
                        let comm = Communicator { rank, ranks, shared };
                        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| task(&comm)));
                        if !matches!(outcome, Ok(Ok(_))) {
                            shared.barrier.poison(rank);
                        }
                        match outcome {
                            Ok(result) => result,
                            Err(payload) => std::panic::resume_unwind(payload),
                        }
                    })
                })
                .collect();
            for handle in handles {
                joined.push(handle.join());
            }
        });
        let mut results = Vec::with_capacity(ranks);
        let mut peer_failure = None;
        let mut real_failure = None;
        for (rank, outcome) in joined.into_iter().enumerate() {
            match outcome {
                Err(payload) => std::panic::resume_unwind(payload),
                Ok(Ok(value)) => results.push(value),
                Ok(Err(Error::PeerFailure { rank: source })) => {
                    peer_failure.get_or_insert(Error::PeerFailure { rank: source });
                }
                Ok(Err(error)) => {
                    real_failure.get_or_insert(Error::Rank {
                        rank,
                        source: Box::new(error),
                    });
                }
            }
        }
        match (real_failure, peer_failure) {
            (Some(error), _) | (None, Some(error)) => Err(error),
            (None, None) => Ok(results),
        }
    }
}

fn sorted_sum(buffer: &mut [f64]) -> f64 {
    buffer.sort_unstable_by(f64::total_cmp);
    buffer.iter().sum()
}

/// Componentwise sum of per-rank moment images, folded in sorted order so
/// the result does not depend on rank numbering.
pub fn combine_moment_images(parts: &[&MomentImage]) -> Result<MomentImage> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidParameter("no moment images to combine".into()))?;
    let (width, height) = first.dimensions();
    for part in parts {
        check_dims((width, height), part.dimensions())?;
    }
    let mut out = MomentImage::new(width, height);
    out.data_mut()
        .par_iter_mut()
        .enumerate()
        .for_each_init(
            || vec![0.0f64; parts.len()],
            |buffer, (i, moments)| {
                for component in 0..MOMENT_COUNT {
                    for (slot, part) in buffer.iter_mut().zip(parts) {
                        *slot = part.data()[i].0[component];
                    }
                    moments.0[component] = sorted_sum(buffer);
                }
            },
        );
    Ok(out)
}

/// Channelwise sum of per-rank partial colors, same ordering rule as
/// [`combine_moment_images`].
pub fn combine_color_images(parts: &[&ColorImage]) -> Result<ColorImage> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidParameter("no color images to combine".into()))?;
    let (width, height) = first.dimensions();
    for part in parts {
        check_dims((width, height), part.dimensions())?;
    }
    let mut out = ColorImage::new(width, height);
    out.data_mut()
        .par_iter_mut()
        .enumerate()
        .for_each_init(
            || vec![0.0f64; parts.len()],
            |buffer, (i, pixel)| {
                for channel in 0..4 {
                    for (slot, part) in buffer.iter_mut().zip(parts) {
                        *slot = part.data()[i][channel] as f64;
                    }
                    pixel[channel] = sorted_sum(buffer) as f32;
                }
            },
        );
    Ok(out)
}

/// All ranks end up with the identical summed moment image.
pub fn allreduce_moments(comm: &Communicator, local: &MomentImage) -> Result<MomentImage> {
    let parts = comm.allgather(local.clone())?;
    let refs: Vec<&MomentImage> = parts.iter().map(Arc::as_ref).collect();
    combine_moment_images(&refs)
}

/// Root gets the summed color image, everyone else `None`.
pub fn reduce_color_to_root(comm: &Communicator, local: &ColorImage) -> Result<Option<ColorImage>> {
    let parts = comm.allgather(local.clone())?;
    if !comm.is_root() {
        return Ok(None);
    }
    let refs: Vec<&ColorImage> = parts.iter().map(Arc::as_ref).collect();
    combine_color_images(&refs).map(Some)
}

/// Root gets every rank's segment image in rank order.
pub fn gather_segments(comm: &Communicator, local: SegmentImage) -> Result<Option<Vec<Arc<SegmentImage>>>> {
    let parts = comm.allgather(local)?;
    Ok(comm.is_root().then_some(parts))
}

/// Traffic and staging accounting for one approximate compositing run.
///
/// Byte counts are the closed-form cost of the two reductions: every rank
/// contributes five f32 moments and four f32 color channels per pixel. The
/// `compact` variants drop the total-absorbance moment (recoverable from the
/// opacity channel), and the `nonempty` variants skip 64x64 tiles a rank
/// never touched.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CommStats {
    pub ranks: usize,
    pub pixels: u64,
    pub nonempty_pixels: u64,
    pub bytes_moment_exchange: u64,
    pub bytes_moment_exchange_compact: u64,
    pub bytes_moment_exchange_nonempty: u64,
    pub bytes_moment_exchange_nonempty_compact: u64,
    pub bytes_color_exchange: u64,
    pub bytes_color_exchange_nonempty: u64,
    pub reduction_rounds: u32,
    /// Twice the mean number of ranks whose nonempty tiles cover a nonempty
    /// pixel; the sort-last segment count an equally sparse exchange of
    /// moments plus colors is worth.
    pub equivalent_segments_avg: f64,
    pub seconds_moment_stage: f64,
    pub seconds_resolve_stage: f64,
}

impl CommStats {
    pub fn bytes_total(&self) -> u64 {
        self.bytes_moment_exchange + self.bytes_color_exchange
    }

    pub fn bytes_total_nonempty(&self) -> u64 {
        self.bytes_moment_exchange_nonempty + self.bytes_color_exchange_nonempty
    }
}

/// Result of a distributed approximate run.
pub struct ApcRun {
    pub image: ColorImage,
    pub global_moments: MomentImage,
    pub stats: CommStats,
}

struct RankArtifacts {
    local_moments: MomentImage,
    global_moments: Option<MomentImage>,
    reduced: Option<ColorImage>,
    seconds_moment: f64,
    seconds_resolve: f64,
}

/// Moment-based compositing over an arbitrary partition: accumulate local
/// moments, allreduce them, weight local samples by the reconstructed
/// global transmittance, and sum the partial colors on the root. Two
/// reductions regardless of rank count.
pub fn run_apc(
    partition: &ScenePartition,
    transfer: &TransferFunction,
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<ApcRun> {
    let bounds = partition.world_bounds();
    let depth = depth_bounds_for(&bounds, camera)?;
    let ctx = RenderContext::new(
        camera,
        transfer,
        settings.width,
        settings.height,
        settings.step,
        depth,
        settings.params,
    )?;
    let ranks = partition.ranks();

    let mut artifacts = RankGroup::run(ranks, |comm| {
        let bricks = partition.bricks_of(comm.rank());
        let moment_start = Instant::now();
        let local_moments = render_moment_pass(&ctx, &bricks);
        let global_moments = allreduce_moments(comm, &local_moments)?;
        let seconds_moment = moment_start.elapsed().as_secs_f64();

        let resolve_start = Instant::now();
        let partial = render_resolve_pass(&ctx, &bricks, &global_moments)?;
        let reduced = reduce_color_to_root(comm, &partial)?;
        let seconds_resolve = resolve_start.elapsed().as_secs_f64();

        Ok(RankArtifacts {
            local_moments,
            global_moments: comm.is_root().then_some(global_moments),
            reduced,
            seconds_moment,
            seconds_resolve,
        })
    })?;

    let image = artifacts[ROOT].reduced.take().expect("root holds the reduction");
    let global_moments = artifacts[ROOT]
        .global_moments
        .take()
        .expect("root holds the summed moments");

    let stats = apc_stats(&artifacts, &global_moments, settings, ranks);
    Ok(ApcRun {
        image,
        global_moments,
        stats,
    })
}

fn apc_stats(
    artifacts: &[RankArtifacts],
    global_moments: &MomentImage,
    settings: &RenderSettings,
    ranks: usize,
) -> CommStats {
    let width = settings.width;
    let height = settings.height;
    let pixels = width as u64 * height as u64;
    let n = ranks as u64;

    let masks: Vec<TileMask> = artifacts
        .iter()
        .map(|a| TileMask::from_moments(&a.local_moments))
        .collect();
    let nonempty_tile_pixels: u64 = masks.iter().map(TileMask::covered_pixels).sum();

    let mut nonempty_pixels = 0u64;
    let mut covering_ranks = 0u64;
    for (i, moments) in global_moments.data().iter().enumerate() {
        if moments.is_zero() {
            continue;
        }
        nonempty_pixels += 1;
        let x = (i as u64 % width as u64) as u32;
        let y = (i as u64 / width as u64) as u32;
        covering_ranks += masks.iter().filter(|m| m.covers(x, y)).count() as u64;
    }
    let equivalent_segments_avg = if nonempty_pixels == 0 {
        0.0
    } else {
        2.0 * covering_ranks as f64 / nonempty_pixels as f64
    };

    CommStats {
        ranks,
        pixels,
        nonempty_pixels,
        bytes_moment_exchange: n * pixels * MOMENT_COUNT as u64 * SCALAR_BYTES,
        bytes_moment_exchange_compact: n * pixels * (MOMENT_COUNT as u64 - 1) * SCALAR_BYTES,
        bytes_moment_exchange_nonempty: nonempty_tile_pixels * MOMENT_COUNT as u64 * SCALAR_BYTES,
        bytes_moment_exchange_nonempty_compact: nonempty_tile_pixels
            * (MOMENT_COUNT as u64 - 1)
            * SCALAR_BYTES,
        bytes_color_exchange: n * pixels * 4 * SCALAR_BYTES,
        bytes_color_exchange_nonempty: nonempty_tile_pixels * 4 * SCALAR_BYTES,
        reduction_rounds: 2,
        equivalent_segments_avg,
        seconds_moment_stage: artifacts.iter().map(|a| a.seconds_moment).fold(0.0, f64::max),
        seconds_resolve_stage: artifacts.iter().map(|a| a.seconds_resolve).fold(0.0, f64::max),
    }
}

/// Which 64x64 tiles of one rank's moment image hold any absorbance.
struct TileMask {
    tiles_x: u32,
    width: u32,
    height: u32,
    nonempty: Vec<bool>,
}

impl TileMask {
    fn from_moments(image: &MomentImage) -> Self {
        let (width, height) = image.dimensions();
        let tiles_x = width.div_ceil(TILE_SIZE);
        let tiles_y = height.div_ceil(TILE_SIZE);
        let mut nonempty = vec![false; (tiles_x as usize) * (tiles_y as usize)];
        for (i, moments) in image.data().iter().enumerate() {
            if moments.is_zero() {
                continue;
            }
            let x = i as u32 % width;
            let y = i as u32 / width;
            nonempty[((y / TILE_SIZE) * tiles_x + x / TILE_SIZE) as usize] = true;
        }
        TileMask {
            tiles_x,
            width,
            height,
            nonempty,
        }
    }

    fn covers(&self, x: u32, y: u32) -> bool {
        self.nonempty[((y / TILE_SIZE) * self.tiles_x + x / TILE_SIZE) as usize]
    }

    fn covered_pixels(&self) -> u64 {
        let tiles_y = self.height.div_ceil(TILE_SIZE);
        let mut total = 0u64;
        for ty in 0..tiles_y {
            let rows = (self.height - ty * TILE_SIZE).min(TILE_SIZE) as u64;
            for tx in 0..self.tiles_x {
                if self.nonempty[(ty * self.tiles_x + tx) as usize] {
                    let cols = (self.width - tx * TILE_SIZE).min(TILE_SIZE) as u64;
                    total += rows * cols;
                }
            }
        }
        total
    }
}

/// Per-rank segment counts for every pixel, the input to the exchange cost
/// models.
#[derive(Clone, Debug)]
pub struct SegmentCensus {
    width: u32,
    height: u32,
    per_rank: Vec<Vec<u32>>,
}

impl SegmentCensus {
    pub fn from_segment_images(images: &[&SegmentImage]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidParameter("census needs at least one rank".into()))?;
        let (width, height) = first.dimensions();
        for image in images {
            check_dims((width, height), image.dimensions())?;
        }
        Ok(SegmentCensus {
            width,
            height,
            per_rank: images.iter().map(|i| i.counts()).collect(),
        })
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn ranks(&self) -> usize {
        self.per_rank.len()
    }

    pub fn count(&self, rank: usize, x: u32, y: u32) -> u32 {
        self.per_rank[rank][(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn pixel_total(&self, x: u32, y: u32) -> u64 {
        (0..self.ranks()).map(|r| self.count(r, x, y) as u64).sum()
    }

    pub fn total(&self) -> u64 {
        self.per_rank
            .iter()
            .map(|counts| counts.iter().map(|&c| c as u64).sum::<u64>())
            .sum()
    }

    pub fn rank_counts(&self, rank: usize) -> &[u32] {
        &self.per_rank[rank]
    }
}

/// Traffic accounting for one sort-last run: every rank ships every segment
/// to the root.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SortLastStats {
    pub ranks: usize,
    pub pixels: u64,
    pub segments_exchanged: u64,
    pub bytes_segment_exchange: u64,
    pub bytes_segment_exchange_color_only: u64,
    pub max_segments_per_pixel: u32,
    pub seconds_render_stage: f64,
    pub seconds_merge_stage: f64,
}

/// Result of an exact sort-last run.
pub struct SortLastRun {
    pub image: ColorImage,
    pub census: SegmentCensus,
    pub stats: SortLastStats,
}

/// Exact reference compositor: ranks pre-blend their bricks into segments,
/// the root sorts each pixel's segments by depth and blends front to back.
/// Fails if segments from different ranks interleave, which a partition into
/// convex bricks cannot produce. `early_termination` stops a pixel's blend
/// once its opacity reaches the threshold.
pub fn run_sort_last(
    partition: &ScenePartition,
    transfer: &TransferFunction,
    camera: &Camera,
    settings: &RenderSettings,
    early_termination: Option<f64>,
) -> Result<SortLastRun> {
    if let Some(threshold) = early_termination {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "early termination threshold {threshold} outside (0, 1]"
            )));
        }
    }
    let bounds = partition.world_bounds();
    let depth = depth_bounds_for(&bounds, camera)?;
    let ctx = RenderContext::new(
        camera,
        transfer,
        settings.width,
        settings.height,
        settings.step,
        depth,
        settings.params,
    )?;
    let ranks = partition.ranks();

    let mut outputs = RankGroup::run(ranks, |comm| {
        let bricks = partition.bricks_of(comm.rank());
        let start = Instant::now();
        let segments = render_segment_pass(&ctx, &bricks);
        let seconds = start.elapsed().as_secs_f64();
        let gathered = gather_segments(comm, segments)?;
        Ok((gathered, seconds))
    })?;

    let seconds_render_stage = outputs.iter().map(|(_, s)| *s).fold(0.0, f64::max);
    let gathered = outputs[ROOT].0.take().expect("root holds the gather");
    let images: Vec<&SegmentImage> = gathered.iter().map(Arc::as_ref).collect();

    let merge_start = Instant::now();
    let (image, max_segments_per_pixel) = merge_gathered_segments(&images, early_termination)?;
    let seconds_merge_stage = merge_start.elapsed().as_secs_f64();

    let census = SegmentCensus::from_segment_images(&images)?;
    let segments_exchanged = census.total();
    let stats = SortLastStats {
        ranks,
        pixels: settings.width as u64 * settings.height as u64,
        segments_exchanged,
        bytes_segment_exchange: segments_exchanged * SEGMENT_WIRE_BYTES,
        bytes_segment_exchange_color_only: segments_exchanged * SEGMENT_WIRE_BYTES_COLOR_ONLY,
        max_segments_per_pixel,
        seconds_render_stage,
        seconds_merge_stage,
    };
    Ok(SortLastRun {
        image,
        census,
        stats,
    })
}

/// Depth-sorts and blends per-rank segment lists pixel by pixel. Ties on
/// depth break by rank so the result is deterministic.
pub fn merge_gathered_segments(
    images: &[&SegmentImage],
    early_termination: Option<f64>,
) -> Result<(ColorImage, u32)> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidParameter("no segment images to merge".into()))?;
    let (width, height) = first.dimensions();
    for image in images {
        check_dims((width, height), image.dimensions())?;
    }
    let mut out = ColorImage::new(width, height);
    let max_count = Mutex::new(0u32);
    out.data_mut()
        .par_chunks_mut(width as usize)
        .enumerate()
        .try_for_each(|(y, row)| -> Result<()> {
            let y = y as u32;
            let mut row_max = 0u32;
            let mut merged: Vec<(usize, Segment)> = Vec::new();
            for (x, pixel) in row.iter_mut().enumerate() {
                let x = x as u32;
                merged.clear();
                for (rank, image) in images.iter().enumerate() {
                    merged.extend(image.pixel(x, y).iter().map(|s| (rank, *s)));
                }
                merged.sort_by(|a, b| {
                    a.1.z_start
                        .total_cmp(&b.1.z_start)
                        .then(a.0.cmp(&b.0))
                });
                row_max = row_max.max(merged.len() as u32);
                let mut color = [0.0f64; 4];
                let mut transparency = 1.0f64;
                let mut depth_reached = f64::NEG_INFINITY;
                for (_, segment) in &merged {
                    if segment.z_start < depth_reached {
                        return Err(Error::SegmentOverlap { x, y });
                    }
                    depth_reached = segment.z_end;
                    for channel in 0..4 {
                        color[channel] += transparency * segment.color[channel];
                    }
                    transparency *= 1.0 - segment.alpha();
                    if let Some(threshold) = early_termination {
                        if color[3] >= threshold {
                            break;
                        }
                    }
                }
                *pixel = [color[0] as f32, color[1] as f32, color[2] as f32, color[3] as f32];
            }
            let mut global = max_count.lock().unwrap();
            *global = (*global).max(row_max);
            Ok(())
        })?;
    let max_segments = *max_count.lock().unwrap();
    Ok((out, max_segments))
}

/// Exchange patterns whose traffic the cost model can price from a census.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompositingAlgorithm {
    Apc,
    DirectSend,
    BinarySwap,
}

impl std::str::FromStr for CompositingAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apc" => Ok(CompositingAlgorithm::Apc),
            "direct_send" => Ok(CompositingAlgorithm::DirectSend),
            "binary_swap" => Ok(CompositingAlgorithm::BinarySwap),
            other => Err(Error::InvalidParameter(format!(
                "unknown algorithm '{other}' (expected apc, direct_send, or binary_swap)"
            ))),
        }
    }
}

impl std::fmt::Display for CompositingAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CompositingAlgorithm::Apc => "apc",
            CompositingAlgorithm::DirectSend => "direct_send",
            CompositingAlgorithm::BinarySwap => "binary_swap",
        })
    }
}

/// Priced traffic of one segment exchange.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExchangeCost {
    /// Segment sends, counting each hop a segment takes.
    pub segments: u64,
    pub bytes: u64,
    pub bytes_color_only: u64,
    pub messages: u64,
}

impl ExchangeCost {
    fn add_segments(&mut self, count: u64) {
        self.segments += count;
        self.bytes += count * SEGMENT_WIRE_BYTES;
        self.bytes_color_only += count * SEGMENT_WIRE_BYTES_COLOR_ONLY;
    }
}

/// Prices what a classic compositor would send for the segment distribution
/// in `census`. Moment-based traffic is closed-form (see [`CommStats`]) and
/// not priced here.
pub fn cost_model(census: &SegmentCensus, algorithm: CompositingAlgorithm) -> Result<ExchangeCost> {
    match algorithm {
        CompositingAlgorithm::Apc => Err(Error::InvalidParameter(
            "segment cost model does not apply to the moment exchange".into(),
        )),
        CompositingAlgorithm::DirectSend => Ok(direct_send_cost(census)),
        CompositingAlgorithm::BinarySwap => binary_swap_cost(census),
    }
}

/// Final image block owner under an even contiguous split.
fn block_owner(pixel: u64, pixels: u64, ranks: u64) -> usize {
    (((pixel * ranks) / pixels) as usize).min(ranks as usize - 1)
}

fn direct_send_cost(census: &SegmentCensus) -> ExchangeCost {
    let ranks = census.ranks();
    let (width, height) = census.dimensions();
    let pixels = width as u64 * height as u64;
    let mut cost = ExchangeCost::default();
    let mut pair_bytes = vec![0u64; ranks * ranks];
    for rank in 0..ranks {
        for (i, &count) in census.rank_counts(rank).iter().enumerate() {
            if count == 0 {
                continue;
            }
            let owner = block_owner(i as u64, pixels, ranks as u64);
            if owner == rank {
                continue;
            }
            cost.add_segments(count as u64);
            pair_bytes[rank * ranks + owner] += count as u64;
        }
    }
    cost.messages = pair_bytes.iter().filter(|&&b| b > 0).count() as u64;
    cost
}

/// Owner of a pixel after every binary-swap halving, low rank keeping the
/// low half.
fn swap_owner(pixel: u64, pixels: u64, levels: u32) -> usize {
    let (mut lo, mut hi) = (0u64, pixels);
    let mut owner = 0usize;
    for level in 0..levels {
        let mid = lo + (hi - lo) / 2;
        if pixel < mid {
            hi = mid;
        } else {
            owner |= 1 << level;
            lo = mid;
        }
    }
    owner
}

fn binary_swap_cost(census: &SegmentCensus) -> Result<ExchangeCost> {
    let ranks = census.ranks();
    if !ranks.is_power_of_two() {
        return Err(Error::PowerOfTwoRequired { ranks });
    }
    let (width, height) = census.dimensions();
    let pixels = (width as usize) * (height as usize);
    let levels = ranks.trailing_zeros();

    let mut held: Vec<Vec<u64>> = (0..ranks)
        .map(|r| census.rank_counts(r).iter().map(|&c| c as u64).collect())
        .collect();
    let mut ranges = vec![(0usize, pixels); ranks];
    let mut cost = ExchangeCost::default();

    for level in 0..levels {
        let bit = 1usize << level;
        let previous = held.clone();
        let ranges_before = ranges.clone();
        for rank in 0..ranks {
            let partner = rank ^ bit;
            let (lo, hi) = ranges_before[rank];
            debug_assert_eq!(ranges_before[partner], (lo, hi));
            let mid = lo + (hi - lo) / 2;
            let (keep, give) = if rank & bit == 0 {
                ((lo, mid), (mid, hi))
            } else {
                ((mid, hi), (lo, mid))
            };
            let sent: u64 = previous[rank][give.0..give.1].iter().sum();
            cost.add_segments(sent);
            cost.messages += 1;
            for p in keep.0..keep.1 {
                held[rank][p] += previous[partner][p];
            }
            for p in give.0..give.1 {
                held[rank][p] = 0;
            }
            ranges[rank] = keep;
        }
    }

    debug_assert_eq!(
        held.iter().map(|h| h.iter().sum::<u64>()).sum::<u64>(),
        census.total()
    );
    debug_assert!(ranges.iter().enumerate().all(|(rank, &(lo, hi))| {
        (lo..hi).all(|p| swap_owner(p as u64, pixels as u64, levels) == rank)
    }));
    Ok(cost)
}
