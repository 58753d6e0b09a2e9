//! Brick-partitioned test volumes, transfer functions and cameras.
//!
//! All bricks live on integer voxel grids with unit spacing so that shared
//! brick faces have bitwise-identical plane coordinates. The renderer relies
//! on this to hand every ray sample to exactly one brick.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{Aabb, Ray, Vec3};

/// Regular scalar grid embedded in world space. Voxel `(i, j, k)` is centered
/// at `origin + (i + 0.5, j + 0.5, k + 0.5) * spacing`.
#[derive(Clone, Debug)]
pub struct VolumeBrick {
    origin: Vec3,
    dims: [usize; 3],
    spacing: f64,
    data: Vec<f32>,
}

impl VolumeBrick {
    pub fn new(origin: Vec3, dims: [usize; 3], spacing: f64, data: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidPartition(format!("brick with empty dims {dims:?}")));
        }
        if !(spacing.is_finite() && spacing > 0.0) || !origin.is_finite() {
            return Err(Error::InvalidPartition("non-finite brick geometry".into()));
        }
        let expect = dims[0] * dims[1] * dims[2];
        if data.len() != expect {
            return Err(Error::InvalidPartition(format!(
                "brick data length {} does not match dims {dims:?}",
                data.len()
            )));
        }
        Ok(VolumeBrick { origin, dims, spacing, data })
    }

    /// Fills voxels from a function of the global voxel index. `offset` is the
    /// brick's position on the global grid, so the same field function yields
    /// bitwise-identical voxels no matter how the grid is cut into bricks.
    pub fn from_field(
        global_origin: Vec3,
        offset: [usize; 3],
        dims: [usize; 3],
        spacing: f64,
        field: &dyn Fn([usize; 3]) -> f32,
    ) -> Result<Self> {
        let origin = global_origin
            + Vec3::new(
                offset[0] as f64 * spacing,
                offset[1] as f64 * spacing,
                offset[2] as f64 * spacing,
            );
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(field([offset[0] + i, offset[1] + j, offset[2] + k]));
                }
            }
        }
        VolumeBrick::new(origin, dims, spacing, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn bounds(&self) -> Aabb {
        let e = Vec3::new(
            self.dims[0] as f64 * self.spacing,
            self.dims[1] as f64 * self.spacing,
            self.dims[2] as f64 * self.spacing,
        );
        Aabb::new(self.origin, self.origin + e)
    }

    pub fn voxel(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    /// Trilinear sample at a world position. Coordinates are clamped to the
    /// voxel-center lattice, so positions marginally outside the brick (from
    /// ray step rounding) read the edge value.
    pub fn sample(&self, p: Vec3) -> f64 {
        let local = (p - self.origin) / self.spacing - Vec3::splat(0.5);
        let fx = local.x.clamp(0.0, (self.dims[0] - 1) as f64);
        let fy = local.y.clamp(0.0, (self.dims[1] - 1) as f64);
        let fz = local.z.clamp(0.0, (self.dims[2] - 1) as f64);
        let (i0, i1, tx) = split_cell(fx, self.dims[0]);
        let (j0, j1, ty) = split_cell(fy, self.dims[1]);
        let (k0, k1, tz) = split_cell(fz, self.dims[2]);

        let c000 = self.voxel(i0, j0, k0) as f64;
        let c100 = self.voxel(i1, j0, k0) as f64;
        let c010 = self.voxel(i0, j1, k0) as f64;
        let c110 = self.voxel(i1, j1, k0) as f64;
        let c001 = self.voxel(i0, j0, k1) as f64;
        let c101 = self.voxel(i1, j0, k1) as f64;
        let c011 = self.voxel(i0, j1, k1) as f64;
        let c111 = self.voxel(i1, j1, k1) as f64;

        let c00 = c000 + (c100 - c000) * tx;
        let c10 = c010 + (c110 - c010) * tx;
        let c01 = c001 + (c101 - c001) * tx;
        let c11 = c011 + (c111 - c011) * tx;
        let c0 = c00 + (c10 - c00) * ty;
        let c1 = c01 + (c11 - c01) * ty;
        c0 + (c1 - c0) * tz
    }
}

fn split_cell(f: f64, dim: usize) -> (usize, usize, f64) {
    if dim == 1 {
        // a single voxel clamps to itself; interpolation weight is unused
        return (0, 0, 0.0);
    }
    let i = (f.floor() as usize).min(dim - 2);
    (i, i + 1, f - i as f64)
}

/// Bricks with their owning rank. Brick interiors must be pairwise disjoint.
#[derive(Clone, Debug)]
pub struct ScenePartition {
    ranks: usize,
    assignment: Vec<(VolumeBrick, usize)>,
}

impl ScenePartition {
    pub fn new(ranks: usize, assignment: Vec<(VolumeBrick, usize)>) -> Result<Self> {
        if ranks == 0 {
            return Err(Error::InvalidPartition("rank count must be at least 1".into()));
        }
        if assignment.is_empty() {
            return Err(Error::InvalidPartition("partition has no bricks".into()));
        }
        for (brick, owner) in &assignment {
            if *owner >= ranks {
                return Err(Error::InvalidPartition(format!(
                    "brick owner {owner} out of range for {ranks} ranks"
                )));
            }
            let _ = brick;
        }
        for a in 0..assignment.len() {
            for b in (a + 1)..assignment.len() {
                let va = assignment[a].0.bounds();
                let vb = assignment[b].0.bounds();
                if va.overlap_volume(&vb) > 0.0 {
                    return Err(Error::InvalidPartition(format!(
                        "bricks {a} and {b} overlap"
                    )));
                }
            }
        }
        Ok(ScenePartition { ranks, assignment })
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    pub fn bricks(&self) -> impl Iterator<Item = &VolumeBrick> {
        self.assignment.iter().map(|(b, _)| b)
    }

    pub fn assignment(&self) -> &[(VolumeBrick, usize)] {
        &self.assignment
    }

    pub fn bricks_of(&self, rank: usize) -> Vec<&VolumeBrick> {
        self.assignment
            .iter()
            .filter(|(_, owner)| *owner == rank)
            .map(|(b, _)| b)
            .collect()
    }

    pub fn brick_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn world_bounds(&self) -> Aabb {
        let mut bounds = self.assignment[0].0.bounds();
        for (brick, _) in &self.assignment[1..] {
            bounds = bounds.union(&brick.bounds());
        }
        bounds
    }

    pub fn total_brick_volume(&self) -> f64 {
        self.assignment.iter().map(|(b, _)| b.bounds().volume()).sum()
    }

    /// Relabels owners through a permutation of rank ids.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.ranks {
            return Err(Error::InvalidPartition("permutation length mismatch".into()));
        }
        let mut seen = vec![false; self.ranks];
        for &p in perm {
            if p >= self.ranks || seen[p] {
                return Err(Error::InvalidPartition("not a permutation of rank ids".into()));
            }
            seen[p] = true;
        }
        let assignment = self
            .assignment
            .iter()
            .map(|(b, owner)| (b.clone(), perm[*owner]))
            .collect();
        ScenePartition::new(self.ranks, assignment)
    }
}

/// Piecewise-linear map from scalar values to straight (non-premultiplied)
/// RGBA. Opacity is per unit world distance at the reference step.
#[derive(Clone, Debug)]
pub struct TransferFunction {
    points: Vec<(f64, [f64; 4])>,
}

impl TransferFunction {
    pub fn new(points: Vec<(f64, [f64; 4])>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("transfer function needs at least one point".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidParameter(
                    "transfer function scalars must strictly increase".into(),
                ));
            }
        }
        for (s, rgba) in &points {
            if !s.is_finite() || rgba.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidParameter(
                    "transfer function entries must be finite with channels in [0, 1]".into(),
                ));
            }
        }
        Ok(TransferFunction { points })
    }

    pub fn evaluate(&self, scalar: f64) -> [f64; 4] {
        let pts = &self.points;
        if scalar <= pts[0].0 {
            return pts[0].1;
        }
        if scalar >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let hi = pts.partition_point(|(s, _)| *s < scalar).max(1);
        let (s0, c0) = pts[hi - 1];
        let (s1, c1) = pts[hi];
        let t = (scalar - s0) / (s1 - s0);
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = c0[i] + (c1[i] - c0[i]) * t;
        }
        out
    }

    /// Blue-to-red sweep with constant opacity, for the layered scene.
    pub fn rainbow(opacity: f64) -> Self {
        let a = opacity;
        TransferFunction::new(vec![
            (0.0, [0.0, 0.0, 1.0, a]),
            (0.25, [0.0, 1.0, 1.0, a]),
            (0.5, [0.0, 1.0, 0.0, a]),
            (0.75, [1.0, 1.0, 0.0, a]),
            (1.0, [1.0, 0.0, 0.0, a]),
        ])
        .expect("static table is valid")
    }

    /// Red at scalar 0, blue at scalar 1, for the shell-parity scene.
    pub fn red_blue(opacity: f64) -> Self {
        TransferFunction::new(vec![
            (0.0, [1.0, 0.1, 0.1, opacity]),
            (1.0, [0.1, 0.2, 1.0, opacity]),
        ])
        .expect("static table is valid")
    }

    /// Faint blue background with near-opaque red features.
    pub fn faint_blue_opaque_red() -> Self {
        TransferFunction::new(vec![
            (0.0, [0.1, 0.2, 1.0, 0.02]),
            (1.0, [1.0, 0.05, 0.05, 0.98]),
        ])
        .expect("static table is valid")
    }
}

/// Pinhole camera with a vertical field of view.
#[derive(Clone, Copy, Debug)]
pub struct Camera {
    position: Vec3,
    right: Vec3,
    up: Vec3,
    forward: Vec3,
    tan_half_vfov: f64,
    aspect: f64,
}

impl Camera {
    pub fn look_at(position: Vec3, target: Vec3, up_hint: Vec3, vfov_deg: f64, aspect: f64) -> Result<Self> {
        if !(vfov_deg > 0.0 && vfov_deg < 180.0) {
            return Err(Error::InvalidParameter(format!("vertical fov {vfov_deg} out of range")));
        }
        if !(aspect.is_finite() && aspect > 0.0) {
            return Err(Error::InvalidParameter(format!("aspect ratio {aspect} out of range")));
        }
        let forward = target - position;
        if forward.length() == 0.0 {
            return Err(Error::InvalidParameter("camera position equals target".into()));
        }
        let forward = forward.normalized();
        let right = forward.cross(up_hint);
        if right.length() < 1e-12 {
            return Err(Error::InvalidParameter("camera up is parallel to the view direction".into()));
        }
        let right = right.normalized();
        let up = right.cross(forward);
        Ok(Camera {
            position,
            right,
            up,
            forward,
            tan_half_vfov: (vfov_deg.to_radians() * 0.5).tan(),
            aspect,
        })
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    /// Primary ray through the center of pixel (x, y).
    pub fn ray(&self, x: u32, y: u32, width: u32, height: u32) -> Ray {
        let ndc_x = ((x as f64 + 0.5) / width as f64) * 2.0 - 1.0;
        let ndc_y = 1.0 - ((y as f64 + 0.5) / height as f64) * 2.0;
        let dir = self.forward
            + self.right * (ndc_x * self.tan_half_vfov * self.aspect)
            + self.up * (ndc_y * self.tan_half_vfov);
        Ray {
            origin: self.position,
            dir: dir.normalized(),
        }
    }
}

pub const DEFAULT_VFOV_DEG: f64 = 45.0;
/// Orbit radius as a multiple of the scene's half diagonal. Large enough for
/// the whole bounding box to fit inside a 45 degree frustum.
pub const DEFAULT_ORBIT_RADIUS_SCALE: f64 = 2.8;

/// Cameras on a horizontal circle around the scene center, all looking at the
/// center with +Z up. Azimuth zero sits on the +X axis looking down -X, which
/// faces the layered scene's slabs head on.
pub fn orbit_cameras(bounds: &Aabb, count: usize, radius_scale: f64, aspect: f64) -> Result<Vec<Camera>> {
    if count == 0 {
        return Err(Error::InvalidParameter("orbit needs at least one camera".into()));
    }
    let half_diag = bounds.half_diagonal();
    if !(half_diag > 0.0) {
        return Err(Error::InvalidParameter("degenerate scene bounds".into()));
    }
    let radius = radius_scale * half_diag;
    let center = bounds.center();
    (0..count)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / count as f64;
            let position = center + Vec3::new(theta.cos() * radius, theta.sin() * radius, 0.0);
            Camera::look_at(position, center, Vec3::new(0.0, 0.0, 1.0), DEFAULT_VFOV_DEG, aspect)
        })
        .collect()
}

fn slab_count(ranks: usize) -> usize {
    4 * ranks
}

/// Stack of 4n thin slabs along X, dealt round-robin to n ranks so that
/// consecutive slabs always live on different ranks (for n > 1). Slab k holds
/// the constant scalar k / (4n - 1).
pub fn make_sandwich_scene(ranks: usize, slab_resolution: usize) -> Result<ScenePartition> {
    if ranks == 0 {
        return Err(Error::InvalidPartition("rank count must be at least 1".into()));
    }
    if slab_resolution < 2 {
        return Err(Error::InvalidPartition("slab resolution must be at least 2".into()));
    }
    const SLAB_THICKNESS: usize = 2;
    let slabs = slab_count(ranks);
    let r = slab_resolution;
    let mut assignment = Vec::with_capacity(slabs);
    for k in 0..slabs {
        let scalar = k as f32 / (slabs - 1) as f32;
        let brick = VolumeBrick::new(
            Vec3::new((k * SLAB_THICKNESS) as f64, 0.0, 0.0),
            [SLAB_THICKNESS, r, r],
            1.0,
            vec![scalar; SLAB_THICKNESS * r * r],
        )?;
        assignment.push((brick, k % ranks));
    }
    ScenePartition::new(ranks, assignment)
}

pub fn sandwich_transfer_function() -> TransferFunction {
    TransferFunction::rainbow(0.12)
}

/// Cube of alternating spherical shells: the scalar is the parity of the
/// shell index of each voxel's normalized center distance. Supports 1, 2 or
/// 4 convex bricks, one per rank.
pub fn make_concentric_scene(ranks: usize, resolution: usize, shells: usize) -> Result<ScenePartition> {
    if ![1, 2, 4].contains(&ranks) {
        return Err(Error::InvalidPartition(format!(
            "concentric scene supports 1, 2 or 4 ranks, got {ranks}"
        )));
    }
    if resolution < 4 || resolution % 2 != 0 {
        return Err(Error::InvalidPartition("resolution must be even and at least 4".into()));
    }
    if shells == 0 {
        return Err(Error::InvalidPartition("need at least one shell".into()));
    }
    let res = resolution;
    let half = res as f64 / 2.0;
    let global_origin = Vec3::new(-half, -half, -half);
    let field = shell_parity_field(resolution, shells);

    let mid = res / 2;
    let pieces: Vec<([usize; 3], [usize; 3])> = match ranks {
        1 => vec![([0, 0, 0], [res, res, res])],
        2 => vec![
            ([0, 0, 0], [mid, res, res]),
            ([mid, 0, 0], [mid, res, res]),
        ],
        _ => vec![
            ([0, 0, 0], [mid, mid, res]),
            ([mid, 0, 0], [mid, mid, res]),
            ([0, mid, 0], [mid, mid, res]),
            ([mid, mid, 0], [mid, mid, res]),
        ],
    };
    let assignment = pieces
        .into_iter()
        .enumerate()
        .map(|(rank, (offset, dims))| {
            VolumeBrick::from_field(global_origin, offset, dims, 1.0, &field).map(|b| (b, rank))
        })
        .collect::<Result<Vec<_>>>()?;
    ScenePartition::new(ranks, assignment)
}

pub fn concentric_transfer_function() -> TransferFunction {
    TransferFunction::red_blue(0.05)
}

fn shell_parity_field(resolution: usize, shells: usize) -> impl Fn([usize; 3]) -> f32 {
    let half = resolution as f64 / 2.0;
    move |g: [usize; 3]| -> f32 {
        let p = Vec3::new(
            g[0] as f64 + 0.5 - half,
            g[1] as f64 + 0.5 - half,
            g[2] as f64 + 0.5 - half,
        );
        let r = (p.length() / half).min(1.0);
        let shell = ((r * shells as f64) as usize).min(shells - 1);
        (shell % 2) as f32
    }
}

/// The concentric shell field chopped into `4 * ranks` randomly cut boxes
/// with random owners: the stress case no depth-ordered compositor accepts.
pub fn make_random_scene(ranks: usize, resolution: usize, shells: usize, seed: u64) -> Result<ScenePartition> {
    if resolution < 4 || resolution % 2 != 0 {
        return Err(Error::InvalidPartition("resolution must be even and at least 4".into()));
    }
    if shells == 0 {
        return Err(Error::InvalidPartition("need at least one shell".into()));
    }
    let half = resolution as f64 / 2.0;
    let field = shell_parity_field(resolution, shells);
    random_partition(
        Vec3::new(-half, -half, -half),
        [resolution; 3],
        1.0,
        4 * ranks,
        ranks,
        seed,
        &field,
    )
}

/// Faint homogeneous cube with three near-opaque two-voxel sheets
/// perpendicular to X, split into two half-cube ranks. Rays that cross a
/// sheet see an abrupt transmittance step, the hardest case for the
/// moment summary.
pub fn make_spikes_scene(resolution: usize) -> Result<ScenePartition> {
    if resolution < 12 || resolution % 2 != 0 {
        return Err(Error::InvalidPartition("resolution must be even and at least 12".into()));
    }
    let res = resolution;
    let half = res as f64 / 2.0;
    let global_origin = Vec3::new(-half, -half, -half);
    let sheets = [res / 3, res / 2, 2 * res / 3];
    let field = move |g: [usize; 3]| -> f32 {
        if sheets.iter().any(|&s| g[0] == s || g[0] == s + 1) {
            1.0
        } else {
            0.0
        }
    };
    let mid = res / 2;
    let assignment = vec![
        (VolumeBrick::from_field(global_origin, [0, 0, 0], [mid, res, res], 1.0, &field)?, 0),
        (VolumeBrick::from_field(global_origin, [mid, 0, 0], [mid, res, res], 1.0, &field)?, 1),
    ];
    ScenePartition::new(2, assignment)
}

pub fn spikes_transfer_function() -> TransferFunction {
    TransferFunction::faint_blue_opaque_red()
}

/// Splits one voxel grid into randomly cut axis-aligned pieces with random
/// owners. Voxels are filled from the global field, so any two partitions of
/// the same grid hold bitwise-identical data.
pub fn random_partition(
    global_origin: Vec3,
    dims: [usize; 3],
    spacing: f64,
    pieces: usize,
    ranks: usize,
    seed: u64,
    field: &dyn Fn([usize; 3]) -> f32,
) -> Result<ScenePartition> {
    if pieces == 0 || ranks == 0 {
        return Err(Error::InvalidPartition("pieces and ranks must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boxes = vec![([0usize; 3], dims)];
    while boxes.len() < pieces {
        // split the largest splittable box on a random axis
        let idx = boxes
            .iter()
            .enumerate()
            .max_by_key(|(_, (_, d))| d[0] * d[1] * d[2])
            .map(|(i, _)| i)
            .unwrap();
        let (offset, size) = boxes[idx];
        let axes: Vec<usize> = (0..3).filter(|&a| size[a] >= 2).collect();
        if axes.is_empty() {
            break;
        }
        let axis = axes[rng.gen_range(0..axes.len())];
        let cut = rng.gen_range(1..size[axis]);
        let mut lo_size = size;
        lo_size[axis] = cut;
        let mut hi_offset = offset;
        hi_offset[axis] += cut;
        let mut hi_size = size;
        hi_size[axis] -= cut;
        boxes.swap_remove(idx);
        boxes.push((offset, lo_size));
        boxes.push((hi_offset, hi_size));
    }
    let assignment = boxes
        .into_iter()
        .map(|(offset, size)| {
            let owner = rng.gen_range(0..ranks);
            VolumeBrick::from_field(global_origin, offset, size, spacing, field).map(|b| (b, owner))
        })
        .collect::<Result<Vec<_>>>()?;
    ScenePartition::new(ranks, assignment)
}

/// Named scene families understood by the command line tools.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    Sandwich,
    Concentric,
    Spikes,
    Random,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sandwich" => Ok(SceneKind::Sandwich),
            "concentric" => Ok(SceneKind::Concentric),
            "spikes" => Ok(SceneKind::Spikes),
            "random" => Ok(SceneKind::Random),
            other => Err(Error::InvalidParameter(format!(
                "unknown scene '{other}' (expected sandwich, concentric, spikes or random)"
            ))),
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SceneKind::Sandwich => "sandwich",
            SceneKind::Concentric => "concentric",
            SceneKind::Spikes => "spikes",
            SceneKind::Random => "random",
        })
    }
}

/// Reproducible scene description: kind plus the few parameters the
/// generators take. `resolution` of `None` picks the kind's default; `seed`
/// only matters for the random partition.
#[derive(Clone, Copy, Debug)]
pub struct SceneDesc {
    pub kind: SceneKind,
    pub ranks: usize,
    pub resolution: Option<usize>,
    pub shells: usize,
    pub seed: u64,
}

pub const DEFAULT_SHELLS: usize = 5;

impl SceneDesc {
    pub fn new(kind: SceneKind, ranks: usize) -> Self {
        SceneDesc {
            kind,
            ranks,
            resolution: None,
            shells: DEFAULT_SHELLS,
            seed: 0,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution.unwrap_or(match self.kind {
            SceneKind::Sandwich => 64,
            SceneKind::Concentric => 128,
            SceneKind::Spikes => 96,
            SceneKind::Random => 64,
        })
    }

    pub fn build(&self) -> Result<(ScenePartition, TransferFunction)> {
        let res = self.resolution();
        match self.kind {
            SceneKind::Sandwich => Ok((
                make_sandwich_scene(self.ranks, res)?,
                sandwich_transfer_function(),
            )),
            SceneKind::Concentric => Ok((
                make_concentric_scene(self.ranks, res, self.shells)?,
                concentric_transfer_function(),
            )),
            SceneKind::Spikes => {
                if self.ranks != 2 {
                    return Err(Error::InvalidPartition(
                        "spikes scene is defined for exactly 2 ranks".into(),
                    ));
                }
                Ok((make_spikes_scene(res)?, spikes_transfer_function()))
            }
            SceneKind::Random => Ok((
                make_random_scene(self.ranks, res, self.shells, self.seed)?,
                concentric_transfer_function(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trilinear_interpolates_between_voxel_centers() {
        let brick = VolumeBrick::new(
            Vec3::ZERO,
            [2, 2, 2],
            1.0,
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        // voxel centers at x = 0.5 and 1.5; halfway between them
        let v = brick.sample(Vec3::new(1.0, 0.5, 0.5));
        assert!((v - 0.5).abs() < 1e-12);
        // clamped outside the center lattice
        assert_eq!(brick.sample(Vec3::new(-5.0, 0.5, 0.5)), 0.0);
        assert_eq!(brick.sample(Vec3::new(5.0, 0.5, 0.5)), 1.0);
    }

    #[test]
    fn sandwich_tiles_its_bounds_exactly() {
        for ranks in [1, 2, 3, 8] {
            let scene = make_sandwich_scene(ranks, 16).unwrap();
            assert_eq!(scene.brick_count(), 4 * ranks);
            let bounds = scene.world_bounds();
            assert!((scene.total_brick_volume() - bounds.volume()).abs() < 1e-9);
            for rank in 0..ranks {
                assert_eq!(scene.bricks_of(rank).len(), 4);
            }
        }
    }

    #[test]
    fn sandwich_round_robin_separates_neighbors() {
        let scene = make_sandwich_scene(3, 8).unwrap();
        let owners: Vec<usize> = scene.assignment().iter().map(|(_, o)| *o).collect();
        for w in owners.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn concentric_splits_hold_identical_voxels() {
        let whole = make_concentric_scene(1, 16, 4).unwrap();
        let quads = make_concentric_scene(4, 16, 4).unwrap();
        assert!((whole.total_brick_volume() - quads.total_brick_volume()).abs() < 1e-9);
        assert_eq!(whole.world_bounds(), quads.world_bounds());
        // spot-check voxels through world-space sampling at voxel centers
        let whole_brick = &whole.assignment()[0].0;
        for (brick, _) in quads.assignment() {
            let b = brick.bounds();
            let probe = b.center();
            assert_eq!(brick.sample(probe), whole_brick.sample(probe));
        }
    }

    #[test]
    fn concentric_rejects_unsupported_rank_counts() {
        assert!(make_concentric_scene(3, 16, 4).is_err());
        assert!(make_concentric_scene(8, 16, 4).is_err());
    }

    #[test]
    fn spikes_sheets_sit_in_both_halves() {
        let scene = make_spikes_scene(24).unwrap();
        assert_eq!(scene.ranks(), 2);
        let left = &scene.bricks_of(0)[0];
        let right = &scene.bricks_of(1)[0];
        let has_feature = |b: &VolumeBrick| {
            let d = b.dims();
            (0..d[0]).any(|i| b.voxel(i, d[1] / 2, d[2] / 2) == 1.0)
        };
        assert!(has_feature(left));
        assert!(has_feature(right));
    }

    #[test]
    fn overlapping_bricks_are_rejected() {
        let a = VolumeBrick::new(Vec3::ZERO, [4, 4, 4], 1.0, vec![0.0; 64]).unwrap();
        let b = VolumeBrick::new(Vec3::new(2.0, 0.0, 0.0), [4, 4, 4], 1.0, vec![0.0; 64]).unwrap();
        assert!(ScenePartition::new(2, vec![(a, 0), (b, 1)]).is_err());
    }

    #[test]
    fn touching_bricks_are_valid() {
        let a = VolumeBrick::new(Vec3::ZERO, [4, 4, 4], 1.0, vec![0.0; 64]).unwrap();
        let b = VolumeBrick::new(Vec3::new(4.0, 0.0, 0.0), [4, 4, 4], 1.0, vec![0.0; 64]).unwrap();
        assert!(ScenePartition::new(2, vec![(a, 0), (b, 1)]).is_ok());
    }

    #[test]
    fn permutation_relabels_owners() {
        let scene = make_sandwich_scene(3, 8).unwrap();
        let permuted = scene.permuted(&[2, 0, 1]).unwrap();
        for ((_, before), (_, after)) in scene.assignment().iter().zip(permuted.assignment()) {
            assert_eq!([2, 0, 1][*before], *after);
        }
        assert!(scene.permuted(&[0, 0, 1]).is_err());
        assert!(scene.permuted(&[0, 1]).is_err());
    }

    #[test]
    fn random_partition_is_disjoint_and_covers_the_grid() {
        let field = |g: [usize; 3]| (g[0] + g[1] + g[2]) as f32;
        for seed in 0..5 {
            let part = random_partition(Vec3::ZERO, [12, 10, 8], 1.0, 9, 4, seed, &field).unwrap();
            let vol: f64 = part.total_brick_volume();
            assert!((vol - 12.0 * 10.0 * 8.0).abs() < 1e-9);
            assert_eq!(part.world_bounds(), Aabb::new(Vec3::ZERO, Vec3::new(12.0, 10.0, 8.0)));
        }
    }

    #[test]
    fn transfer_function_interpolates_and_clamps() {
        let tf = TransferFunction::new(vec![
            (0.0, [0.0, 0.0, 0.0, 0.0]),
            (1.0, [1.0, 0.5, 0.0, 1.0]),
        ])
        .unwrap();
        assert_eq!(tf.evaluate(-1.0), [0.0, 0.0, 0.0, 0.0]);
        assert_eq!(tf.evaluate(2.0), [1.0, 0.5, 0.0, 1.0]);
        let mid = tf.evaluate(0.5);
        assert!((mid[0] - 0.5).abs() < 1e-12);
        assert!((mid[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn camera_rays_pass_through_the_target() {
        let cam = Camera::look_at(
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 1.0),
            45.0,
            1.0,
        )
        .unwrap();
        let center = cam.ray(2, 2, 5, 5);
        // the middle pixel of an odd grid looks straight at the target
        assert!((center.dir - Vec3::new(-1.0, 0.0, 0.0)).length() < 1e-12);
        let corner = cam.ray(0, 0, 5, 5);
        assert!(corner.dir.dot(center.dir) > 0.8);
    }

    #[test]
    fn orbit_surrounds_the_scene() {
        let bounds = Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let cams = orbit_cameras(&bounds, 8, DEFAULT_ORBIT_RADIUS_SCALE, 1.0).unwrap();
        assert_eq!(cams.len(), 8);
        for cam in &cams {
            let d = (cam.position() - bounds.center()).length();
            assert!((d - DEFAULT_ORBIT_RADIUS_SCALE * bounds.half_diagonal()).abs() < 1e-9);
        }
        // azimuth zero looks down -X
        let r = cams[0].ray(0, 0, 1, 1);
        assert!((r.dir - Vec3::new(-1.0, 0.0, 0.0)).length() < 1e-12);
    }

    #[test]
    fn scene_desc_builds_all_kinds() {
        for (kind, ranks) in [
            (SceneKind::Sandwich, 3),
            (SceneKind::Concentric, 2),
            (SceneKind::Spikes, 2),
            (SceneKind::Random, 5),
        ] {
            let mut desc = SceneDesc::new(kind, ranks);
            desc.resolution = Some(16);
            let (scene, _tf) = desc.build().unwrap();
            assert_eq!(scene.ranks(), ranks);
        }
        assert!(SceneDesc::new(SceneKind::Spikes, 3).build().is_err());

        let mut a = SceneDesc::new(SceneKind::Random, 3);
        a.resolution = Some(16);
        a.seed = 9;
        let (first, _) = a.build().unwrap();
        let (second, _) = a.build().unwrap();
        assert_eq!(first.brick_count(), second.brick_count());
        for ((ba, oa), (bb, ob)) in first.assignment().iter().zip(second.assignment()) {
            assert_eq!(oa, ob);
            assert_eq!(ba.bounds(), bb.bounds());
        }
    }
}
