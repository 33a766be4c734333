//! 6DoF snapping: a translation search by cross-correlating object and kit
//! features around the hint, then a rotation search scoring sampled
//! orientations on labelled point clouds.

pub mod correlate;
pub mod encode;
pub mod rotation;

use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::completion::partial_occupancy;
use crate::error::{Error, Result};
use crate::geom::pose::{quat_to_xyzw, Pose, DEG};
use crate::geom::volume::{GridSpec, VolumeKind, VoxelVolume};
use crate::kitgen::KitSpec;
use correlate::correlate_valid;
pub use encode::{encoder, Encoder, Kernel, PlainOccupancy, SignedOccupancy};
pub use rotation::{rotation_snap, sample_rotations, scorer, FitScorer, ScoreContext, Scorer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnapConfig {
    /// Per-axis position search radius, meters.
    pub delta_position: f64,
    /// Orientation search radius (geodesic), radians.
    pub delta_orientation: f64,
    pub n_rotations: usize,
    /// Ignore any hint and search the whole kit volume.
    pub uninformed: bool,
    /// Uninformed sampling ranges, radians (symmetric).
    pub roll_pitch_range: f64,
    pub yaw_range: f64,
    pub scorer: String,
    pub encoder: String,
    /// Object-kit clearance the kits were built with; the scorer counts
    /// points within twice this of the kit surface as contact.
    pub margin: f64,
    pub n_object_points: usize,
    pub n_kit_points: usize,
    /// Edge of the kit crop used by the rotation search, voxels.
    pub rotation_crop: usize,
    /// Half-width (voxels) of the translation re-search run with the
    /// chosen orientation; 0 keeps the first translation.
    pub refine_radius: usize,
    /// Largest back-off along the insertion axis used to clear the kit
    /// surface, meters; 0 disables seating.
    pub seat_backoff: f64,
    /// Part of the `n_rotations` budget spent on local rounds sampled
    /// around the running winner; capped at half the budget.
    pub fine_rotations: usize,
    /// Number of local rounds; the radius halves after each.
    pub fine_rounds: usize,
    /// Orientation radius of the first local round, radians.
    pub fine_orientation: f64,
    pub seed: u64,
}

impl Default for SnapConfig {
    fn default() -> Self {
        Self {
            delta_position: 0.028,
            delta_orientation: 27.5 * DEG,
            n_rotations: 391,
            uninformed: false,
            roll_pitch_range: 15.0 * DEG,
            yaw_range: 180.0 * DEG,
            scorer: "fit".into(),
            encoder: "signed-occupancy".into(),
            margin: 0.0025,
            n_object_points: 2048,
            n_kit_points: 4096,
            rotation_crop: 128,
            refine_radius: 4,
            seat_backoff: 0.004,
            fine_rotations: 160,
            fine_rounds: 4,
            fine_orientation: 8.0 * DEG,
            seed: 0,
        }
    }
}

impl SnapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rotations < 1 {
            return Err(Error::invalid("n_rotations must be at least 1"));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.delta_position) || !positive(self.delta_orientation) {
            return Err(Error::invalid("search radii must be positive"));
        }
        if !(self.fine_orientation >= 0.0 && self.fine_orientation.is_finite()) {
            return Err(Error::invalid("fine_orientation must be non-negative"));
        }
        if !(self.seat_backoff >= 0.0 && self.seat_backoff.is_finite()) {
            return Err(Error::invalid("seat_backoff must be non-negative"));
        }
        if !positive(self.margin) || self.n_object_points == 0 || self.n_kit_points == 0 || self.rotation_crop == 0 {
            return Err(Error::invalid("margin, point counts and crop size must be positive"));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.roll_pitch_range)
            || !(0.0..=std::f64::consts::PI).contains(&self.yaw_range)
        {
            return Err(Error::invalid("sampling ranges must lie in [0, pi]"));
        }
        encoder(&self.encoder)?;
        scorer(&self.scorer)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationScore {
    /// `[x, y, z, w]`
    pub q: [f64; 4],
    pub score: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapTiming {
    pub position_ms: f64,
    pub rotation_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapResult {
    pub pose: Pose,
    pub position_score: f64,
    pub rotation_scores: Vec<RotationScore>,
    /// (translation candidates correlated, rotation candidates scored)
    pub candidates_evaluated: (usize, usize),
    pub timing_ms: SnapTiming,
}

/// Odd voxel count covering `2 * delta`, so a voxel sits exactly at the
/// center.
pub fn crop_side(delta: f64, voxel_size: f64) -> usize {
    let n = ((2.0 * delta / voxel_size) - 1e-9).ceil().max(1.0) as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Cube of side `2 * delta` (odd voxel count) around the voxel containing
/// `center`. Voxels outside `v` read as empty.
pub fn crop_kit_volume(v: &VoxelVolume, center: &Vector3<f64>, delta: f64) -> Result<VoxelVolume> {
    if !v.grid.bounds().contains(center) {
        return Err(Error::OutOfBounds(format!("crop center {center:?} outside the kit volume")));
    }
    let g = v.grid;
    let n = crop_side(delta, g.voxel_size);
    let h = g.voxel_signed(center);
    let half = (n / 2) as i64;
    let origin = g.center_signed(h.map(|c| c - half)) - Vector3::repeat(g.voxel_size / 2.0);
    let window = GridSpec {
        origin,
        voxel_size: g.voxel_size,
        dims: [n; 3],
    };
    let pad = match v.kind {
        VolumeKind::Tsdf => 1.0,
        _ => 0.0,
    };
    v.crop_to(&window, pad)
}

/// Lattice corner nearest to `p`, as integer coordinates of `g`.
fn nearest_corner(g: &GridSpec, p: &Vector3<f64>) -> [i64; 3] {
    let r = (p - g.origin) / g.voxel_size;
    [r.x.round() as i64, r.y.round() as i64, r.z.round() as i64]
}

/// Candidate grid for object-origin positions: voxel centers of the
/// returned grid are lattice corners of `kit`, `n` per axis around the
/// corner `c`.
pub fn candidate_window(kit: &GridSpec, c: [i64; 3], n: [usize; 3]) -> GridSpec {
    let s = kit.voxel_size;
    let lo = [0, 1, 2].map(|a| c[a] - (n[a] / 2) as i64);
    GridSpec {
        origin: kit.origin + Vector3::new(lo[0] as f64 - 0.5, lo[1] as f64 - 0.5, lo[2] as f64 - 0.5) * s,
        voxel_size: s,
        dims: n,
    }
}

/// Candidates around the hint: the `2 * delta` crop, centered on the
/// lattice corner nearest the hint.
pub fn hint_window(kit: &GridSpec, hint: &Vector3<f64>, delta: f64) -> Result<GridSpec> {
    if !kit.bounds().contains(hint) {
        return Err(Error::OutOfBounds(format!("hint {hint:?} outside the kit volume")));
    }
    let n = crop_side(delta, kit.voxel_size);
    Ok(candidate_window(kit, nearest_corner(kit, hint), [n; 3]))
}

/// Every lattice corner strictly inside `kit`.
pub fn full_window(kit: &GridSpec) -> GridSpec {
    let s = kit.voxel_size;
    GridSpec {
        origin: kit.origin + Vector3::repeat(s / 2.0),
        voxel_size: s,
        dims: kit.dims.map(|d| d.saturating_sub(1).max(1)),
    }
}

#[derive(Clone, Copy, Debug)]
pub enum TieBreak {
    /// Smallest distance to this point, then lexicographic.
    Nearest(Vector3<f64>),
    /// Smallest x-fastest index (z, then y, then x).
    Lexicographic,
}

#[derive(Clone, Debug)]
pub struct PositionSnap {
    /// Best object-origin position.
    pub p: Vector3<f64>,
    pub score: f64,
    /// Correlation scores; voxel centers of the grid are the candidate
    /// positions.
    pub scores: VoxelVolume,
    pub n_positions: usize,
}

/// Correlate the kernel over kit features at every candidate of `window`
/// (grid whose voxel centers are lattice corners of `kit`), and return the
/// best allowed candidate.
pub fn position_snap(
    kernel: &Kernel,
    kit: &VoxelVolume,
    encoder: &dyn Encoder,
    window: &GridSpec,
    allowed: &dyn Fn(&Vector3<f64>) -> bool,
    tie: TieBreak,
) -> Result<PositionSnap> {
    if kernel.weights.iter().all(|&w| w == 0.0) {
        return Err(Error::EmptyInput("object kernel is empty".into()));
    }
    let kg = kit.grid;
    let s = kg.voxel_size;
    if (window.voxel_size - s).abs() > 1e-12 * s {
        return Err(Error::invalid("object and kit voxel sizes differ"));
    }
    let w = (window.origin - kg.origin) / s + Vector3::repeat(0.5);
    let wr = w.map(|v| v.round());
    if (w - wr).amax() > 1e-4 {
        return Err(Error::invalid("candidate window is not on the kit lattice corners"));
    }
    let w0 = [wr.x as i64, wr.y as i64, wr.z as i64];
    let base = [0, 1, 2].map(|a| w0[a] + kernel.lo[a]);
    let free = encoder.kit_value(false);
    let solid = encoder.kit_value(true);
    let signal = |r: [usize; 3]| match kit.get_signed([base[0] + r[0] as i64, base[1] + r[1] as i64, base[2] + r[2] as i64]) {
        Some(v) if kit.is_solid_value(v) => solid,
        Some(_) => free,
        None => 0.0,
    };
    let raw = correlate_valid(signal, &kernel.weights, kernel.dims, window.dims);
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, v) in raw.iter().enumerate() {
        let [x, y, z] = window.coords(i);
        let c = window.center(x, y, z);
        if !allowed(&c) {
            continue;
        }
        let v = v.round();
        let d = match tie {
            TieBreak::Nearest(h) => (c - h).norm_squared(),
            TieBreak::Lexicographic => 0.0,
        };
        let better = match best {
            None => true,
            Some((_, bv, bd)) => v > bv || (v == bv && d < bd),
        };
        if better {
            best = Some((i, v, d));
        }
    }
    let (i, score, _) = best.ok_or_else(|| Error::invalid("no allowed position candidates"))?;
    let [x, y, z] = window.coords(i);
    Ok(PositionSnap {
        p: window.center(x, y, z),
        score,
        scores: VoxelVolume {
            grid: *window,
            kind: VolumeKind::Feature,
            data: raw.iter().map(|v| v.round() as f32).collect(),
        },
        n_positions: window.len(),
    })
}

/// Inputs of one snap: the completed object in its own frame and the
/// completed kit side in world coordinates, on the same voxel size.
#[derive(Clone, Copy, Debug)]
pub struct SnapInputs<'a> {
    pub object: &'a VoxelVolume,
    pub kit: &'a VoxelVolume,
}

/// Overrides for tests and experiments.
#[derive(Clone, Copy, Default)]
pub struct SnapHooks<'a> {
    pub scorer: Option<&'a dyn Scorer>,
    pub encoder: Option<&'a dyn Encoder>,
    /// Extra rotation candidate.
    pub include: Option<UnitQuaternion<f64>>,
}

pub fn snap_pose(inputs: &SnapInputs<'_>, hint: Option<&Pose>, cfg: &SnapConfig) -> Result<SnapResult> {
    snap_pose_with(inputs, hint, cfg, &SnapHooks::default())
}

fn within(a: &Vector3<f64>, b: &Vector3<f64>, delta: f64) -> bool {
    (a - b).amax() <= delta + 1e-12
}

pub fn snap_pose_with(
    inputs: &SnapInputs<'_>,
    hint: Option<&Pose>,
    cfg: &SnapConfig,
    hooks: &SnapHooks<'_>,
) -> Result<SnapResult> {
    cfg.validate()?;
    let t0 = Instant::now();
    let hint = if cfg.uninformed { None } else { hint };
    if !cfg.uninformed && hint.is_none() {
        return Err(Error::invalid("informed snapping needs a hint"));
    }
    if let Some(h) = hint {
        if !h.is_finite() {
            return Err(Error::invalid("hint pose is not finite"));
        }
    }
    let object = partial_occupancy(inputs.object);
    let kit = partial_occupancy(inputs.kit);
    let s = kit.grid.voxel_size;
    if (object.grid.voxel_size - s).abs() > 1e-12 * s {
        return Err(Error::invalid("object and kit volumes differ in voxel size"));
    }
    let centroid = object
        .solid_centroid()
        .ok_or_else(|| Error::EmptyInput("completed object volume is empty".into()))?;
    let own_encoder;
    let enc: &dyn Encoder = match hooks.encoder {
        Some(e) => e,
        None => {
            own_encoder = encoder(&cfg.encoder)?;
            own_encoder.as_ref()
        }
    };
    let own_scorer;
    let sc: &dyn Scorer = match hooks.scorer {
        Some(x) => x,
        None => {
            own_scorer = scorer(&cfg.scorer)?;
            own_scorer.as_ref()
        }
    };
    let weights = enc.object_weights(&object);
    let q_ref = hint.map(|h| h.q).unwrap_or_else(UnitQuaternion::identity);

    // translation
    let kernel = Kernel::rotated(&weights, &q_ref)?;
    let ball = |c: &Vector3<f64>| hint.is_none_or(|h| within(c, &h.p, cfg.delta_position));
    let (window, tie) = match hint {
        Some(h) => (hint_window(&kit.grid, &h.p, cfg.delta_position)?, TieBreak::Nearest(h.p)),
        None => (full_window(&kit.grid), TieBreak::Lexicographic),
    };
    let pos = position_snap(&kernel, &kit, enc, &window, &ball, tie)?;
    let t_pos = t0.elapsed();

    // rotation about the object centroid
    let n = cfg.rotation_crop;
    let crop_grid = candidate_window(&kit.grid, nearest_corner(&kit.grid, &pos.p), [n; 3]);
    let crop_grid = GridSpec {
        origin: crop_grid.origin + Vector3::repeat(s / 2.0),
        ..crop_grid
    };
    let crop = kit.crop_to(&crop_grid, 0.0)?;
    let (obj_pts, kit_pts) =
        rotation::sample_clouds(&object, &crop, cfg.n_object_points, cfg.n_kit_points, cfg.seed)?;
    let ctx = ScoreContext::new(&crop, &kit_pts, 2.0 * cfg.margin);
    let n_fine = cfg.fine_rotations.min(cfg.n_rotations / 2);
    let coarse_cfg = SnapConfig {
        n_rotations: cfg.n_rotations - n_fine,
        ..cfg.clone()
    };
    let mut candidates = sample_rotations(&q_ref, &coarse_cfg, hooks.include.as_ref(), cfg.seed ^ 0x726f_7473);
    let pivot_world = pos.p + q_ref * centroid;
    let mut rot = rotation_snap(&obj_pts, &centroid, &pivot_world, &ctx, &kit_pts, &candidates, sc)?;
    let mut p = pivot_world - rot.q * centroid;

    // settle the translation for the chosen orientation
    let refine = |p: Vector3<f64>, q: &UnitQuaternion<f64>| -> Result<Vector3<f64>> {
        if cfg.refine_radius == 0 {
            return Ok(p);
        }
        let kernel = Kernel::rotated(&weights, q)?;
        let r = 2 * cfg.refine_radius + 1;
        let window = candidate_window(&kit.grid, nearest_corner(&kit.grid, &p), [r; 3]);
        match position_snap(&kernel, &kit, enc, &window, &ball, TieBreak::Nearest(p)) {
            Ok(refined) => Ok(refined.p),
            Err(Error::InvalidArgument(_)) => Ok(p),
            Err(e) => Err(e),
        }
    };
    p = refine(p, &rot.q)?;

    // narrower rounds about the settled pivot, each around the running
    // winner, which is rescored there as the round's first candidate
    let rounds = cfg.fine_rounds.clamp(1, n_fine.max(1));
    let mut radius = cfg.fine_orientation;
    for round in 0..rounds {
        let count = n_fine / rounds + usize::from(round < n_fine % rounds);
        if count == 0 {
            break;
        }
        let fine_cfg = SnapConfig {
            n_rotations: count,
            uninformed: false,
            delta_orientation: radius.max(1e-9),
            ..cfg.clone()
        };
        let mut fine = sample_rotations(&rot.q, &fine_cfg, None, cfg.seed ^ 0x6669_6e65 ^ round as u64);
        if hint.is_some() {
            for q in &mut fine {
                *q = into_ball(&q_ref, q, cfg.delta_orientation);
            }
        }
        let pivot_world = p + rot.q * centroid;
        let next = rotation_snap(&obj_pts, &centroid, &pivot_world, &ctx, &kit_pts, &fine, sc)?;
        rot.best = candidates.len() + next.best;
        rot.q = next.q;
        candidates.extend_from_slice(&fine);
        rot.scores.extend_from_slice(&next.scores);
        p = refine(pivot_world - rot.q * centroid, &rot.q)?;
        radius *= 0.5;
    }
    if cfg.seat_backoff > 0.0 {
        p = seat(&object, &kit, &Pose::new(p, rot.q), cfg.seat_backoff).p;
    }
    if let Some(h) = hint {
        for a in 0..3 {
            p[a] = p[a].clamp(h.p[a] - cfg.delta_position, h.p[a] + cfg.delta_position);
        }
    }
    let total = t0.elapsed();
    Ok(SnapResult {
        pose: Pose::new(p, rot.q),
        position_score: pos.score,
        rotation_scores: candidates
            .iter()
            .zip(&rot.scores)
            .map(|(q, &score)| RotationScore { q: quat_to_xyzw(q), score })
            .collect(),
        candidates_evaluated: (pos.n_positions, candidates.len()),
        timing_ms: SnapTiming {
            position_ms: t_pos.as_secs_f64() * 1e3,
            rotation_ms: (total - t_pos).as_secs_f64() * 1e3,
            total_ms: total.as_secs_f64() * 1e3,
        },
    })
}

/// `q` moved along the geodesic toward `center` until it lies within
/// `radius` of it.
fn into_ball(center: &UnitQuaternion<f64>, q: &UnitQuaternion<f64>, radius: f64) -> UnitQuaternion<f64> {
    let a = center.angle_to(q);
    if a <= radius {
        return *q;
    }
    let q = if center.coords.dot(&q.coords) < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        *q
    };
    center.slerp(&q, radius / a * (1.0 - 1e-12))
}

/// Back `pose` off along the object's insertion axis, in quarter-voxel
/// steps up to `max_backoff`, until no object surface voxel lies within half
/// a voxel of kit solid. Returns `pose` unchanged if nothing clears.
pub fn seat(object: &VoxelVolume, kit: &VoxelVolume, pose: &Pose, max_backoff: f64) -> Pose {
    let g = object.grid;
    let s = kit.grid.voxel_size;
    let pts: Vec<Vector3<f64>> = object
        .boundary_voxels(true)
        .into_iter()
        .map(|[x, y, z]| g.center(x, y, z))
        .collect();
    let h = s / 2.0;
    let probes = [
        Vector3::zeros(),
        Vector3::new(h, 0.0, 0.0),
        Vector3::new(-h, 0.0, 0.0),
        Vector3::new(0.0, h, 0.0),
        Vector3::new(0.0, -h, 0.0),
        Vector3::new(0.0, 0.0, h),
        Vector3::new(0.0, 0.0, -h),
    ];
    let clear = |pose: &Pose| {
        pts.iter().all(|p| {
            let w = pose.transform_point(p);
            probes.iter().all(|d| !kit.solid_at_point(&(w + d)))
        })
    };
    let axis = pose.q * Vector3::from(KitSpec::INSERTION_AXIS);
    let step = s / 4.0;
    let n = (max_backoff / step).floor() as usize;
    (0..=n)
        .map(|k| Pose::new(pose.p + axis * (k as f64 * step), pose.q))
        .find(|c| clear(c))
        .unwrap_or(*pose)
}
