use std::collections::HashMap;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SnapConfig;
use crate::error::{Error, Result};
use crate::geom::pose::{canonical, quat_from_axis_angle, quat_from_ypr};
use crate::geom::sample::{sample_surface_points, LabeledPointCloud};
use crate::geom::volume::{VoxelVolume, NEIGHBORS6};

pub const OBJECT_LABEL: i8 = 1;
pub const KIT_LABEL: i8 = -1;

/// Candidate orientations. Informed: `n_rotations - 1` draws of a uniform
/// axis and an angle uniform in `[0, delta_orientation]` applied to
/// `q_hint`, plus `include` (or `q_hint` itself) first. Uninformed: yaw,
/// pitch and roll drawn uniformly within their ranges, with `include`
/// replacing the first draw when given.
pub fn sample_rotations(
    q_hint: &UnitQuaternion<f64>,
    cfg: &SnapConfig,
    include: Option<&UnitQuaternion<f64>>,
    seed: u64,
) -> Vec<UnitQuaternion<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_rotations;
    let mut out = Vec::with_capacity(n);
    if cfg.uninformed {
        let ypr = |rng: &mut ChaCha8Rng| {
            let yaw = rng.random_range(-cfg.yaw_range..=cfg.yaw_range);
            let pitch = rng.random_range(-cfg.roll_pitch_range..=cfg.roll_pitch_range);
            let roll = rng.random_range(-cfg.roll_pitch_range..=cfg.roll_pitch_range);
            quat_from_ypr(yaw, pitch, roll)
        };
        if let Some(q) = include {
            out.push(canonical(*q));
        }
        while out.len() < n {
            out.push(ypr(&mut rng));
        }
        return out;
    }
    out.push(canonical(*include.unwrap_or(q_hint)));
    while out.len() < n {
        let axis = loop {
            let v = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let v: Vector3<f64> = v;
            if v.norm() > 1e-9 {
                break v;
            }
        };
        let angle = rng.random_range(0.0..=cfg.delta_orientation);
        out.push(canonical(quat_from_axis_angle(&axis, angle) * q_hint));
    }
    out
}

/// Precomputed kit side of the rotation search.
pub struct ScoreContext {
    pub kit: VoxelVolume,
    /// Kit solid with more than one voxel of solid around it.
    deep: Vec<bool>,
    kit_points: Vec<Vector3<f64>>,
    cells: HashMap<[i64; 3], Vec<u32>>,
    cell: f64,
    /// Surface band counted as contact.
    pub band: f64,
}

impl ScoreContext {
    pub fn new(kit_crop: &VoxelVolume, kit_points: &LabeledPointCloud, band: f64) -> Self {
        let g = kit_crop.grid;
        let deep = (0..g.len())
            .map(|i| {
                let [x, y, z] = g.coords(i);
                kit_crop.solid_at(x, y, z)
                    && NEIGHBORS6.iter().all(|o| {
                        kit_crop
                            .get_signed([x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]])
                            .is_none_or(|v| kit_crop.is_solid_value(v))
                    })
            })
            .collect();
        let cell = band.max(g.voxel_size);
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in kit_points.points.iter().enumerate() {
            cells.entry(cell_of(p, cell)).or_default().push(i as u32);
        }
        Self {
            kit: kit_crop.clone(),
            deep,
            kit_points: kit_points.points.clone(),
            cells,
            cell,
            band,
        }
    }

    pub fn inside(&self, p: &Vector3<f64>) -> bool {
        self.kit.grid.voxel_of(p).is_some_and(|[x, y, z]| self.deep[self.kit.grid.index(x, y, z)])
    }

    /// In a kit solid voxel on the kit surface layer.
    pub fn shallow(&self, p: &Vector3<f64>) -> bool {
        self.kit.grid.voxel_of(p).is_some_and(|[x, y, z]| {
            self.kit.solid_at(x, y, z) && !self.deep[self.kit.grid.index(x, y, z)]
        })
    }

    /// Distance to the nearest kit point, capped at `band`.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        let c = cell_of(p, self.cell);
        let mut best = self.band * self.band;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &i in ids {
                            best = best.min((self.kit_points[i as usize] - p).norm_squared());
                        }
                    }
                }
            }
        }
        best.sqrt()
    }
}

fn cell_of(p: &Vector3<f64>, cell: f64) -> [i64; 3] {
    [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
}

/// Scores one rotated object cloud joined with the kit cloud.
pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, cloud: &LabeledPointCloud, ctx: &ScoreContext) -> f64;
}

/// Contact fraction minus four times the penetration fraction, less a
/// small clearance term that prefers evenly spread gaps to the kit.
#[derive(Clone, Copy, Debug)]
pub struct FitScorer {
    pub clearance_weight: f64,
}

impl Default for FitScorer {
    fn default() -> Self {
        Self { clearance_weight: 0.5 }
    }
}

impl Scorer for FitScorer {
    fn name(&self) -> &str {
        "fit"
    }

    fn score(&self, cloud: &LabeledPointCloud, ctx: &ScoreContext) -> f64 {
        let (mut n, mut contact, mut inside, mut gap) = (0usize, 0usize, 0.0, 0.0);
        for (p, &l) in cloud.points.iter().zip(&cloud.labels) {
            if l != OBJECT_LABEL {
                continue;
            }
            n += 1;
            if ctx.inside(p) {
                inside += 1.0;
                continue;
            }
            if ctx.shallow(p) {
                inside += SHALLOW;
            }
            let d = ctx.surface_distance(p);
            if d < ctx.band {
                contact += 1;
            }
            gap += (d / ctx.band).powi(2);
        }
        if n == 0 {
            return f64::NEG_INFINITY;
        }
        let n = n as f64;
        contact as f64 / n - 4.0 * inside / n - self.clearance_weight * gap / n
    }
}

const SHALLOW: f64 = 0.5;

pub fn scorer(name: &str) -> Result<Box<dyn Scorer>> {
    match name {
        "fit" => Ok(Box::new(FitScorer::default())),
        "contact" => Ok(Box::new(FitScorer { clearance_weight: 0.0 })),
        _ => Err(Error::invalid(format!("unknown scorer {name:?}"))),
    }
}

#[derive(Clone, Debug)]
pub struct RotationSnap {
    pub q: UnitQuaternion<f64>,
    /// Index of the winner in the candidate list.
    pub best: usize,
    pub scores: Vec<f64>,
}

/// Score each candidate orientation of the object cloud (object frame
/// points, rotated about `pivot` and placed at `pivot_world`) and keep the
/// best; ties go to the earliest candidate.
pub fn rotation_snap(
    object_points: &LabeledPointCloud,
    pivot: &Vector3<f64>,
    pivot_world: &Vector3<f64>,
    ctx: &ScoreContext,
    kit_points: &LabeledPointCloud,
    candidates: &[UnitQuaternion<f64>],
    scorer: &dyn Scorer,
) -> Result<RotationSnap> {
    if candidates.is_empty() {
        return Err(Error::invalid("no rotation candidates"));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    let mut cloud = kit_points.clone();
    let nk = cloud.len();
    for r in candidates {
        cloud.points.truncate(nk);
        cloud.labels.truncate(nk);
        for p in &object_points.points {
            cloud.points.push(pivot_world + r * (p - pivot));
            cloud.labels.push(OBJECT_LABEL);
        }
        scores.push(scorer.score(&cloud, ctx));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(RotationSnap {
        q: candidates[best],
        best,
        scores,
    })
}

/// Object (label +1) and kit (label -1) surface samples.
pub fn sample_clouds(
    object: &VoxelVolume,
    kit_crop: &VoxelVolume,
    n_object: usize,
    n_kit: usize,
    seed: u64,
) -> Result<(LabeledPointCloud, LabeledPointCloud)> {
    let obj = sample_surface_points(object, n_object, OBJECT_LABEL, seed)?;
    let kit = match sample_surface_points(kit_crop, n_kit, KIT_LABEL, seed ^ 0x9e37_79b9) {
        Ok(c) => c,
        Err(Error::EmptySurface) => LabeledPointCloud::default(),
        Err(e) => return Err(e),
    };
    Ok((obj, kit))
}
