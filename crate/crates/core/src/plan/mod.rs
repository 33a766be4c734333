//! Pick, hover and insert plans, checked and executed kinematically.

use std::collections::{HashMap, VecDeque};

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::pose::{Pose, DEG};
use crate::geom::volume::{SolidQuery, VoxelVolume};
use crate::geom::voxelize::voxelize_mesh;
use crate::kitgen::KitSpec;
use crate::scene::{object_grid, Scene};

/// Hover offset above the place pose, in the place frame.
pub const HOVER_OFFSET: [f64; 3] = [0.0, 0.0, 0.1];
/// Height of the gripper above the grasp before descending, and of the
/// object lift after grasping.
pub const CLEARANCE_HEIGHT: f64 = 0.1;
/// Gripper start pose position.
pub const HOME: [f64; 3] = [0.0, 0.0, 0.6];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspConfig {
    pub cup_diameter: f64,
    /// Largest surface tilt the cup still seals on, radians.
    pub normal_tolerance: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            cup_diameter: 0.01,
            normal_tolerance: 10.0 * DEG,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Gripper from home to above the grasp.
    Approach,
    /// Gripper down onto the grasp.
    Descend,
    /// Object straight up from its start pose.
    Lift,
    /// Object to the hover pose; all reorientation happens here.
    Transit,
    /// Object from hover straight down to the place pose.
    Insert,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub from: Pose,
    pub to: Pose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub object_id: usize,
    /// Suction pose in the world; its z axis points down the approach.
    pub grasp: Pose,
    pub hover: Pose,
    pub place: Pose,
    pub segments: Vec<Segment>,
}

impl ActionPlan {
    pub fn insertion(&self) -> &Segment {
        self.segments.last().expect("plans always end with the insertion")
    }
}

pub fn hover_pose(place: &Pose) -> Pose {
    place.compose(&Pose::from_translation(Vector3::from(HOVER_OFFSET)))
}

fn down() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
}

fn lifted(p: &Pose, dz: f64) -> Pose {
    Pose::new(p.p + Vector3::new(0.0, 0.0, dz), p.q)
}

/// Top-down suction grasp on the largest flat top patch of the object
/// (`completed` in the object frame, object at `start_pose`). A cell of the
/// world heightmap is a seal candidate when the cup disk around it lies on
/// the object and its height spread stays within the tilt tolerance; the
/// grasp is the centroid of the largest connected set of candidates.
pub fn grasp_pose_topdown(completed: &VoxelVolume, start_pose: &Pose, cfg: &GraspConfig) -> Result<Pose> {
    let s = completed.grid.voxel_size;
    let Some(bounds) = completed.solid_bounds() else {
        return Err(Error::EmptyInput("object volume is empty".into()));
    };
    let b = bounds.transformed(start_pose);
    let inv = start_pose.inverse();
    // heightmap by casting a ray down each world column
    let mut top: HashMap<[i64; 2], f64> = HashMap::new();
    let step = s / 2.0;
    let nz = ((b.max.z - b.min.z) / step).ceil() as usize + 1;
    for cy in (b.min.y / s).floor() as i64..=(b.max.y / s).floor() as i64 {
        for cx in (b.min.x / s).floor() as i64..=(b.max.x / s).floor() as i64 {
            let (x, y) = ((cx as f64 + 0.5) * s, (cy as f64 + 0.5) * s);
            let hit = (0..nz)
                .map(|k| b.max.z - k as f64 * step)
                .find(|&z| completed.solid_at_point(&inv.transform_point(&Vector3::new(x, y, z))));
            if let Some(z) = hit {
                top.insert([cx, cy], z);
            }
        }
    }
    if top.is_empty() {
        return Err(Error::EmptyInput("object volume is empty".into()));
    }
    let r = cfg.cup_diameter / 2.0 / s;
    let ri = r.ceil() as i64;
    let disk: Vec<[i64; 2]> = (-ri..=ri)
        .flat_map(|dy| (-ri..=ri).map(move |dx| [dx, dy]))
        .filter(|[dx, dy]| ((dx * dx + dy * dy) as f64) <= r * r)
        .collect();
    let spread = cfg.normal_tolerance.tan() * cfg.cup_diameter + s;
    let mut seal: HashMap<[i64; 2], f64> = HashMap::new();
    for (&c, &h) in &top {
        let mut lo = h;
        let mut hi = h;
        let ok = disk.iter().all(|d| match top.get(&[c[0] + d[0], c[1] + d[1]]) {
            Some(&t) => {
                lo = lo.min(t);
                hi = hi.max(t);
                true
            }
            None => false,
        });
        if ok && hi - lo <= spread {
            seal.insert(c, h);
        }
    }
    if seal.is_empty() {
        return Err(Error::NotGraspable(format!(
            "no flat top patch fits a {:.1} mm cup",
            cfg.cup_diameter * 1e3
        )));
    }
    // connected patches, 4-neighbours at similar height
    let mut cells: Vec<[i64; 2]> = seal.keys().copied().collect();
    cells.sort();
    let mut label: HashMap<[i64; 2], usize> = HashMap::new();
    let mut patches: Vec<Vec<[i64; 2]>> = Vec::new();
    for &c in &cells {
        if label.contains_key(&c) {
            continue;
        }
        let id = patches.len();
        let mut patch = vec![];
        let mut queue = VecDeque::from([c]);
        label.insert(c, id);
        while let Some(p) = queue.pop_front() {
            patch.push(p);
            for d in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
                let n = [p[0] + d[0], p[1] + d[1]];
                if let Some(&hn) = seal.get(&n) {
                    if !label.contains_key(&n) && (hn - seal[&p]).abs() <= 2.0 * s {
                        label.insert(n, id);
                        queue.push_back(n);
                    }
                }
            }
        }
        patches.push(patch);
    }
    // largest patch; ties go to the higher one
    let best = patches
        .iter()
        .max_by(|a, b| {
            let ha = a.iter().map(|c| seal[c]).fold(f64::MIN, f64::max);
            let hb = b.iter().map(|c| seal[c]).fold(f64::MIN, f64::max);
            a.len().cmp(&b.len()).then(ha.total_cmp(&hb))
        })
        .expect("at least one patch");
    let n = best.len() as f64;
    let cx = best.iter().map(|c| c[0] as f64 + 0.5).sum::<f64>() / n * s;
    let cy = best.iter().map(|c| c[1] as f64 + 0.5).sum::<f64>() / n * s;
    // the centroid may fall outside a non-convex patch; use the nearest cell
    let cell = *best
        .iter()
        .min_by(|a, b| {
            let da = ((a[0] as f64 + 0.5) * s - cx).powi(2) + ((a[1] as f64 + 0.5) * s - cy).powi(2);
            let db = ((b[0] as f64 + 0.5) * s - cx).powi(2) + ((b[1] as f64 + 0.5) * s - cy).powi(2);
            da.total_cmp(&db).then(a.cmp(b))
        })
        .expect("non-empty patch");
    let inside = best.contains(&[(cx / s).floor() as i64, (cy / s).floor() as i64]);
    let (gx, gy) = if inside {
        (cx, cy)
    } else {
        ((cell[0] as f64 + 0.5) * s, (cell[1] as f64 + 0.5) * s)
    };
    let gz = seal[&[(gx / s).floor() as i64, (gy / s).floor() as i64]];
    Ok(Pose::new(Vector3::new(gx, gy, gz), down()))
}

/// Plan moving the object from `start` (world pose) to `place`, holding it
/// at `grasp`.
pub fn make_plan(object_id: usize, start: &Pose, grasp: &Pose, place: &Pose) -> ActionPlan {
    let hover = hover_pose(place);
    let home = Pose::new(Vector3::from(HOME), grasp.q);
    let above = lifted(grasp, CLEARANCE_HEIGHT);
    let raised = lifted(start, CLEARANCE_HEIGHT);
    let seg = |kind, from, to| Segment { kind, from, to };
    ActionPlan {
        object_id,
        grasp: *grasp,
        hover,
        place: *place,
        segments: vec![
            seg(SegmentKind::Approach, home, above),
            seg(SegmentKind::Descend, above, *grasp),
            seg(SegmentKind::Lift, *start, raised),
            seg(SegmentKind::Transit, raised, hover),
            seg(SegmentKind::Insert, hover, *place),
        ],
    }
}

/// Poses every `step` meters along a segment, endpoints included.
pub fn interpolate_segment(seg: &Segment, step: f64) -> Vec<Pose> {
    let len = (seg.to.p - seg.from.p).norm();
    let n = ((len / step).ceil() as usize).max(1);
    (0..=n).map(|i| seg.from.interpolate(&seg.to, i as f64 / n as f64)).collect()
}

/// True if no occupied voxel of `object` (object frame) enters kit solid at
/// any pose along the insertion segment, sampled every `step` meters.
pub fn check_straight_insertion(object: &VoxelVolume, kit: &dyn SolidQuery, plan: &ActionPlan, step: f64) -> bool {
    let g = object.grid;
    let pts: Vec<Vector3<f64>> = object
        .boundary_voxels(true)
        .into_iter()
        .map(|[x, y, z]| g.center(x, y, z))
        .collect();
    interpolate_segment(plan.insertion(), step)
        .iter()
        .all(|pose| pts.iter().all(|p| !kit.is_solid(&pose.transform_point(p))))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub success: bool,
    pub reason: Option<String>,
}

pub const REASON_COLLISION: &str = "collision-on-insert";
pub const REASON_GRASP_SIDE: &str = "grasp-not-opposite-insertion";

/// Largest angle between the grasp approach and the object's insertion
/// direction that still counts as opposite.
pub const GRASP_AXIS_TOLERANCE: f64 = 30.0 * DEG;

/// Kinematically run `plan` on a copy of `scene` with the ground-truth
/// object and kit geometry. On success the object ends exactly at
/// `plan.place`; otherwise the scene is returned unchanged with a reason.
pub fn execute_plan_sim(scene: &Scene, plan: &ActionPlan) -> Result<(Scene, Execution)> {
    let o = scene.object(plan.object_id)?;
    let fail = |reason: &str| {
        Ok((
            scene.clone(),
            Execution {
                success: false,
                reason: Some(reason.to_string()),
            },
        ))
    };
    // the cup pushes along world -z at the start; in the object frame that
    // direction has to run against the insertion axis
    let push = o.pose.q.inverse() * -Vector3::z();
    let axis = Vector3::from(KitSpec::INSERTION_AXIS);
    if push.angle(&-axis) > GRASP_AXIS_TOLERANCE {
        return fail(REASON_GRASP_SIDE);
    }
    let occ = voxelize_mesh(&o.mesh, &object_grid())?;
    if !check_straight_insertion(&occ, &scene.assembly, plan, 0.001) {
        return fail(REASON_COLLISION);
    }
    let mut next = scene.clone();
    next.object_mut(plan.object_id)?.pose = plan.place;
    Ok((
        next,
        Execution {
            success: true,
            reason: None,
        },
    ))
}

/// Plan JSON: the plan plus its feasibility outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub object_id: usize,
    pub grasp: Pose,
    pub hover: Pose,
    pub place: Pose,
    pub segments: Vec<Segment>,
    pub feasible: bool,
    pub reason: Option<String>,
}

impl PlanReport {
    pub fn new(plan: &ActionPlan, exec: &Execution) -> Self {
        Self {
            object_id: plan.object_id,
            grasp: plan.grasp,
            hover: plan.hover,
            place: plan.place,
            segments: plan.segments.clone(),
            feasible: exec.success,
            reason: exec.reason.clone(),
        }
    }
}
