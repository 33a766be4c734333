//! Shape completion behind a provider interface. Every provider returns an
//! occupancy volume on the grid of the partial input.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::mesh::TriMesh;
use crate::geom::pose::Pose;
use crate::geom::render::{DepthImage, InstanceMask};
use crate::geom::volume::{VolumeKind, VoxelVolume};
use crate::geom::voxelize::voxelize_mesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionMode {
    /// Observed surface band only (no completion).
    Partial,
    ExtrudeGround,
    VisualHull,
    Oracle,
}

impl CompletionMode {
    pub const ALL: [CompletionMode; 4] = [
        CompletionMode::Partial,
        CompletionMode::ExtrudeGround,
        CompletionMode::VisualHull,
        CompletionMode::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CompletionMode::Partial => "partial",
            CompletionMode::ExtrudeGround => "extrude_ground",
            CompletionMode::VisualHull => "visual_hull",
            CompletionMode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for CompletionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompletionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CompletionMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown completion mode {s:?}")))
    }
}

/// The depth view a partial volume was fused from.
#[derive(Clone, Copy, Debug)]
pub struct ViewContext<'a> {
    pub depth: &'a DepthImage,
    pub mask: &'a InstanceMask,
    /// Mask ids belonging to the completed entity.
    pub instances: &'a [u32],
}

#[derive(Clone, Debug)]
pub struct CompletionRequest<'a> {
    pub partial: &'a VoxelVolume,
    pub mode: CompletionMode,
    /// World pose of the volume frame. The ground is the world plane z = 0.
    pub frame: Pose,
    /// Ground-truth meshes posed in the volume frame (oracle mode).
    pub gt: Vec<(&'a TriMesh, Pose)>,
    /// Needed by visual_hull.
    pub view: Option<ViewContext<'a>>,
}

impl<'a> CompletionRequest<'a> {
    pub fn new(partial: &'a VoxelVolume, mode: CompletionMode, frame: Pose) -> Self {
        Self {
            partial,
            mode,
            frame,
            gt: Vec::new(),
            view: None,
        }
    }
}

/// A named completion provider.
pub trait Completer: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<VoxelVolume>;
}

struct Builtin(CompletionMode);

impl Completer for Builtin {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<VoxelVolume> {
        let req = CompletionRequest {
            mode: self.0,
            ..req.clone()
        };
        complete(&req)
    }
}

/// Look up a built-in provider by name.
pub fn completer(name: &str) -> Result<Box<dyn Completer>> {
    Ok(Box::new(Builtin(name.parse()?)))
}

pub fn complete(req: &CompletionRequest<'_>) -> Result<VoxelVolume> {
    if req.mode == CompletionMode::Oracle {
        return oracle(req);
    }
    let partial = partial_occupancy(req.partial);
    if partial.count_solid() == 0 {
        return Err(Error::EmptyInput("partial volume has no observed surface".into()));
    }
    match req.mode {
        CompletionMode::Partial => Ok(partial),
        CompletionMode::ExtrudeGround => Ok(extrude_ground(&partial, &req.frame)),
        CompletionMode::VisualHull => {
            let view = req
                .view
                .ok_or_else(|| Error::invalid("visual_hull needs the depth view"))?;
            Ok(visual_hull(&partial, &req.frame, &view))
        }
        CompletionMode::Oracle => unreachable!("handled above"),
    }
}

/// Observed solid: TSDF at or behind the surface; occupancy passes through.
pub fn partial_occupancy(v: &VoxelVolume) -> VoxelVolume {
    match v.kind {
        VolumeKind::Tsdf => v.to_occupancy(),
        _ => VoxelVolume {
            grid: v.grid,
            kind: VolumeKind::Occupancy,
            data: v.data.iter().map(|&x| if x > 0.5 { 1.0 } else { 0.0 }).collect(),
        },
    }
}

fn oracle(req: &CompletionRequest<'_>) -> Result<VoxelVolume> {
    if req.gt.is_empty() {
        return Err(Error::invalid("oracle completion needs ground-truth meshes"));
    }
    let grid = req.partial.grid;
    let mut out = VoxelVolume::zeros(grid, VolumeKind::Occupancy);
    for (mesh, pose) in &req.gt {
        let v = if *pose == Pose::identity() {
            voxelize_mesh(mesh, &grid)?
        } else {
            voxelize_mesh(&mesh.transformed(pose), &grid)?
        };
        for (o, x) in out.data.iter_mut().zip(&v.data) {
            if *x > 0.5 {
                *o = 1.0;
            }
        }
    }
    Ok(out)
}

/// Grid axis (0..3) and step sign closest to world "down" in `frame`.
fn down_axis(frame: &Pose) -> (usize, i64) {
    let d = frame.inverse().transform_vector(&-Vector3::z());
    let axis = d.iamax();
    (axis, if d[axis] > 0.0 { 1 } else { -1 })
}

/// Fill every column downward from its first occupied voxel until the
/// voxel centers pass below the ground plane.
pub fn extrude_ground(partial: &VoxelVolume, frame: &Pose) -> VoxelVolume {
    let mut out = partial.clone();
    let g = partial.grid;
    let (axis, sign) = down_axis(frame);
    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
    let n = g.dims[axis];
    for i in 0..g.dims[a] {
        for j in 0..g.dims[b] {
            let mut filling = false;
            for step in 0..n {
                let k = if sign > 0 { step } else { n - 1 - step };
                let mut c = [0usize; 3];
                c[axis] = k;
                c[a] = i;
                c[b] = j;
                let idx = g.index(c[0], c[1], c[2]);
                if partial.data[idx] > 0.5 {
                    filling = true;
                    continue;
                }
                if filling {
                    if frame.transform_point(&g.center(c[0], c[1], c[2])).z < 0.0 {
                        break;
                    }
                    out.data[idx] = 1.0;
                }
            }
        }
    }
    out
}

/// Voxels inside the entity's silhouette and at or behind its observed
/// surface, above the ground, plus the partial itself.
pub fn visual_hull(partial: &VoxelVolume, frame: &Pose, view: &ViewContext<'_>) -> VoxelVolume {
    let g = partial.grid;
    let cam = &view.depth.camera;
    let to_cam = cam.pose.inverse().compose(frame);
    let (w, h) = (view.depth.width as f64, view.depth.height as f64);
    let mut out = partial.clone();
    for idx in 0..g.len() {
        if out.data[idx] > 0.5 {
            continue;
        }
        let [x, y, z] = g.coords(idx);
        let local = g.center(x, y, z);
        if frame.transform_point(&local).z < 0.0 {
            continue;
        }
        let Some((u, v, vd)) = cam.project_camera(&to_cam.transform_point(&local)) else {
            continue;
        };
        if u < 0.0 || v < 0.0 || u >= w || v >= h {
            continue;
        }
        let pix = v as usize * view.depth.width + u as usize;
        let observed = view.depth.data[pix] as f64;
        if observed > 0.0 && view.instances.contains(&view.mask.labels[pix]) && vd >= observed {
            out.data[idx] = 1.0;
        }
    }
    out
}

/// Mark every voxel whose center is below the ground as solid.
pub fn fill_below_ground(vol: &mut VoxelVolume, frame: &Pose) {
    let g = vol.grid;
    for idx in 0..g.len() {
        let [x, y, z] = g.coords(idx);
        if frame.transform_point(&g.center(x, y, z)).z < 0.0 {
            vol.data[idx] = 1.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in CompletionMode::ALL {
            assert_eq!(m.name().parse::<CompletionMode>().unwrap(), m);
            assert_eq!(completer(m.name()).unwrap().name(), m.name());
        }
        assert!("learned".parse::<CompletionMode>().is_err());
    }

    #[test]
    fn flipped_frame_extrudes_along_plus_z() {
        let flip = Pose::new(
            Vector3::new(0.0, 0.0, 0.01),
            nalgebra::UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI),
        );
        assert_eq!(down_axis(&flip), (2, 1));
        assert_eq!(down_axis(&Pose::identity()), (2, -1));
    }
}
