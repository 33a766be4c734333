//! Single-view truncated signed distance fusion.
//!
//! Values are the projective signed distance along the viewing ray divided by
//! the truncation band (5 voxels), clamped to `[-1, 1]`: positive in front of
//! the observed surface, negative behind it. Voxels that project outside the
//! selected instance, or lie deeper than the band behind the surface, are
//! unobserved and read `+1`.

use super::pose::Pose;
use super::render::{DepthImage, InstanceMask};
use super::volume::{GridSpec, VolumeKind, VoxelVolume};
use crate::error::{Error, Result};

/// Default object-volume resolution.
pub const OBJECT_VOXEL_SIZE: f64 = 0.00089;
pub const OBJECT_VOLUME_DIMS: [usize; 3] = [128, 128, 128];
pub const TRUNCATION_VOXELS: f64 = 5.0;

/// Which mask pixels feed the fusion.
#[derive(Clone, Copy, Debug)]
pub enum InstanceSelect<'a> {
    /// One instance id; fusion fails with not-found if it is absent.
    One(u32),
    /// Any of the listed ids; fails if none is present.
    AnyOf(&'a [u32]),
    /// Every non-background pixel.
    All,
}

impl InstanceSelect<'_> {
    #[inline]
    fn accepts(&self, label: u32) -> bool {
        match self {
            InstanceSelect::One(id) => label == *id,
            InstanceSelect::AnyOf(ids) => ids.contains(&label),
            InstanceSelect::All => label != 0,
        }
    }
}

/// Fuse `depth` into a TSDF on `grid`, whose frame is `grid_pose` in the
/// world (identity for world-aligned grids).
pub fn tsdf_fuse(
    depth: &DepthImage,
    mask: &InstanceMask,
    select: InstanceSelect<'_>,
    grid: &GridSpec,
    grid_pose: &Pose,
) -> Result<VoxelVolume> {
    if mask.width != depth.width || mask.height != depth.height {
        return Err(Error::invalid("mask and depth dimensions differ"));
    }
    match select {
        InstanceSelect::One(id) if !mask.labels.contains(&id) => {
            return Err(Error::NotFound(format!("instance {id} not in mask")));
        }
        InstanceSelect::AnyOf(ids) if !mask.labels.iter().any(|l| ids.contains(l)) => {
            return Err(Error::NotFound(format!("none of instances {ids:?} in mask")));
        }
        _ => {}
    }
    let tau = TRUNCATION_VOXELS * grid.voxel_size;
    let cam = &depth.camera;
    let (w, h) = (depth.width as f64, depth.height as f64);
    let to_cam = cam.pose.inverse().compose(grid_pose);
    let mut vol = VoxelVolume::filled(*grid, VolumeKind::Tsdf, 1.0);
    let d = grid.dims;
    let mut i = 0usize;
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                let c = to_cam.transform_point(&grid.center(x, y, z));
                let idx = i;
                i += 1;
                let Some((u, v, vd)) = cam.project_camera(&c) else {
                    continue;
                };
                if u < 0.0 || v < 0.0 || u >= w || v >= h {
                    continue;
                }
                let pix = v as usize * depth.width + u as usize;
                let observed = depth.data[pix] as f64;
                if observed <= 0.0 || !select.accepts(mask.labels[pix]) {
                    continue;
                }
                let sdf = observed - vd;
                if sdf < -tau {
                    continue;
                }
                vol.data[idx] = (sdf / tau).min(1.0) as f32;
            }
        }
    }
    Ok(vol)
}
