//! Scene-level glue: complete the observed volumes of a scene and snap an
//! object against its kit side.

use crate::completion::{complete, fill_below_ground, CompletionMode, CompletionRequest, ViewContext};
use crate::error::Result;
use crate::geom::pose::Pose;
use crate::geom::volume::{SolidQuery, VolumeKind, VoxelVolume};
use crate::scene::{kit_instance, object_instance, Observation, Scene};
use crate::snap::{snap_pose, SnapConfig, SnapInputs, SnapResult};

/// Completed occupancy of object `id` in its own frame.
pub fn complete_object(scene: &Scene, obs: &Observation, id: usize, mode: CompletionMode) -> Result<VoxelVolume> {
    let o = scene.object(id)?;
    let partial = obs
        .object_volumes
        .get(&id)
        .ok_or_else(|| crate::Error::NotFound(format!("no volume for object {id}")))?;
    let frame = obs.object_frames.get(&id).copied().unwrap_or(o.pose);
    let ids = [object_instance(id)];
    let mut req = CompletionRequest::new(partial, mode, frame);
    req.gt.push((&o.mesh, Pose::identity()));
    req.view = Some(ViewContext {
        depth: &obs.depth,
        mask: &obs.masks,
        instances: &ids,
    });
    complete(&req)
}

/// Completed world-frame occupancy of the kit side. Space below the ground
/// counts as solid in every mode.
pub fn complete_kit(scene: &Scene, obs: &Observation, mode: CompletionMode) -> Result<VoxelVolume> {
    let mut out = match mode {
        CompletionMode::Oracle => kit_oracle(scene, &obs.kit_volume),
        _ => {
            let ids: Vec<u32> = (0..scene.assembly.len()).map(kit_instance).collect();
            let mut req = CompletionRequest::new(&obs.kit_volume, mode, Pose::identity());
            req.view = Some(ViewContext {
                depth: &obs.depth,
                mask: &obs.masks,
                instances: &ids,
            });
            complete(&req)?
        }
    };
    fill_below_ground(&mut out, &Pose::identity());
    Ok(out)
}

/// Voxels of the kit grid whose centers lie inside the exact kit solids.
fn kit_oracle(scene: &Scene, kit_volume: &VoxelVolume) -> VoxelVolume {
    let g = kit_volume.grid;
    let b = scene.assembly.world_bounds();
    VoxelVolume::from_fn(g, VolumeKind::Occupancy, |x, y, z| {
        let c = g.center(x, y, z);
        (b.contains(&c) && scene.assembly.is_solid(&c)) as u8 as f32
    })
}

/// Complete both sides and snap object `id`.
pub fn snap_object(
    scene: &Scene,
    obs: &Observation,
    kit: &VoxelVolume,
    id: usize,
    mode: CompletionMode,
    hint: Option<&Pose>,
    cfg: &SnapConfig,
) -> Result<SnapResult> {
    let object = complete_object(scene, obs, id, mode)?;
    snap_pose(&SnapInputs { object: &object, kit }, hint, cfg)
}
