//! Simulated workspaces: objects scattered on one side, the kit assembly on
//! the other, seen by one depth camera.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::mesh::{Aabb, TriMesh};
use crate::geom::pose::{Pose, DEG};
use crate::geom::render::{render_depth, Camera, DepthImage, InstanceMask, RenderItem};
use crate::geom::tsdf::{tsdf_fuse, InstanceSelect, OBJECT_VOLUME_DIMS, OBJECT_VOXEL_SIZE};
use crate::geom::volume::{GridSpec, VoxelVolume};
use crate::kitgen::KitAssembly;

/// Mask ids: objects are `id + 1`, kits start here.
pub const KIT_INSTANCE_BASE: u32 = 1000;
/// Padding around the assembly for the kit workspace volume.
pub const KIT_VOLUME_PAD: f64 = 0.02;

pub fn object_instance(id: usize) -> u32 {
    id as u32 + 1
}

pub fn kit_instance(index: usize) -> u32 {
    KIT_INSTANCE_BASE + index as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSetup {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Height of the camera above the ground.
    pub elevation_height: f64,
    /// Angle of the optical axis above the horizontal, degrees.
    pub elevation_deg: f64,
}

impl Default for CameraSetup {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            focal: 800.0,
            elevation_height: 0.8,
            elevation_deg: 45.0,
        }
    }
}

impl CameraSetup {
    /// Camera on the object side (-y) looking at `target` on the ground.
    pub fn camera(&self, target: Vector3<f64>) -> Camera {
        let back = self.elevation_height / (self.elevation_deg * DEG).tan();
        let eye = target + Vector3::new(0.0, -back, self.elevation_height);
        Camera::look_at(eye, target, self.width, self.height, self.focal)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub workspace: Aabb,
    /// Where object centers may be dropped (z ignored).
    pub object_region: Aabb,
    /// Ground position of the assembly's footprint center.
    pub kit_center: [f64; 2],
    /// Minimum horizontal gap between object footprint circles.
    pub gap: f64,
    pub max_attempts: usize,
    /// Drop objects upside down, so the top-down grasp faces the kit floor.
    pub hard: bool,
    pub camera: CameraSetup,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            workspace: Aabb {
                min: Vector3::new(-0.3, -0.2, 0.0),
                max: Vector3::new(0.3, 0.2, 0.5),
            },
            object_region: Aabb {
                min: Vector3::new(-0.28, -0.19, 0.0),
                max: Vector3::new(0.28, -0.04, 0.0),
            },
            kit_center: [0.0, 0.1],
            gap: 0.01,
            max_attempts: 1000,
            hard: false,
            camera: CameraSetup::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub id: usize,
    /// Normalized mesh in the object frame.
    pub mesh: TriMesh,
    pub gt_start: Pose,
    /// Seated pose in its cavity.
    pub gt_kit: Pose,
    /// Current pose; starts at `gt_start`.
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub assembly: KitAssembly,
    pub camera: Camera,
    pub workspace_bounds: Aabb,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    camera: Camera,
    workspace_bounds: Aabb,
    objects: Vec<ObjectEntry>,
}

#[derive(Serialize, Deserialize)]
struct ObjectEntry {
    id: usize,
    mesh: String,
    gt_start: Pose,
    gt_kit: Pose,
    pose: Pose,
}

impl Scene {
    pub fn object(&self, id: usize) -> Result<&SceneObject> {
        self.objects
            .iter()
            .find(|o| o.id == id)
            .ok_or_else(|| Error::NotFound(format!("object {id}")))
    }

    pub fn object_mut(&mut self, id: usize) -> Result<&mut SceneObject> {
        self.objects
            .iter_mut()
            .find(|o| o.id == id)
            .ok_or_else(|| Error::NotFound(format!("object {id}")))
    }

    /// Write `scene.json`, `object_<id>.obj` and the assembly files.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut objects = Vec::new();
        for o in &self.objects {
            let name = format!("object_{}.obj", o.id);
            o.mesh.save_obj(&dir.join(&name))?;
            objects.push(ObjectEntry {
                id: o.id,
                mesh: name,
                gt_start: o.gt_start,
                gt_kit: o.gt_kit,
                pose: o.pose,
            });
        }
        let file = SceneFile {
            camera: self.camera,
            workspace_bounds: self.workspace_bounds,
            objects,
        };
        fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&file)?)?;
        self.assembly.save(dir)
    }

    pub fn load(dir: &Path) -> Result<Scene> {
        let file: SceneFile = serde_json::from_str(&fs::read_to_string(dir.join("scene.json"))?)?;
        let mut objects = Vec::new();
        for (i, e) in file.objects.into_iter().enumerate() {
            if e.id != i {
                return Err(Error::format("scene", "object ids must be 0..n in order"));
            }
            objects.push(SceneObject {
                id: e.id,
                mesh: TriMesh::load_obj(&dir.join(&e.mesh))?,
                gt_start: e.gt_start,
                gt_kit: e.gt_kit,
                pose: e.pose,
            });
        }
        let meshes: Vec<TriMesh> = objects.iter().map(|o| o.mesh.clone()).collect();
        let assembly = KitAssembly::load(dir, &meshes)?;
        Ok(Scene {
            objects,
            assembly,
            camera: file.camera,
            workspace_bounds: file.workspace_bounds,
        })
    }

    /// Everything in the scene as render items with mask ids.
    pub fn render_items(&self) -> Vec<RenderItem<'_>> {
        let mut items: Vec<RenderItem<'_>> = self
            .objects
            .iter()
            .map(|o| RenderItem {
                mesh: &o.mesh,
                pose: o.pose,
                instance: object_instance(o.id),
            })
            .collect();
        for (i, k) in self.assembly.kits.iter().enumerate() {
            items.push(RenderItem {
                mesh: &k.kit.mesh,
                pose: self.assembly.world_kit_pose(i),
                instance: kit_instance(i),
            });
        }
        items
    }
}

fn inside_xy(b: &Aabb, p: &Vector3<f64>) -> bool {
    p.x >= b.min.x && p.x <= b.max.x && p.y >= b.min.y && p.y <= b.max.y
}

/// Place the assembly on the kit side and drop every object at a random
/// resting pose on the object side. `objects[i]` belongs in the kit whose
/// `object_id` is `i`.
pub fn sample_scene(objects: &[TriMesh], mut assembly: KitAssembly, cfg: &SceneConfig, seed: u64) -> Result<Scene> {
    if objects.len() != assembly.kits.len() {
        return Err(Error::invalid(format!(
            "{} objects for {} kits",
            objects.len(),
            assembly.kits.len()
        )));
    }
    let local = assembly.local_bounds();
    assembly.base_frame = Pose::from_translation(Vector3::new(
        cfg.kit_center[0] - local.center().x,
        cfg.kit_center[1] - local.center().y,
        0.0,
    ));
    let kb = assembly.world_bounds();
    let room = cfg.workspace.inflate(1e-9);
    if !(room.contains(&kb.min) && room.contains(&kb.max)) {
        return Err(Error::Placement("kit assembly does not fit the workspace".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flip = if cfg.hard {
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI)
    } else {
        UnitQuaternion::identity()
    };
    let region = cfg.object_region;
    let mut placed: Vec<(Vector3<f64>, f64)> = Vec::new();
    let mut out = Vec::with_capacity(objects.len());
    for (id, mesh) in objects.iter().enumerate() {
        let kit = assembly
            .kits
            .iter()
            .position(|k| k.object_id == id)
            .ok_or_else(|| Error::NotFound(format!("no kit for object {id}")))?;
        let rest = mesh.transformed(&Pose::new(Vector3::zeros(), flip)).bounds();
        let mut pose = None;
        for _ in 0..cfg.max_attempts {
            let yaw = rng.random_range(0.0..TAU);
            let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * flip;
            let b = mesh.transformed(&Pose::new(Vector3::zeros(), q)).bounds();
            let r = (b.extent().x.hypot(b.extent().y)) / 2.0;
            let c = Vector3::new(
                rng.random_range(region.min.x..=region.max.x),
                rng.random_range(region.min.y..=region.max.y),
                0.0,
            );
            let p = Vector3::new(c.x - b.center().x, c.y - b.center().y, -rest.min.z);
            let footprint_ok = [(-r, -r), (r, -r), (-r, r), (r, r)]
                .iter()
                .all(|(dx, dy)| inside_xy(&cfg.workspace, &(c + Vector3::new(*dx, *dy, 0.0))));
            let clear = placed
                .iter()
                .all(|(o, ro)| (o - c).norm() >= r + ro + cfg.gap);
            let off_kits = !(c.x + r > kb.min.x && c.x - r < kb.max.x && c.y + r > kb.min.y && c.y - r < kb.max.y);
            if footprint_ok && clear && off_kits {
                placed.push((c, r));
                pose = Some(Pose::new(p, q));
                break;
            }
        }
        let gt_start = pose.ok_or(Error::WorkspaceFull {
            object: id,
            attempts: cfg.max_attempts,
        })?;
        out.push(SceneObject {
            id,
            mesh: mesh.clone(),
            gt_start,
            gt_kit: assembly.world_cavity_pose(kit),
            pose: gt_start,
        });
    }
    let target = Vector3::new(cfg.workspace.center().x, cfg.workspace.center().y, 0.0);
    Ok(Scene {
        objects: out,
        assembly,
        camera: cfg.camera.camera(target),
        workspace_bounds: cfg.workspace,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserveOptions {
    /// Standard deviation of additive depth noise, meters.
    pub depth_noise: f64,
    pub noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub depth: DepthImage,
    pub masks: InstanceMask,
    /// Per-object TSDF on a 128^3 grid in the object's twin frame.
    pub object_volumes: BTreeMap<usize, VoxelVolume>,
    /// World pose of each object volume's frame (the observed start pose).
    pub object_frames: BTreeMap<usize, Pose>,
    /// World-aligned TSDF over the kit side.
    pub kit_volume: VoxelVolume,
}

#[derive(Serialize, Deserialize)]
struct ObservationFile {
    object_frames: BTreeMap<usize, Pose>,
}

impl Observation {
    /// Write `depth.bin` (+ `depth.cam.json`), `mask.bin`, `kit.vol`,
    /// `object_<id>.vol` and `observation.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.depth.save(&dir.join("depth.bin"))?;
        self.masks.save(&dir.join("mask.bin"))?;
        self.kit_volume.save(&dir.join("kit.vol"))?;
        for (id, v) in &self.object_volumes {
            v.save(&dir.join(format!("object_{id}.vol")))?;
        }
        let file = ObservationFile {
            object_frames: self.object_frames.clone(),
        };
        fs::write(dir.join("observation.json"), serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Observation> {
        let file: ObservationFile = serde_json::from_str(&fs::read_to_string(dir.join("observation.json"))?)?;
        let mut object_volumes = BTreeMap::new();
        for id in file.object_frames.keys() {
            object_volumes.insert(*id, VoxelVolume::load(&dir.join(format!("object_{id}.vol")))?);
        }
        Ok(Observation {
            depth: DepthImage::load(&dir.join("depth.bin"))?,
            masks: InstanceMask::load(&dir.join("mask.bin"))?,
            object_volumes,
            object_frames: file.object_frames,
            kit_volume: VoxelVolume::load(&dir.join("kit.vol"))?,
        })
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join("observation.json").is_file()
    }
}

/// Grid of an object's twin volume, in its own frame.
pub fn object_grid() -> GridSpec {
    GridSpec::centered(Vector3::zeros(), OBJECT_VOXEL_SIZE, OBJECT_VOLUME_DIMS)
}

/// World grid covering the assembly plus padding, on the global 0.89 mm
/// lattice.
pub fn kit_grid(assembly: &KitAssembly) -> GridSpec {
    GridSpec::covering(&assembly.world_bounds().inflate(KIT_VOLUME_PAD), OBJECT_VOXEL_SIZE)
}

/// Render the scene and fuse per-object and kit volumes.
pub fn observe(scene: &Scene, opts: &ObserveOptions) -> Result<Observation> {
    let (mut depth, masks) = render_depth(&scene.render_items(), &scene.camera)?;
    if opts.depth_noise > 0.0 {
        let noise = Normal::new(0.0, opts.depth_noise)
            .map_err(|e| Error::invalid(format!("depth noise: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.noise_seed);
        for d in depth.data.iter_mut().filter(|d| **d > 0.0) {
            *d = (*d as f64 + noise.sample(&mut rng)).max(1e-4) as f32;
        }
    }
    let grid = object_grid();
    let mut object_volumes = BTreeMap::new();
    let mut object_frames = BTreeMap::new();
    for o in &scene.objects {
        let vol = tsdf_fuse(&depth, &masks, InstanceSelect::One(object_instance(o.id)), &grid, &o.pose)?;
        object_volumes.insert(o.id, vol);
        object_frames.insert(o.id, o.pose);
    }
    let ids: Vec<u32> = (0..scene.assembly.kits.len()).map(kit_instance).collect();
    let kit_volume = tsdf_fuse(
        &depth,
        &masks,
        InstanceSelect::AnyOf(&ids),
        &kit_grid(&scene.assembly),
        &Pose::identity(),
    )?;
    Ok(Observation {
        depth,
        masks,
        object_volumes,
        object_frames,
        kit_volume,
    })
}
