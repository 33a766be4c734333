use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_kit, Kit, KitSpec};
use crate::error::{Error, Result};
use crate::geom::mesh::{Aabb, TriMesh};
use crate::geom::pose::{Pose, DEG};
use crate::geom::volume::SolidQuery;

pub const MIN_BRACKET_DEG: f64 = 10.0;
pub const MAX_BRACKET_DEG: f64 = 45.0;
pub const MAX_KITS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct AssemblyKit {
    pub object_id: usize,
    pub kit: Kit,
    /// Kit frame in the assembly frame.
    pub kit_pose: Pose,
}

impl AssemblyKit {
    /// Seated object pose in the assembly frame.
    pub fn cavity_pose(&self) -> Pose {
        self.kit_pose.compose(&self.kit.cavity_pose)
    }
}

/// Kits chained by hinged brackets. Poses are relative to the assembly
/// frame, which `base_frame` places in the world.
#[derive(Clone, Debug, PartialEq)]
pub struct KitAssembly {
    pub spec: KitSpec,
    pub kits: Vec<AssemblyKit>,
    /// Signed bracket angles in degrees; positive tilts the next kit's far
    /// end down.
    pub bracket_angles: Vec<f64>,
    pub base_frame: Pose,
}

#[derive(Serialize, Deserialize)]
struct AssemblyFile {
    spec: KitSpec,
    bracket_angles: Vec<f64>,
    base_frame: Pose,
    kits: Vec<KitEntry>,
}

#[derive(Serialize, Deserialize)]
struct KitEntry {
    object_id: usize,
    kit_pose: Pose,
    cavity_pose: Pose,
    mesh: String,
}

impl KitAssembly {
    /// One kit at the assembly origin.
    pub fn single(kit: Kit, object_id: usize, spec: KitSpec) -> KitAssembly {
        KitAssembly {
            spec,
            kits: vec![AssemblyKit {
                object_id,
                kit,
                kit_pose: Pose::identity(),
            }],
            bracket_angles: Vec::new(),
            base_frame: Pose::identity(),
        }
    }

    pub fn len(&self) -> usize {
        self.kits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kits.is_empty()
    }

    pub fn kit_for(&self, object_id: usize) -> Option<&AssemblyKit> {
        self.kits.iter().find(|k| k.object_id == object_id)
    }

    pub fn world_kit_pose(&self, i: usize) -> Pose {
        self.base_frame.compose(&self.kits[i].kit_pose)
    }

    /// Ground-truth world pose of the object seated in kit `i`.
    pub fn world_cavity_pose(&self, i: usize) -> Pose {
        self.base_frame.compose(&self.kits[i].cavity_pose())
    }

    /// Bounds of all kit blocks in the assembly frame.
    pub fn local_bounds(&self) -> Aabb {
        self.kits.iter().fold(Aabb::empty(), |acc, k| {
            acc.union(&k.kit.occupancy.grid.bounds().transformed(&k.kit_pose))
        })
    }

    pub fn world_bounds(&self) -> Aabb {
        self.kits.iter().enumerate().fold(Aabb::empty(), |acc, (i, k)| {
            acc.union(&k.kit.occupancy.grid.bounds().transformed(&self.world_kit_pose(i)))
        })
    }

    /// All kit meshes merged, in world coordinates.
    pub fn world_mesh(&self) -> TriMesh {
        let parts: Vec<TriMesh> = (0..self.kits.len())
            .map(|i| self.kits[i].kit.mesh.transformed(&self.world_kit_pose(i)))
            .collect();
        TriMesh::merge(&parts)
    }

    /// Write `assembly.json` and one OBJ per kit (`kit_<i>.obj`).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut kits = Vec::new();
        for (i, k) in self.kits.iter().enumerate() {
            let name = format!("kit_{i}.obj");
            k.kit.mesh.save_obj(&dir.join(&name))?;
            kits.push(KitEntry {
                object_id: k.object_id,
                kit_pose: k.kit_pose,
                cavity_pose: k.kit.cavity_pose,
                mesh: name,
            });
        }
        let file = AssemblyFile {
            spec: self.spec,
            bracket_angles: self.bracket_angles.clone(),
            base_frame: self.base_frame,
            kits,
        };
        fs::write(dir.join("assembly.json"), serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    /// Read `assembly.json` from `dir`, regenerating each kit's solid from
    /// its source object (`objects[object_id]`).
    pub fn load(dir: &Path, objects: &[TriMesh]) -> Result<KitAssembly> {
        let text = fs::read_to_string(dir.join("assembly.json"))?;
        let file: AssemblyFile = serde_json::from_str(&text)?;
        let mut kits = Vec::new();
        for e in file.kits {
            let object = objects
                .get(e.object_id)
                .ok_or_else(|| Error::NotFound(format!("object {} for kit", e.object_id)))?;
            let kit = generate_kit(object, &file.spec)?;
            if kit.cavity_pose.position_error(&e.cavity_pose) > 1e-9 {
                return Err(Error::format(
                    "assembly",
                    format!("kit for object {} does not match its source mesh", e.object_id),
                ));
            }
            kits.push(AssemblyKit {
                object_id: e.object_id,
                kit,
                kit_pose: e.kit_pose,
            });
        }
        Ok(KitAssembly {
            spec: file.spec,
            kits,
            bracket_angles: file.bracket_angles,
            base_frame: file.base_frame,
        })
    }

    /// Solid test for a point in the assembly frame.
    pub fn solid_local(&self, p: &Vector3<f64>) -> bool {
        self.kits.iter().any(|k| {
            let q = k.kit_pose.inverse().transform_point(p);
            k.kit.occupancy.solid_at_point(&q)
        })
    }
}

/// World-frame solid queries against the exact kit grids.
impl SolidQuery for KitAssembly {
    fn is_solid(&self, p: &Vector3<f64>) -> bool {
        self.solid_local(&self.base_frame.inverse().transform_point(p))
    }
}

fn rot_y(angle: f64) -> Pose {
    Pose::new(Vector3::zeros(), UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angle))
}

/// True if any boundary voxel of kit `a` lies inside kit `b`.
fn kits_overlap(a: &AssemblyKit, b: &AssemblyKit) -> bool {
    let rel = b.kit_pose.inverse().compose(&a.kit_pose);
    let occ = &a.kit.occupancy;
    occ.boundary_voxels(true).into_iter().any(|[x, y, z]| {
        let p = rel.transform_point(&occ.grid.center(x, y, z));
        b.kit.occupancy.solid_at_point(&p)
    })
}

/// Chain `kits` along +x. Kit `i+1` hangs off kit `i` on a hinge parallel
/// to y, tilted by `angles_deg[i]`; the seed picks whether the far end rises
/// or dips, keeping every opening less than 90 degrees from vertical. The
/// result sits on z = 0, centered on the origin in x and y.
pub fn link_kits(kits: Vec<(Kit, usize)>, angles_deg: &[f64], spec: KitSpec, seed: u64) -> Result<KitAssembly> {
    if kits.len() < 2 || kits.len() > MAX_KITS {
        return Err(Error::invalid(format!("can link 2..={MAX_KITS} kits, got {}", kits.len())));
    }
    if angles_deg.len() != kits.len() - 1 {
        return Err(Error::invalid("need one bracket angle per adjacent kit pair"));
    }
    if let Some(a) = angles_deg
        .iter()
        .find(|a| !(MIN_BRACKET_DEG..=MAX_BRACKET_DEG).contains(*a))
    {
        return Err(Error::invalid(format!(
            "bracket angle {a} outside [{MIN_BRACKET_DEG}, {MAX_BRACKET_DEG}] degrees"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<AssemblyKit> = Vec::with_capacity(kits.len());
    let mut signed = Vec::with_capacity(angles_deg.len());
    let mut tilt = 0.0f64;
    for (i, (kit, object_id)) in kits.into_iter().enumerate() {
        let kit_pose = match placed.last() {
            None => Pose::identity(),
            Some(prev) => {
                let a = angles_deg[i - 1] * DEG;
                let mut phi = if rng.random_bool(0.5) { a } else { -a };
                if (tilt + phi).abs() >= FRAC_PI_2 {
                    phi = -phi;
                }
                tilt += phi;
                signed.push(phi / DEG);
                let ax_prev = prev.kit.half_footprint()[0];
                let ax = kit.half_footprint()[0];
                // a dipping kit pivots on the bottom edge, a rising one on the top
                let (h_prev, h) = if phi > 0.0 {
                    (0.0, 0.0)
                } else {
                    (prev.kit.height(), kit.height())
                };
                prev.kit_pose
                    .compose(&Pose::from_translation(Vector3::new(ax_prev, 0.0, h_prev)))
                    .compose(&rot_y(phi))
                    .compose(&Pose::from_translation(Vector3::new(ax, 0.0, -h)))
            }
        };
        placed.push(AssemblyKit {
            object_id,
            kit,
            kit_pose,
        });
    }
    for i in 0..placed.len() {
        for j in 0..placed.len() {
            if i != j && kits_overlap(&placed[i], &placed[j]) {
                return Err(Error::Placement(format!("kits {i} and {j} intersect")));
            }
        }
    }
    let mut asm = KitAssembly {
        spec,
        kits: placed,
        bracket_angles: signed,
        base_frame: Pose::identity(),
    };
    let b = asm.local_bounds();
    let shift = Pose::from_translation(Vector3::new(-b.center().x, -b.center().y, -b.min.z));
    for k in &mut asm.kits {
        k.kit_pose = shift.compose(&k.kit_pose);
    }
    Ok(asm)
}

/// Build kits for `objects` and link them with random bracket angles drawn
/// from [10, 45] degrees. Single objects give a one-kit assembly.
pub fn build_assembly(objects: &[TriMesh], spec: &KitSpec, seed: u64) -> Result<KitAssembly> {
    if objects.is_empty() || objects.len() > MAX_KITS {
        return Err(Error::invalid(format!("assemblies hold 1..={MAX_KITS} kits")));
    }
    let kits = objects
        .iter()
        .enumerate()
        .map(|(i, o)| Ok((generate_kit(o, spec)?, i)))
        .collect::<Result<Vec<_>>>()?;
    if kits.len() == 1 {
        let (kit, id) = kits.into_iter().next().expect("one kit");
        return Ok(KitAssembly::single(kit, id, *spec));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b69_7473);
    let angles: Vec<f64> = (1..kits.len())
        .map(|_| rng.random_range(MIN_BRACKET_DEG..=MAX_BRACKET_DEG))
        .collect();
    link_kits(kits, &angles, *spec, seed)
}
