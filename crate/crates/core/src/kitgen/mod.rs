//! Procedural kits: every object gets a block with a cavity cut from its
//! margin-dilated top-down silhouette, and kits are chained into tilted
//! assemblies.

pub mod assembly;
pub mod check;
pub mod shapes;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::mesh::TriMesh;
use crate::geom::pose::Pose;
use crate::geom::render::{render_depth, Camera, RenderItem};
use crate::geom::volume::{GridSpec, VolumeKind, VoxelVolume};

pub use assembly::{build_assembly, link_kits, AssemblyKit, KitAssembly};

/// Longest bounding-box edge of a normalized object.
pub const OBJECT_SIZE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KitSpec {
    /// Horizontal clearance between object and cavity wall.
    pub margin: f64,
    pub block_base_thickness: f64,
    /// Wall left around the cavity footprint.
    pub border: f64,
    /// CSG grid resolution.
    pub voxel_size: f64,
    /// Largest allowed block footprint edge.
    pub max_block: f64,
}

impl Default for KitSpec {
    fn default() -> Self {
        Self {
            margin: 0.0025,
            block_base_thickness: 0.01,
            border: 0.01,
            voxel_size: 0.001,
            max_block: 0.15,
        }
    }
}

impl KitSpec {
    /// Objects are inserted along the kit's local +z.
    pub const INSERTION_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

    pub fn with_margin(margin: f64) -> Self {
        Self {
            margin,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid(format!("margin {} must be >= 0", self.margin)));
        }
        if !positive(self.block_base_thickness) || !positive(self.border) {
            return Err(Error::invalid("block thickness and border must be positive"));
        }
        if !positive(self.voxel_size) || !positive(self.max_block) {
            return Err(Error::invalid("voxel size and block limit must be positive"));
        }
        Ok(())
    }
}

/// Scale uniformly so the longest bounding-box edge is 5 cm and center the
/// bounding box at the origin.
pub fn normalize_object(mesh: &TriMesh) -> Result<TriMesh> {
    if mesh.is_empty() {
        return Err(Error::invalid("cannot normalize an empty mesh"));
    }
    let b = mesh.bounds();
    let longest = b.extent().max();
    if !(longest > 1e-9) {
        return Err(Error::invalid("mesh has zero extent"));
    }
    Ok(mesh.translated(&-b.center()).scaled(OBJECT_SIZE / longest))
}

/// A single kit block. Its frame has the origin at the block's bottom
/// center with the opening facing +z.
#[derive(Clone, Debug, PartialEq)]
pub struct Kit {
    pub mesh: TriMesh,
    /// Solid occupancy of the block, in the kit frame.
    pub occupancy: VoxelVolume,
    /// Pose of the object frame in the kit frame when seated.
    pub cavity_pose: Pose,
    pub cavity_depth: f64,
}

impl Kit {
    pub fn height(&self) -> f64 {
        self.occupancy.grid.bounds().max.z
    }

    /// Half extents of the block footprint along x and y.
    pub fn half_footprint(&self) -> [f64; 2] {
        let b = self.occupancy.grid.bounds();
        [b.max.x, b.max.y]
    }
}

/// Translations used for the horizontal dilation: the original plus replicas
/// swept out to `m` voxels along the 4 axis and 4 diagonal directions.
pub fn dilation_offsets(m: f64) -> Vec<[i64; 2]> {
    let mut out = vec![[0, 0]];
    if m <= 0.0 {
        return out;
    }
    let steps = (2.0 * m).ceil() as usize;
    for k in 0..8 {
        let a = k as f64 * std::f64::consts::FRAC_PI_4;
        let (dx, dy) = (a.cos(), a.sin());
        for t in 1..=steps {
            let r = m * t as f64 / steps as f64;
            let o = [(dx * r).round() as i64, (dy * r).round() as i64];
            if !out.contains(&o) {
                out.push(o);
            }
        }
    }
    out
}

/// Top-down silhouette of `object` sampled at the centers of a 2D grid
/// (`nx` x `ny`, pitch `s`, lower corner `origin_xy`). Row `j` is world +y.
fn silhouette(object: &TriMesh, origin_xy: [f64; 2], s: f64, nx: usize, ny: usize) -> Result<Vec<bool>> {
    let b = object.bounds();
    let center = Vector3::new(
        origin_xy[0] + nx as f64 * s / 2.0,
        origin_xy[1] + ny as f64 * s / 2.0,
        b.max.z + 1.0,
    );
    let cam = Camera::ortho_top_down(center, s, nx, ny);
    let item = RenderItem {
        mesh: object,
        pose: Pose::identity(),
        instance: 1,
    };
    let (depth, _) = render_depth(&[item], &cam)?;
    let mut out = vec![false; nx * ny];
    for v in 0..ny {
        for u in 0..nx {
            // image rows run toward world -y
            out[u + nx * (ny - 1 - v)] = depth.data[u + nx * v] > 0.0;
        }
    }
    Ok(out)
}

/// Build the kit for `object` (already normalized).
pub fn generate_kit(object: &TriMesh, spec: &KitSpec) -> Result<Kit> {
    spec.validate()?;
    if object.is_empty() {
        return Err(Error::EmptyInput("object mesh has no triangles".into()));
    }
    let s = spec.voxel_size;
    let b = object.bounds();
    let e = b.extent();
    let m = spec.margin / s;
    let base = (spec.block_base_thickness / s).round().max(1.0) as usize;
    let border = (spec.border / s).round().max(1.0) as usize;
    let depth = (e.z / s - 1e-9).ceil().max(1.0) as usize;
    let reach = m.ceil() as usize + 1;
    let half = |ext: f64| (ext / 2.0 / s).ceil() as usize + reach + border + 1;
    let (hx, hy) = (half(e.x), half(e.y));
    let (nx, ny) = (2 * hx, 2 * hy);
    let c = b.center();
    let origin_xy = [c.x - hx as f64 * s, c.y - hy as f64 * s];
    let limit = (spec.max_block / s).floor() as usize;

    let footprint = silhouette(object, origin_xy, s, nx, ny)?;
    let offsets = dilation_offsets(m);
    let mut cavity = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            if !footprint[i + nx * j] {
                continue;
            }
            for o in &offsets {
                let (ci, cj) = (i as i64 + o[0], j as i64 + o[1]);
                cavity[ci as usize + nx * cj as usize] = true;
            }
        }
    }
    let mut lo = [usize::MAX; 2];
    let mut hi = [0usize; 2];
    for j in 0..ny {
        for i in 0..nx {
            if cavity[i + nx * j] {
                lo = [lo[0].min(i), lo[1].min(j)];
                hi = [hi[0].max(i), hi[1].max(j)];
            }
        }
    }
    if lo[0] == usize::MAX {
        return Err(Error::EmptyInput("object has an empty top-down silhouette".into()));
    }
    let (i0, j0) = (lo[0] - border, lo[1] - border);
    let bx = hi[0] - lo[0] + 1 + 2 * border;
    let by = hi[1] - lo[1] + 1 + 2 * border;
    if bx.max(by) > limit {
        return Err(Error::Spec(format!(
            "cavity with margin {} m needs a {:.3} m block, limit is {:.3} m",
            spec.margin,
            bx.max(by) as f64 * s,
            spec.max_block
        )));
    }
    let nz = base + depth;
    let grid = GridSpec::new(
        Vector3::new(-(bx as f64) * s / 2.0, -(by as f64) * s / 2.0, 0.0),
        s,
        [bx, by, nz],
    )?;
    let occupancy = VoxelVolume::from_fn(grid, VolumeKind::Occupancy, |x, y, z| {
        let open = z >= base && cavity[(x + i0) + nx * (y + j0)];
        if open {
            0.0
        } else {
            1.0
        }
    });
    // block bottom center, in object coordinates
    let bottom_center = Vector3::new(
        origin_xy[0] + (i0 as f64 + bx as f64 / 2.0) * s,
        origin_xy[1] + (j0 as f64 + by as f64 / 2.0) * s,
        b.min.z - base as f64 * s,
    );
    Ok(Kit {
        mesh: occupancy.to_mesh(),
        occupancy,
        cavity_pose: Pose::from_translation(-bottom_center),
        cavity_depth: depth as f64 * s,
    })
}
