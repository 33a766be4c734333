//! Validity checks for a generated kit against its source object.

use serde::{Deserialize, Serialize};

use super::{Kit, KitSpec};
use crate::error::Result;
use crate::geom::mesh::TriMesh;
use crate::geom::volume::{GridSpec, VoxelVolume};
use crate::geom::voxelize::voxelize_mesh;

/// Height of the straight insertion sweep above the seated pose.
pub const SWEEP_HEIGHT: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KitReport {
    /// Largest object/kit voxel overlap over the insertion sweep.
    pub max_overlap: usize,
    /// Cavity columns farther than margin + 1 voxel from the footprint.
    pub stray_columns: usize,
    /// Footprint columns left solid at the top of the block.
    pub covered_columns: usize,
}

impl KitReport {
    pub fn valid(&self) -> bool {
        self.max_overlap == 0 && self.stray_columns == 0 && self.covered_columns == 0
    }
}

/// Voxelize the seated object on the kit lattice, extended upward so it can
/// be lifted by `SWEEP_HEIGHT`, then sweep it down layer by layer and compare
/// the cavity opening with the object's footprint.
pub fn check_kit(object: &TriMesh, kit: &Kit, spec: &KitSpec) -> Result<KitReport> {
    let g = kit.occupancy.grid;
    let s = g.voxel_size;
    let lift = (SWEEP_HEIGHT / s).round() as usize;
    let tall = GridSpec::new(g.origin, s, [g.dims[0], g.dims[1], g.dims[2] + lift + 1])?;
    let occ = voxelize_mesh(&object.transformed(&kit.cavity_pose), &tall)?;
    let [nx, ny, nz] = g.dims;

    let solid: Vec<[usize; 3]> = (0..occ.grid.len())
        .filter(|&i| occ.data[i] > 0.5)
        .map(|i| occ.grid.coords(i))
        .collect();
    let max_overlap = (0..=lift)
        .map(|k| {
            solid
                .iter()
                .filter(|[x, y, z]| z + k < nz && kit.occupancy.solid_at(*x, *y, z + k))
                .count()
        })
        .max()
        .unwrap_or(0);

    let footprint = columns(&occ);
    let cavity: Vec<bool> = (0..nx * ny).map(|i| !kit.occupancy.solid_at(i % nx, i / nx, nz - 1)).collect();
    let reach = spec.margin / s + 1.0;
    let r = reach.ceil() as i64;
    let near_footprint = |i: usize| {
        let (x, y) = ((i % nx) as i64, (i / nx) as i64);
        (-r..=r).any(|dy| {
            (-r..=r).any(|dx| {
                let (u, v) = (x + dx, y + dy);
                ((dx * dx + dy * dy) as f64) <= reach * reach
                    && u >= 0
                    && v >= 0
                    && (u as usize) < nx
                    && (v as usize) < ny
                    && footprint[u as usize + nx * v as usize]
            })
        })
    };
    let stray_columns = (0..nx * ny).filter(|&i| cavity[i] && !near_footprint(i)).count();
    let covered_columns = (0..nx * ny).filter(|&i| footprint[i] && !cavity[i]).count();
    Ok(KitReport {
        max_overlap,
        stray_columns,
        covered_columns,
    })
}

fn columns(v: &VoxelVolume) -> Vec<bool> {
    let [nx, ny, nz] = v.grid.dims;
    (0..nx * ny)
        .map(|i| (0..nz).any(|z| v.get(i % nx, i / nx, z) > 0.5))
        .collect()
}
