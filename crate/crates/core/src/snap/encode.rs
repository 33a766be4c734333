//! Feature encoders for the position search. The object side becomes an
//! integer-weighted kernel, the kit side a per-voxel value.

use nalgebra::{UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geom::mesh::Aabb;
use crate::geom::volume::{GridSpec, VolumeKind, VoxelVolume};

pub const DEFAULT_SHELL_VOXELS: usize = 8;

pub trait Encoder: Send + Sync {
    fn name(&self) -> &str;
    /// Integer-valued weights on the object's own grid.
    fn object_weights(&self, occ: &VoxelVolume) -> VoxelVolume;
    /// Feature of one kit voxel.
    fn kit_value(&self, solid: bool) -> f64;
}

/// Free voxels around the object weigh minus their distance (in voxels, up
/// to `shell`) to it, both sideways within each layer and straight below
/// each column. Object voxels weigh `1 + ceil(shell mass / object voxels)`
/// so that no amount of solid around the object pays for pushing it into
/// solid. Kit voxels read +1 when free and -1 when solid: the object is
/// rewarded in free space, penalized inside solid, and its surroundings
/// are rewarded for being solid. The growing shell weights make the score
/// peak where the clearance is balanced.
#[derive(Clone, Copy, Debug)]
pub struct SignedOccupancy {
    pub shell: usize,
}

/// Plain signed occupancy with no shell: any collision-free placement
/// scores the same.
#[derive(Clone, Copy, Debug)]
pub struct PlainOccupancy;

impl Encoder for SignedOccupancy {
    fn name(&self) -> &str {
        "signed-occupancy"
    }

    fn object_weights(&self, occ: &VoxelVolume) -> VoxelVolume {
        shell_weights(occ, self.shell)
    }

    fn kit_value(&self, solid: bool) -> f64 {
        if solid {
            -1.0
        } else {
            1.0
        }
    }
}

impl Encoder for PlainOccupancy {
    fn name(&self) -> &str {
        "plain-occupancy"
    }

    fn object_weights(&self, occ: &VoxelVolume) -> VoxelVolume {
        VoxelVolume {
            grid: occ.grid,
            kind: VolumeKind::Feature,
            data: occ.data.iter().map(|&v| if occ.is_solid_value(v) { 1.0 } else { 0.0 }).collect(),
        }
    }

    fn kit_value(&self, solid: bool) -> f64 {
        if solid {
            -1.0
        } else {
            1.0
        }
    }
}

pub fn encoder(name: &str) -> Result<Box<dyn Encoder>> {
    match name {
        "signed-occupancy" => Ok(Box::new(SignedOccupancy {
            shell: DEFAULT_SHELL_VOXELS,
        })),
        "plain-occupancy" => Ok(Box::new(PlainOccupancy)),
        _ => Err(Error::invalid(format!("unknown encoder {name:?}"))),
    }
}

fn shell_weights(occ: &VoxelVolume, shell: usize) -> VoxelVolume {
    let g = occ.grid;
    let [nx, ny, nz] = g.dims;
    let solid: Vec<bool> = occ.data.iter().map(|&v| occ.is_solid_value(v)).collect();
    let mut dist = vec![u8::MAX; g.len()];
    let s = shell as i64;
    let disk: Vec<(i64, i64, u8)> = (-s..=s)
        .flat_map(|dy| (-s..=s).map(move |dx| (dx, dy)))
        .filter_map(|(dx, dy)| {
            let d = ((dx * dx + dy * dy) as f64).sqrt().ceil() as i64;
            (d > 0 && d <= s).then_some((dx, dy, d as u8))
        })
        .collect();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !solid[g.index(x, y, z)] {
                    continue;
                }
                let edge = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|(dx, dy)| {
                    let (px, py) = (x as i64 + dx, y as i64 + dy);
                    px < 0
                        || py < 0
                        || px >= nx as i64
                        || py >= ny as i64
                        || !solid[g.index(px as usize, py as usize, z)]
                });
                if !edge {
                    continue;
                }
                for &(dx, dy, d) in &disk {
                    let (px, py) = (x as i64 + dx, y as i64 + dy);
                    if px < 0 || py < 0 || px >= nx as i64 || py >= ny as i64 {
                        continue;
                    }
                    let i = g.index(px as usize, py as usize, z);
                    if !solid[i] && d < dist[i] {
                        dist[i] = d;
                    }
                }
            }
        }
    }
    for y in 0..ny {
        for x in 0..nx {
            let Some(z0) = (0..nz).find(|&z| solid[g.index(x, y, z)]) else {
                continue;
            };
            for d in 1..=shell.min(z0) {
                let i = g.index(x, y, z0 - d);
                if (d as u8) < dist[i] {
                    dist[i] = d as u8;
                }
            }
        }
    }
    let n = solid.iter().filter(|&&v| v).count().max(1);
    let mass: usize = dist.iter().filter(|&&d| d != u8::MAX).map(|&d| d as usize).sum();
    let inner = (1 + mass.div_ceil(n)) as f32;
    VoxelVolume {
        grid: g,
        kind: VolumeKind::Feature,
        data: (0..g.len())
            .map(|i| {
                if solid[i] {
                    inner
                } else if dist[i] != u8::MAX {
                    -(dist[i] as f32)
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

/// Object weights rotated into world axes. Kernel voxel `i` has its center
/// at `(lo + i + 0.5) * voxel_size` from the object origin, so with the
/// origin on a lattice corner the kernel lines up with lattice voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub lo: [i64; 3],
    pub dims: [usize; 3],
    pub weights: Vec<f64>,
}

impl Kernel {
    /// Rotate `weights` (object frame, origin at the object origin) by `q`
    /// onto world-aligned voxels of the same size, nearest-neighbour.
    pub fn rotated(weights: &VoxelVolume, q: &UnitQuaternion<f64>) -> Result<Kernel> {
        let g = weights.grid;
        let s = g.voxel_size;
        let mut nz = Aabb::empty();
        for (i, &w) in weights.data.iter().enumerate() {
            if w != 0.0 {
                let [x, y, z] = g.coords(i);
                let c = g.center(x, y, z);
                nz.grow(&c.add_scalar(-s / 2.0));
                nz.grow(&c.add_scalar(s / 2.0));
            }
        }
        if nz.is_empty() {
            return Err(Error::EmptyInput("object volume has no solid voxels".into()));
        }
        let rb = nz.transformed(&crate::geom::pose::Pose::new(Vector3::zeros(), *q));
        let lo = [0, 1, 2].map(|a| (rb.min[a] / s).floor() as i64 - 1);
        let hi = [0, 1, 2].map(|a| (rb.max[a] / s).ceil() as i64 + 1);
        let dims = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
        let inv = q.inverse();
        let mut out = vec![0.0; dims.iter().product()];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let m = Vector3::new(
                        (lo[0] + x as i64) as f64 + 0.5,
                        (lo[1] + y as i64) as f64 + 0.5,
                        (lo[2] + z as i64) as f64 + 0.5,
                    ) * s;
                    if let Some(w) = weights.sample_nearest(&(inv * m)) {
                        out[x + dims[0] * (y + dims[1] * z)] = w as f64;
                    }
                }
            }
        }
        Ok(Kernel { lo, dims, weights: out })
    }

    /// Kernel with the object weights as they are (identity rotation); the
    /// weight grid origin must be a multiple of its voxel size.
    pub fn aligned(weights: &VoxelVolume) -> Result<Kernel> {
        let g = weights.grid;
        let o = g.origin / g.voxel_size;
        let r = o.map(|v| v.round());
        if (o - r).amax() > 1e-6 {
            return Err(Error::invalid("weight grid is not centered on the lattice"));
        }
        Ok(Kernel {
            lo: [r.x as i64, r.y as i64, r.z as i64],
            dims: g.dims,
            weights: weights.data.iter().map(|&w| w as f64).collect(),
        })
    }

    pub fn grid(&self, voxel_size: f64) -> GridSpec {
        let o = Vector3::new(self.lo[0] as f64, self.lo[1] as f64, self.lo[2] as f64) * voxel_size;
        GridSpec {
            origin: o,
            voxel_size,
            dims: self.dims,
        }
    }
}
