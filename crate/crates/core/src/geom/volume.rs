use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::mesh::{Aabb, TriMesh};
use super::pose::Pose;
use crate::error::{Error, Result};

pub const VOLUME_MAGIC: &[u8; 8] = b"SEATVOL1";

/// Regular grid placement. Voxel `(x, y, z)` spans
/// `origin + [x, x+1) * voxel_size` on each axis; its center is at `+0.5`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Vector3<f64>, voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::invalid(format!("voxel size {voxel_size} must be positive")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite grid origin"));
        }
        Ok(Self {
            origin,
            voxel_size,
            dims,
        })
    }

    /// Grid of `dims` voxels whose geometric center is `center`.
    pub fn centered(center: Vector3<f64>, voxel_size: f64, dims: [usize; 3]) -> Self {
        let half = Vector3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64) * (voxel_size / 2.0);
        Self {
            origin: center - half,
            voxel_size,
            dims,
        }
    }

    /// Smallest grid covering `bounds`, origin snapped down to `voxel_size`
    /// multiples so that grids built from the same voxel size share a lattice.
    pub fn covering(bounds: &Aabb, voxel_size: f64) -> Self {
        let lo = bounds.min.map(|v| (v / voxel_size).floor());
        let hi = bounds.max.map(|v| (v / voxel_size).ceil());
        let dims = [0, 1, 2].map(|i| ((hi[i] - lo[i]) as usize).max(1));
        Self {
            origin: lo * voxel_size,
            voxel_size,
            dims,
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// x-fastest linear index.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let r = idx / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        self.origin + Vector3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * self.voxel_size
    }

    #[inline]
    pub fn center_signed(&self, v: [i64; 3]) -> Vector3<f64> {
        self.origin
            + Vector3::new(v[0] as f64 + 0.5, v[1] as f64 + 0.5, v[2] as f64 + 0.5) * self.voxel_size
    }

    /// Voxel containing `p`, possibly outside the grid.
    #[inline]
    pub fn voxel_signed(&self, p: &Vector3<f64>) -> [i64; 3] {
        let r = (p - self.origin) / self.voxel_size;
        [r.x.floor() as i64, r.y.floor() as i64, r.z.floor() as i64]
    }

    #[inline]
    pub fn in_range(&self, v: [i64; 3]) -> bool {
        (0..3).all(|i| v[i] >= 0 && (v[i] as usize) < self.dims[i])
    }

    pub fn voxel_of(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let v = self.voxel_signed(p);
        self.in_range(v).then(|| v.map(|c| c as usize))
    }

    pub fn bounds(&self) -> Aabb {
        Aabb {
            min: self.origin,
            max: self.origin
                + Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64)
                    * self.voxel_size,
        }
    }

    /// Integer voxel offset from `self` to `other` when both share a lattice.
    pub fn lattice_offset(&self, other: &GridSpec) -> Option<[i64; 3]> {
        if (self.voxel_size - other.voxel_size).abs() > 1e-12 * self.voxel_size {
            return None;
        }
        let d = (other.origin - self.origin) / self.voxel_size;
        let r = d.map(|v| v.round());
        ((d - r).amax() < 1e-4).then(|| [r.x as i64, r.y as i64, r.z as i64])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeKind {
    Tsdf,
    Occupancy,
    Feature,
}

impl VolumeKind {
    fn to_u8(self) -> u8 {
        match self {
            VolumeKind::Tsdf => 0,
            VolumeKind::Occupancy => 1,
            VolumeKind::Feature => 2,
        }
    }

    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(VolumeKind::Tsdf),
            1 => Ok(VolumeKind::Occupancy),
            2 => Ok(VolumeKind::Feature),
            other => Err(Error::format("volume", format!("unknown kind tag {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelVolume {
    pub grid: GridSpec,
    pub kind: VolumeKind,
    pub data: Vec<f32>,
}

impl VoxelVolume {
    pub fn filled(grid: GridSpec, kind: VolumeKind, value: f32) -> Self {
        Self {
            grid,
            kind,
            data: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: GridSpec, kind: VolumeKind) -> Self {
        Self::filled(grid, kind, 0.0)
    }

    pub fn from_fn(grid: GridSpec, kind: VolumeKind, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for z in 0..grid.dims[2] {
            for y in 0..grid.dims[1] {
                for x in 0..grid.dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { grid, kind, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.grid.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.grid.index(x, y, z);
        self.data[i] = v;
    }

    #[inline]
    pub fn get_signed(&self, v: [i64; 3]) -> Option<f32> {
        self.grid
            .in_range(v)
            .then(|| self.data[self.grid.index(v[0] as usize, v[1] as usize, v[2] as usize)])
    }

    /// Value of the voxel containing `p`, if inside the grid.
    #[inline]
    pub fn sample_nearest(&self, p: &Vector3<f64>) -> Option<f32> {
        self.get_signed(self.grid.voxel_signed(p))
    }

    /// Solid test for the volume's kind: occupancy > 0.5, or TSDF <= 0.
    #[inline]
    pub fn is_solid_value(&self, v: f32) -> bool {
        match self.kind {
            VolumeKind::Tsdf => v <= 0.0,
            _ => v > 0.5,
        }
    }

    #[inline]
    pub fn solid_at(&self, x: usize, y: usize, z: usize) -> bool {
        self.is_solid_value(self.get(x, y, z))
    }

    pub fn solid_at_point(&self, p: &Vector3<f64>) -> bool {
        self.sample_nearest(p).is_some_and(|v| self.is_solid_value(v))
    }

    pub fn count_solid(&self) -> usize {
        self.data.iter().filter(|&&v| self.is_solid_value(v)).count()
    }

    /// Occupancy copy (`1` where solid).
    pub fn to_occupancy(&self) -> VoxelVolume {
        VoxelVolume {
            grid: self.grid,
            kind: VolumeKind::Occupancy,
            data: self
                .data
                .iter()
                .map(|&v| if self.is_solid_value(v) { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Inclusive voxel bounding box of the solid voxels.
    pub fn solid_voxel_bounds(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, &v) in self.data.iter().enumerate() {
            if self.is_solid_value(v) {
                let c = self.grid.coords(i);
                for k in 0..3 {
                    lo[k] = lo[k].min(c[k]);
                    hi[k] = hi[k].max(c[k]);
                }
                any = true;
            }
        }
        any.then_some((lo, hi))
    }

    /// Metric bounding box of the solid voxels.
    pub fn solid_bounds(&self) -> Option<Aabb> {
        self.solid_voxel_bounds().map(|(lo, hi)| {
            let s = self.grid.voxel_size;
            Aabb {
                min: self.grid.origin + Vector3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64) * s,
                max: self.grid.origin
                    + Vector3::new(hi[0] as f64 + 1.0, hi[1] as f64 + 1.0, hi[2] as f64 + 1.0) * s,
            }
        })
    }

    /// Mean voxel-center position of the solid voxels.
    pub fn solid_centroid(&self) -> Option<Vector3<f64>> {
        let mut sum = Vector3::zeros();
        let mut n = 0usize;
        for (i, &v) in self.data.iter().enumerate() {
            if self.is_solid_value(v) {
                let [x, y, z] = self.grid.coords(i);
                sum += self.grid.center(x, y, z);
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Solid voxels with at least one non-solid 6-neighbour. Out-of-grid
    /// neighbours count as empty when `outside_empty`, otherwise they are
    /// ignored.
    pub fn boundary_voxels(&self, outside_empty: bool) -> Vec<[usize; 3]> {
        let d = self.grid.dims;
        let mut out = Vec::new();
        for z in 0..d[2] {
            for y in 0..d[1] {
                for x in 0..d[0] {
                    if !self.solid_at(x, y, z) {
                        continue;
                    }
                    let c = [x as i64, y as i64, z as i64];
                    let boundary = NEIGHBORS6.iter().any(|o| {
                        match self.get_signed([c[0] + o[0], c[1] + o[1], c[2] + o[2]]) {
                            Some(v) => !self.is_solid_value(v),
                            None => outside_empty,
                        }
                    });
                    if boundary {
                        out.push([x, y, z]);
                    }
                }
            }
        }
        out
    }

    /// Copy the region `window` out of `self`. Both grids must share a
    /// lattice; voxels of `window` outside `self` read `pad`.
    pub fn crop_to(&self, window: &GridSpec, pad: f32) -> Result<VoxelVolume> {
        let off = self
            .grid
            .lattice_offset(window)
            .ok_or_else(|| Error::invalid("crop window is not on the volume lattice"))?;
        let mut out = VoxelVolume::filled(*window, self.kind, pad);
        let d = window.dims;
        for z in 0..d[2] {
            let sz = z as i64 + off[2];
            if sz < 0 || sz as usize >= self.grid.dims[2] {
                continue;
            }
            for y in 0..d[1] {
                let sy = y as i64 + off[1];
                if sy < 0 || sy as usize >= self.grid.dims[1] {
                    continue;
                }
                for x in 0..d[0] {
                    let sx = x as i64 + off[0];
                    if sx < 0 || sx as usize >= self.grid.dims[0] {
                        continue;
                    }
                    let v = self.data[self.grid.index(sx as usize, sy as usize, sz as usize)];
                    out.data[window.index(x, y, z)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Nearest-neighbour resampling of `self` (living in frame `source_pose`)
    /// onto `target` (living in frame `target_pose`). Voxels mapping outside
    /// `self` read `pad`.
    pub fn resample(&self, source_pose: &Pose, target: &GridSpec, target_pose: &Pose, pad: f32) -> VoxelVolume {
        let rel = source_pose.inverse().compose(target_pose);
        VoxelVolume::from_fn(*target, self.kind, |x, y, z| {
            let p = rel.transform_point(&target.center(x, y, z));
            self.sample_nearest(&p).unwrap_or(pad)
        })
    }

    /// Boundary surface of the solid voxels as a closed quad mesh (two
    /// triangles per exposed face), vertices shared on the voxel lattice.
    pub fn to_mesh(&self) -> TriMesh {
        let g = &self.grid;
        let mut vmap: HashMap<[i64; 3], u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut vid = |c: [i64; 3], vertices: &mut Vec<Vector3<f64>>| -> u32 {
            *vmap.entry(c).or_insert_with(|| {
                vertices.push(
                    g.origin + Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64) * g.voxel_size,
                );
                (vertices.len() - 1) as u32
            })
        };
        for z in 0..g.dims[2] {
            for y in 0..g.dims[1] {
                for x in 0..g.dims[0] {
                    if !self.solid_at(x, y, z) {
                        continue;
                    }
                    let c = [x as i64, y as i64, z as i64];
                    for (axis, dir) in [(0, -1i64), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)] {
                        let mut n = c;
                        n[axis] += dir;
                        if self.get_signed(n).is_some_and(|v| self.is_solid_value(v)) {
                            continue;
                        }
                        let quad = face_quad(c, axis, dir);
                        let ids = quad.map(|q| vid(q, &mut vertices));
                        triangles.push([ids[0], ids[1], ids[2]]);
                        triangles.push([ids[0], ids[2], ids[3]]);
                    }
                }
            }
        }
        TriMesh {
            vertices,
            triangles,
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(VOLUME_MAGIC)?;
        for d in self.grid.dims {
            let d = u32::try_from(d).map_err(|_| Error::invalid("volume dimension exceeds u32"))?;
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&(self.grid.voxel_size as f32).to_le_bytes())?;
        for i in 0..3 {
            w.write_all(&(self.grid.origin[i] as f32).to_le_bytes())?;
        }
        w.write_all(&[self.kind.to_u8()])?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<VoxelVolume> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != VOLUME_MAGIC {
            return Err(Error::format("volume", "bad magic"));
        }
        let mut u = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut u)?;
            *d = u32::from_le_bytes(u) as usize;
        }
        r.read_exact(&mut u)?;
        let voxel_size = f32::from_le_bytes(u) as f64;
        let mut origin = Vector3::zeros();
        for i in 0..3 {
            r.read_exact(&mut u)?;
            origin[i] = f32::from_le_bytes(u) as f64;
        }
        let mut k = [0u8; 1];
        r.read_exact(&mut k)?;
        let kind = VolumeKind::from_u8(k[0])?;
        let grid = GridSpec::new(origin, voxel_size, dims)?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::format("volume", "dimensions overflow"))?;
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(VoxelVolume { grid, kind, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VoxelVolume> {
        let bytes = fs::read(path)?;
        VoxelVolume::read_from(&mut bytes.as_slice())
    }
}

/// Point-in-solid test in a fixed frame.
pub trait SolidQuery {
    fn is_solid(&self, p: &Vector3<f64>) -> bool;
}

impl SolidQuery for VoxelVolume {
    fn is_solid(&self, p: &Vector3<f64>) -> bool {
        self.solid_at_point(p)
    }
}

pub const NEIGHBORS6: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Lattice corners of the face of voxel `c` facing `dir` along `axis`,
/// counter-clockwise seen from outside.
fn face_quad(c: [i64; 3], axis: usize, dir: i64) -> [[i64; 3]; 4] {
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut base = c;
    if dir > 0 {
        base[axis] += 1;
    }
    let corner = |du: i64, dv: i64| {
        let mut p = base;
        p[u] += du;
        p[v] += dv;
        p
    };
    if dir > 0 {
        [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)]
    } else {
        [corner(0, 0), corner(0, 1), corner(1, 1), corner(1, 0)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(dims: [usize; 3]) -> GridSpec {
        GridSpec::new(Vector3::new(-0.01, 0.02, 0.0), 0.001, dims).unwrap()
    }

    proptest! {
        #[test]
        fn linear_index_round_trips(nx in 1usize..20, ny in 1usize..20, nz in 1usize..20, seed in 0usize..10_000) {
            let g = grid([nx, ny, nz]);
            let idx = seed % g.len();
            let [x, y, z] = g.coords(idx);
            prop_assert_eq!(g.index(x, y, z), idx);
            prop_assert!(x < nx && y < ny && z < nz);
        }

        #[test]
        fn file_round_trip(nx in 1usize..6, ny in 1usize..6, nz in 1usize..6, vals in proptest::collection::vec(-1.0f32..1.0, 216)) {
            let g = grid([nx, ny, nz]);
            let vol = VoxelVolume::from_fn(g, VolumeKind::Tsdf, |x, y, z| vals[x + 6 * (y + 6 * z)]);
            let mut buf = Vec::new();
            vol.write_to(&mut buf).unwrap();
            prop_assert_eq!(buf.len(), 8 + 12 + 4 + 12 + 1 + 4 * g.len());
            let back = VoxelVolume::read_from(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.data, vol.data);
            prop_assert_eq!(back.grid.dims, vol.grid.dims);
            prop_assert_eq!(back.kind, VolumeKind::Tsdf);
        }
    }

    #[test]
    fn x_is_fastest() {
        let g = grid([3, 4, 5]);
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let g = GridSpec::new(Vector3::new(1.0, 2.0, 3.0), 0.5, [2, 1, 1]).unwrap();
        let mut vol = VoxelVolume::zeros(g, VolumeKind::Occupancy);
        vol.data[1] = 1.0;
        let mut buf = Vec::new();
        vol.write_to(&mut buf).unwrap();
        assert_eq!(&buf[0..8], b"SEATVOL1");
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[20..24], &0.5f32.to_le_bytes());
        assert_eq!(&buf[24..28], &1.0f32.to_le_bytes());
        assert_eq!(buf[36], 1);
        assert_eq!(&buf[41..45], &1.0f32.to_le_bytes());
        assert!(VoxelVolume::read_from(&mut &b"NOTAVOL1"[..]).is_err());
    }

    #[test]
    fn face_culled_mesh_of_block_is_closed() {
        let g = grid([4, 4, 4]);
        let vol = VoxelVolume::from_fn(g, VolumeKind::Occupancy, |x, y, z| {
            (x >= 1 && x <= 2 && y >= 1 && y <= 2 && z <= 2) as u8 as f32
        });
        let m = vol.to_mesh();
        assert!(m.is_watertight());
        let expected = 2.0 * 2.0 * 3.0 * 1e-9;
        assert!((m.signed_volume() - expected).abs() < 1e-15);
    }

    #[test]
    fn crop_pads_outside() {
        let g = grid([4, 4, 4]);
        let vol = VoxelVolume::filled(g, VolumeKind::Occupancy, 1.0);
        let win = GridSpec {
            origin: g.origin - Vector3::repeat(2.0 * g.voxel_size),
            ..g
        };
        let c = vol.crop_to(&win, 0.0).unwrap();
        assert_eq!(c.get(0, 0, 0), 0.0);
        assert_eq!(c.get(2, 2, 2), 1.0);
        assert_eq!(c.count_solid(), 8);
    }
}
