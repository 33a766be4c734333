use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::volume::{VolumeKind, VoxelVolume, NEIGHBORS6};
use crate::error::{Error, Result};

/// Points with a per-point +1 / -1 label (object / kit).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<Vector3<f64>>,
    pub labels: Vec<i8>,
}

impl LabeledPointCloud {
    pub fn new(points: Vec<Vector3<f64>>, labels: Vec<i8>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("point cloud has no points".into()));
        }
        if points.len() != labels.len() {
            return Err(Error::invalid("points and labels differ in length"));
        }
        if labels.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::invalid("labels must be +1 or -1"));
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Concatenation of two clouds.
    pub fn join(&self, other: &LabeledPointCloud) -> LabeledPointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        LabeledPointCloud { points, labels }
    }
}

/// Voxels on the solid/empty interface. For TSDF volumes these are the
/// voxels with `tsdf <= 0` that have a positive observed neighbour; for
/// occupancy they are occupied voxels with an empty 6-neighbour. Grid edges
/// never create boundary.
pub fn surface_voxels(vol: &VoxelVolume) -> Vec<[usize; 3]> {
    match vol.kind {
        VolumeKind::Tsdf => {
            let d = vol.grid.dims;
            let mut out = Vec::new();
            for z in 0..d[2] {
                for y in 0..d[1] {
                    for x in 0..d[0] {
                        if vol.get(x, y, z) > 0.0 {
                            continue;
                        }
                        let c = [x as i64, y as i64, z as i64];
                        let crosses = NEIGHBORS6.iter().any(|o| {
                            vol.get_signed([c[0] + o[0], c[1] + o[1], c[2] + o[2]])
                                .is_some_and(|v| v > 0.0 && v < 1.0)
                        });
                        if crosses {
                            out.push([x, y, z]);
                        }
                    }
                }
            }
            out
        }
        _ => vol.boundary_voxels(false),
    }
}

/// Draw exactly `n` points near the surface of `vol`: uniformly chosen
/// surface voxels, each jittered uniformly within its cell.
pub fn sample_surface_points(vol: &VoxelVolume, n: usize, label: i8, seed: u64) -> Result<LabeledPointCloud> {
    if label != 1 && label != -1 {
        return Err(Error::invalid("label must be +1 or -1"));
    }
    if n == 0 {
        return Err(Error::invalid("point count must be positive"));
    }
    let surface = surface_voxels(vol);
    if surface.is_empty() {
        return Err(Error::EmptySurface);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = vol.grid.voxel_size;
    let points = (0..n)
        .map(|_| {
            let [x, y, z] = surface[rng.random_range(0..surface.len())];
            let jitter = Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            vol.grid.center(x, y, z) + jitter * s
        })
        .collect();
    Ok(LabeledPointCloud {
        points,
        labels: vec![label; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::mesh::cuboid;
    use crate::geom::voxelize::voxelize_mesh;
    use crate::geom::volume::GridSpec;

    fn cube_volume() -> (VoxelVolume, f64, f64) {
        let s = 0.001;
        let (lo, hi) = (0.004, 0.036);
        let mesh = cuboid(Vector3::repeat(lo), Vector3::repeat(hi - lo));
        let g = GridSpec::new(Vector3::zeros(), s, [40, 40, 40]).unwrap();
        (voxelize_mesh(&mesh, &g).unwrap(), lo, hi)
    }

    fn cube_distance(p: &Vector3<f64>, lo: f64, hi: f64) -> f64 {
        // distance to the surface of [lo, hi]^3
        let inside = (0..3).all(|i| p[i] >= lo && p[i] <= hi);
        if inside {
            (0..3).map(|i| (p[i] - lo).min(hi - p[i])).fold(f64::INFINITY, f64::min)
        } else {
            let d = p.map(|v| (lo - v).max(0.0).max(v - hi));
            d.norm()
        }
    }

    #[test]
    fn object_cloud_stays_on_cube_surface() {
        let (vol, lo, hi) = cube_volume();
        let cloud = sample_surface_points(&vol, 2048, 1, 11).unwrap();
        assert_eq!(cloud.len(), 2048);
        assert!(cloud.labels.iter().all(|&l| l == 1));
        let worst = cloud
            .points
            .iter()
            .map(|p| cube_distance(p, lo, hi))
            .fold(0.0, f64::max);
        assert!(worst <= vol.grid.voxel_size, "{worst}");
    }

    #[test]
    fn kit_cloud_is_labelled_negative() {
        let (vol, _, _) = cube_volume();
        let cloud = sample_surface_points(&vol, 4096, -1, 3).unwrap();
        assert_eq!(cloud.len(), 4096);
        assert!(cloud.labels.iter().all(|&l| l == -1));
    }

    #[test]
    fn deterministic_per_seed() {
        let (vol, _, _) = cube_volume();
        let a = sample_surface_points(&vol, 100, 1, 5).unwrap();
        let b = sample_surface_points(&vol, 100, 1, 5).unwrap();
        let c = sample_surface_points(&vol, 100, 1, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_volume_has_no_surface() {
        let g = GridSpec::new(Vector3::zeros(), 0.001, [4, 4, 4]).unwrap();
        let vol = VoxelVolume::zeros(g, VolumeKind::Occupancy);
        assert!(matches!(sample_surface_points(&vol, 10, 1, 0), Err(Error::EmptySurface)));
    }
}
