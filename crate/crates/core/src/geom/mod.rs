//! Geometry primitives shared by every stage: poses, meshes, voxel grids,
//! depth rendering, TSDF fusion and surface sampling.

pub mod mesh;
pub mod pose;
mod raster;
pub mod render;
pub mod sample;
pub mod tsdf;
pub mod volume;
pub mod voxelize;

pub use mesh::{Aabb, TriMesh};
pub use pose::{quat_geodesic, Pose, DEG};
pub use render::{render_depth, Camera, DepthImage, InstanceMask, Projection, RenderItem};
pub use sample::{sample_surface_points, LabeledPointCloud};
pub use tsdf::{tsdf_fuse, InstanceSelect};
pub use volume::{GridSpec, SolidQuery, VolumeKind, VoxelVolume};
pub use voxelize::voxelize_mesh;
