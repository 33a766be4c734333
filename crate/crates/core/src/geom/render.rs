//! Software z-buffer rasterizer producing depth images and instance masks.
//!
//! Camera frame: +z looks into the scene, +x is image right, +y image down.
//! Depth is the camera-frame z of the nearest surface; `0` means no return.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::mesh::TriMesh;
use super::raster::{cover, edge};
use super::pose::Pose;
use crate::error::{Error, Result};

pub const DEPTH_MAGIC: &[u8; 8] = b"SEATDPT1";
pub const MASK_MAGIC: &[u8; 8] = b"SEATMSK1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Projection {
    /// Parallel rays, `pixel_pitch` meters per pixel; the camera origin sits
    /// at the image center.
    Ortho { pixel_pitch: f64 },
    Pinhole { fx: f64, fy: f64, cx: f64, cy: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub projection: Projection,
    /// Camera-to-world transform.
    pub pose: Pose,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera resolution must be non-zero"));
        }
        let ok = match self.projection {
            Projection::Ortho { pixel_pitch } => pixel_pitch > 0.0 && pixel_pitch.is_finite(),
            Projection::Pinhole { fx, fy, cx, cy } => {
                fx > 0.0 && fy > 0.0 && cx.is_finite() && cy.is_finite()
            }
        };
        if !ok || !self.pose.is_finite() {
            return Err(Error::invalid("camera intrinsics/extrinsics are invalid"));
        }
        Ok(())
    }

    /// Camera looking straight down (-z world) from height `z`, centered on
    /// `(x, y)`. Image right is world +x, image down is world -y.
    pub fn ortho_top_down(center: Vector3<f64>, pixel_pitch: f64, width: usize, height: usize) -> Camera {
        let q = super::pose::quat_from_axis_angle(&Vector3::x(), std::f64::consts::PI);
        Camera {
            width,
            height,
            projection: Projection::Ortho { pixel_pitch },
            pose: Pose::new(center, q),
        }
    }

    /// Pinhole camera at `eye` looking at `target`, world +z as up hint.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, width: usize, height: usize, f: f64) -> Camera {
        let fwd = (target - eye).normalize();
        let mut right = fwd.cross(&Vector3::z());
        if right.norm() < 1e-9 {
            right = Vector3::x();
        }
        let right = right.normalize();
        let down = fwd.cross(&right);
        let m = nalgebra::Matrix3::from_columns(&[right, down, fwd]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
        Camera {
            width,
            height,
            projection: Projection::Pinhole {
                fx: f,
                fy: f,
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
            },
            pose: Pose::new(eye, nalgebra::UnitQuaternion::from_rotation_matrix(&rot)),
        }
    }

    /// World point -> (u, v, depth) with continuous pixel coordinates
    /// (pixel `i` spans `[i, i+1)`). `None` behind the camera.
    #[inline]
    pub fn project(&self, world: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let c = self.pose.inverse_transform_point(world);
        self.project_camera(&c)
    }

    #[inline]
    pub(crate) fn project_camera(&self, c: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        match self.projection {
            Projection::Ortho { pixel_pitch } => Some((
                c.x / pixel_pitch + self.width as f64 / 2.0,
                c.y / pixel_pitch + self.height as f64 / 2.0,
                c.z,
            )),
            Projection::Pinhole { fx, fy, cx, cy } => {
                (c.z > 1e-6).then(|| (fx * c.x / c.z + cx, fy * c.y / c.z + cy, c.z))
            }
        }
    }

    /// World position of the surface seen at pixel center `(u, v)` with the
    /// given depth.
    pub fn unproject(&self, u: usize, v: usize, depth: f64) -> Vector3<f64> {
        let (pu, pv) = (u as f64 + 0.5, v as f64 + 0.5);
        let c = match self.projection {
            Projection::Ortho { pixel_pitch } => Vector3::new(
                (pu - self.width as f64 / 2.0) * pixel_pitch,
                (pv - self.height as f64 / 2.0) * pixel_pitch,
                depth,
            ),
            Projection::Pinhole { fx, fy, cx, cy } => {
                Vector3::new((pu - cx) / fx * depth, (pv - cy) / fy * depth, depth)
            }
        };
        self.pose.transform_point(&c)
    }

    pub fn is_ortho(&self) -> bool {
        matches!(self.projection, Projection::Ortho { .. })
    }
}

trait InverseTransform {
    fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64>;
}

impl InverseTransform for Pose {
    #[inline]
    fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.q.inverse_transform_vector(&(p - self.p))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major meters, 0 = no return.
    pub data: Vec<f32>,
    pub camera: Camera,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMask {
    pub width: usize,
    pub height: usize,
    /// Row-major instance ids, 0 = background.
    pub labels: Vec<u32>,
}

impl DepthImage {
    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.data.len() * 4);
        buf.extend_from_slice(DEPTH_MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, buf)?;
        fs::write(sidecar_path(path), serde_json::to_vec_pretty(&self.camera)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DepthImage> {
        let bytes = fs::read(path)?;
        let mut r = bytes.as_slice();
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DEPTH_MAGIC {
            return Err(Error::format("depth", "bad magic"));
        }
        let mut u = [0u8; 4];
        r.read_exact(&mut u)?;
        let width = u32::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let height = u32::from_le_bytes(u) as usize;
        if r.len() != width * height * 4 {
            return Err(Error::format("depth", "payload length mismatch"));
        }
        let data = r
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let camera: Camera = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
        Ok(DepthImage {
            width,
            height,
            data,
            camera,
        })
    }
}

impl InstanceMask {
    /// Magic, little-endian u32 width and height, then u32 labels row-major.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.labels.len() * 4);
        buf.extend_from_slice(MASK_MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.labels {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<InstanceMask> {
        let bytes = fs::read(path)?;
        if bytes.len() < 16 || &bytes[..8] != MASK_MAGIC {
            return Err(Error::format("mask", "bad magic"));
        }
        let u = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
        let (width, height) = (u(8), u(12));
        let body = &bytes[16..];
        if body.len() != width * height * 4 {
            return Err(Error::format("mask", "payload length mismatch"));
        }
        let labels = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(InstanceMask { width, height, labels })
    }
}

/// `<name>.cam.json` next to `<name>.<ext>`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.cam.json"))
}

/// A mesh placed in the world with an instance id (must be non-zero).
#[derive(Clone, Copy, Debug)]
pub struct RenderItem<'a> {
    pub mesh: &'a TriMesh,
    pub pose: Pose,
    pub instance: u32,
}

/// Render depth and instance ids of `items` seen by `camera`.
pub fn render_depth(items: &[RenderItem<'_>], camera: &Camera) -> Result<(DepthImage, InstanceMask)> {
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut labels = vec![0u32; w * h];
    let cam_inv = camera.pose.inverse();
    let pinhole = !camera.is_ortho();
    for item in items {
        if item.instance == 0 {
            return Err(Error::invalid("instance id 0 is reserved for background"));
        }
        let to_cam = cam_inv.compose(&item.pose);
        let projected: Vec<Option<(f64, f64, f64)>> = item
            .mesh
            .vertices
            .iter()
            .map(|v| camera.project_camera(&to_cam.transform_point(v)))
            .collect();
        for t in &item.mesh.triangles {
            let (Some(a), Some(b), Some(c)) = (
                projected[t[0] as usize],
                projected[t[1] as usize],
                projected[t[2] as usize],
            ) else {
                continue;
            };
            let (mut p0, mut p1, p2) = ([a.0, a.1], [b.0, b.1], [c.0, c.1]);
            // perspective-correct: interpolate 1/z for pinhole, z for ortho
            let attr = |z: f64| if pinhole { 1.0 / z } else { z };
            let (mut z0, mut z1, z2) = (attr(a.2), attr(b.2), attr(c.2));
            let area = edge(p0, p1, p2);
            if area == 0.0 {
                continue;
            }
            if area < 0.0 {
                std::mem::swap(&mut p0, &mut p1);
                std::mem::swap(&mut z0, &mut z1);
            }
            let area = area.abs();
            let umin = p0[0].min(p1[0]).min(p2[0]);
            let umax = p0[0].max(p1[0]).max(p2[0]);
            let vmin = p0[1].min(p1[1]).min(p2[1]);
            let vmax = p0[1].max(p1[1]).max(p2[1]);
            let u0 = (umin - 0.5).ceil().max(0.0);
            let u1 = (umax - 0.5).floor().min(w as f64 - 1.0);
            let v0 = (vmin - 0.5).ceil().max(0.0);
            let v1 = (vmax - 0.5).floor().min(h as f64 - 1.0);
            if u1 < u0 || v1 < v0 {
                continue;
            }
            for v in (v0 as usize)..=(v1 as usize) {
                for u in (u0 as usize)..=(u1 as usize) {
                    let p = [u as f64 + 0.5, v as f64 + 0.5];
                    let Some([w0, w1, w2]) = cover(&[p0, p1, p2], p) else {
                        continue;
                    };
                    let a = (w0 * z0 + w1 * z1 + w2 * z2) / area;
                    let depth = if pinhole { 1.0 / a } else { a };
                    if depth <= 0.0 {
                        continue;
                    }
                    let i = v * w + u;
                    if depth < zbuf[i] {
                        zbuf[i] = depth;
                        labels[i] = item.instance;
                    }
                }
            }
        }
    }
    let data = zbuf
        .iter()
        .map(|&z| if z.is_finite() { z as f32 } else { 0.0 })
        .collect();
    Ok((
        DepthImage {
            width: w,
            height: h,
            data,
            camera: *camera,
        },
        InstanceMask {
            width: w,
            height: h,
            labels,
        },
    ))
}
