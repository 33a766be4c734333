use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::pose::Pose;
use crate::error::{Error, Result};

/// Axis-aligned box, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn inflate(&self, by: f64) -> Aabb {
        Aabb {
            min: self.min - Vector3::repeat(by),
            max: self.max + Vector3::repeat(by),
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vector3::new(a.x, a.y, a.z),
            Vector3::new(b.x, a.y, a.z),
            Vector3::new(a.x, b.y, a.z),
            Vector3::new(b.x, b.y, a.z),
            Vector3::new(a.x, a.y, b.z),
            Vector3::new(b.x, a.y, b.z),
            Vector3::new(a.x, b.y, b.z),
            Vector3::new(b.x, b.y, b.z),
        ]
    }

    pub fn transformed(&self, pose: &Pose) -> Aabb {
        let mut out = Aabb::empty();
        for c in self.corners() {
            out.grow(&pose.transform_point(&c));
        }
        out
    }
}

/// Indexed triangle mesh. Faces are wound counter-clockwise seen from outside.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Validates indices and drops zero-area triangles.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("non-finite vertex {v:?}")));
        }
        for t in &triangles {
            if t.iter().any(|&i| i as usize >= n) {
                return Err(Error::invalid(format!(
                    "triangle {t:?} references a vertex beyond {n}"
                )));
            }
        }
        let mut mesh = Self {
            vertices,
            triangles,
        };
        mesh.triangles.retain(|t| {
            let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
            t[0] != t[1] && t[1] != t[2] && t[0] != t[2] && (b - a).cross(&(c - a)).norm() > 1e-18
        });
        Ok(mesh)
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for t in &self.triangles {
            for &i in t {
                b.grow(&self.vertices[i as usize]);
            }
        }
        b
    }

    pub fn triangle(&self, i: usize) -> [Vector3<f64>; 3] {
        self.triangles[i].map(|k| self.vertices[k as usize])
    }

    pub fn transformed(&self, pose: &Pose) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| pose.transform_point(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn translated(&self, by: &Vector3<f64>) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v + by).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Concatenate meshes without merging vertices.
    pub fn merge(parts: &[TriMesh]) -> TriMesh {
        let mut out = TriMesh::default();
        for part in parts {
            let base = out.vertices.len() as u32;
            out.vertices.extend_from_slice(&part.vertices);
            out.triangles
                .extend(part.triangles.iter().map(|t| t.map(|i| i + base)));
        }
        out
    }

    /// Signed volume by the divergence theorem; positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Every undirected edge is used exactly twice, once in each direction.
    pub fn is_watertight(&self) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edges.entry(key).or_insert(0) += if a < b { 1 } else { -1 };
            }
        }
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges.values().all(|&v| v == 0) && counts.values().all(|&c| c == 2)
    }

    /// Merge vertices at bit-identical positions.
    pub fn weld(&self) -> TriMesh {
        let mut index: HashMap<[u64; 3], u32> = HashMap::new();
        let mut vertices = Vec::new();
        let remap: Vec<u32> = self
            .vertices
            .iter()
            .map(|v| {
                let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
                *index.entry(key).or_insert_with(|| {
                    vertices.push(*v);
                    (vertices.len() - 1) as u32
                })
            })
            .collect();
        let triangles = self
            .triangles
            .iter()
            .map(|t| t.map(|i| remap[i as usize]))
            .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
            .collect();
        TriMesh {
            vertices,
            triangles,
        }
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 40 + self.triangles.len() * 24);
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    /// Wavefront OBJ subset: `v` and `f` lines; polygons are fan-triangulated,
    /// `v/vt/vn` references keep the vertex index only.
    pub fn from_obj(text: &str) -> Result<TriMesh> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let coords: Vec<f64> = it
                        .take(3)
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::format("obj", format!("line {}: {e}", lineno + 1)))?;
                    if coords.len() != 3 {
                        return Err(Error::format(
                            "obj",
                            format!("line {}: vertex needs 3 coordinates", lineno + 1),
                        ));
                    }
                    vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for tok in it {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|e| {
                            Error::format("obj", format!("line {}: {e}", lineno + 1))
                        })?;
                        let resolved = if i > 0 {
                            i - 1
                        } else if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            return Err(Error::format(
                                "obj",
                                format!("line {}: index 0 is invalid", lineno + 1),
                            ));
                        };
                        if resolved < 0 {
                            return Err(Error::format(
                                "obj",
                                format!("line {}: index out of range", lineno + 1),
                            ));
                        }
                        idx.push(resolved as u32);
                    }
                    if idx.len() < 3 {
                        return Err(Error::format(
                            "obj",
                            format!("line {}: face needs 3 vertices", lineno + 1),
                        ));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriMesh::new(vertices, triangles)
    }

    pub fn load_obj(path: &Path) -> Result<TriMesh> {
        TriMesh::from_obj(&fs::read_to_string(path)?)
    }

    pub fn save_obj(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_obj())?;
        Ok(())
    }
}

/// Axis-aligned box with the given min corner and size.
pub fn cuboid(min: Vector3<f64>, size: Vector3<f64>) -> TriMesh {
    let c = Aabb {
        min,
        max: min + size,
    }
    .corners();
    let vertices = c.to_vec();
    // corners: bit0 = x, bit1 = y, bit2 = z
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let mut triangles = Vec::with_capacity(12);
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    TriMesh {
        vertices,
        triangles,
    }
}

/// Box centered at the origin.
pub fn centered_box(size: Vector3<f64>) -> TriMesh {
    cuboid(-size * 0.5, size)
}

/// Extrude a simple polygon (counter-clockwise, xy-plane) between `z0` and `z1`.
pub fn extrude_polygon(outline: &[[f64; 2]], z0: f64, z1: f64) -> Result<TriMesh> {
    let n = outline.len();
    if n < 3 || z1 <= z0 {
        return Err(Error::invalid("polygon needs >= 3 points and positive height"));
    }
    let mut pts: Vec<[f64; 2]> = outline.to_vec();
    if polygon_area(&pts) < 0.0 {
        pts.reverse();
    }
    let cap = ear_clip(&pts)?;
    let mut vertices = Vec::with_capacity(2 * n);
    for p in &pts {
        vertices.push(Vector3::new(p[0], p[1], z0));
    }
    for p in &pts {
        vertices.push(Vector3::new(p[0], p[1], z1));
    }
    let n32 = n as u32;
    let mut triangles = Vec::new();
    for t in &cap {
        triangles.push([t[0], t[2], t[1]]);
        triangles.push([t[0] + n32, t[1] + n32, t[2] + n32]);
    }
    for i in 0..n32 {
        let j = (i + 1) % n32;
        triangles.push([i, j, j + n32]);
        triangles.push([i, j + n32, i + n32]);
    }
    TriMesh::new(vertices, triangles)
}

/// Regular `segments`-gon prism approximating a cylinder along z.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriMesh {
    let outline: Vec<[f64; 2]> = (0..segments)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / segments as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect();
    extrude_polygon(&outline, -height / 2.0, height / 2.0).expect("regular polygon is valid")
}

/// UV sphere centered at the origin.
pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> TriMesh {
    let mut vertices = vec![Vector3::new(0.0, 0.0, radius)];
    for i in 1..stacks {
        let phi = std::f64::consts::PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let th = std::f64::consts::TAU * j as f64 / slices as f64;
            vertices.push(radius * Vector3::new(phi.sin() * th.cos(), phi.sin() * th.sin(), phi.cos()));
        }
    }
    vertices.push(Vector3::new(0.0, 0.0, -radius));
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + (j % slices)) as u32;
    let south = (vertices.len() - 1) as u32;
    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    for j in 0..slices {
        triangles.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    TriMesh {
        vertices,
        triangles,
    }
}

fn polygon_area(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    (0..n)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Ear clipping for a counter-clockwise simple polygon.
fn ear_clip(p: &[[f64; 2]]) -> Result<Vec<[u32; 3]>> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    let mut out = Vec::with_capacity(p.len() - 2);
    let mut guard = 0;
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (p[ia], p[ib], p[ic]);
            if cross2(a, b, c) <= 0.0 {
                continue;
            }
            let contains_other = idx.iter().any(|&j| {
                j != ia
                    && j != ib
                    && j != ic
                    && cross2(a, b, p[j]) >= 0.0
                    && cross2(b, c, p[j]) >= 0.0
                    && cross2(c, a, p[j]) >= 0.0
            });
            if contains_other {
                continue;
            }
            out.push([ia as u32, ib as u32, ic as u32]);
            idx.remove(k);
            clipped = true;
            break;
        }
        guard += 1;
        if !clipped || guard > 10 * p.len() {
            return Err(Error::invalid("polygon is not simple"));
        }
    }
    out.push([idx[0] as u32, idx[1] as u32, idx[2] as u32]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_is_closed_with_unit_volume() {
        let m = centered_box(Vector3::new(1.0, 1.0, 1.0));
        assert!(m.is_watertight());
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l_prism_volume() {
        let l = [[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]];
        let m = extrude_polygon(&l, 0.0, 0.5).unwrap();
        assert!(m.is_watertight());
        assert!((m.signed_volume() - 1.5).abs() < 1e-12);
        // clockwise input is accepted too
        let mut cw = l.to_vec();
        cw.reverse();
        let m2 = extrude_polygon(&cw, 0.0, 0.5).unwrap();
        assert!((m2.signed_volume() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn sphere_and_cylinder_are_closed() {
        let s = uv_sphere(1.0, 16, 32);
        assert!(s.is_watertight());
        assert!(s.signed_volume() > 3.9 && s.signed_volume() < 4.0 * std::f64::consts::PI / 3.0);
        let c = cylinder(1.0, 2.0, 48);
        assert!(c.is_watertight());
    }

    #[test]
    fn obj_round_trip_and_errors() {
        let m = centered_box(Vector3::new(0.02, 0.03, 0.04));
        let back = TriMesh::from_obj(&m.to_obj()).unwrap();
        assert_eq!(back, m);
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n";
        assert_eq!(TriMesh::from_obj(quad).unwrap().triangles.len(), 2);
        assert!(TriMesh::from_obj("v 0 0\n").is_err());
        assert!(TriMesh::from_obj("v 0 0 0\nf 1 2 3\n").is_err());
    }

    #[test]
    fn degenerate_triangles_are_dropped() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::x() * 2.0, Vector3::y()];
        let m = TriMesh::new(v, vec![[0, 1, 2], [0, 1, 3], [0, 0, 3]]).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 3]]);
    }
}
