use std::collections::VecDeque;

use nalgebra::Vector3;

use super::mesh::TriMesh;
use super::raster::{cover, edge};
use super::volume::{GridSpec, VolumeKind, VoxelVolume, NEIGHBORS6};
use crate::error::{Error, Result};

/// Occupancy of `mesh` on `grid`: a voxel is 1 iff its center lies inside the
/// solid. Watertight meshes use z-column ray parity; leaky meshes fall back to
/// a surface shell whose exterior is flood-filled from the grid boundary.
pub fn voxelize_mesh(mesh: &TriMesh, grid: &GridSpec) -> Result<VoxelVolume> {
    let mut vol = VoxelVolume::zeros(*grid, VolumeKind::Occupancy);
    if mesh.is_empty() {
        return Ok(vol);
    }
    check_inside(mesh, grid)?;
    if mesh.is_watertight() {
        fill_parity(mesh, &mut vol);
    } else {
        fill_shell(mesh, &mut vol);
    }
    Ok(vol)
}

fn check_inside(mesh: &TriMesh, grid: &GridSpec) -> Result<()> {
    let mb = mesh.bounds();
    let gb = grid.bounds();
    let tol = 1e-9;
    let below = (gb.min - mb.min).map(|v| v.max(0.0));
    let above = (mb.max - gb.max).map(|v| v.max(0.0));
    if below.amax() > tol || above.amax() > tol {
        return Err(Error::OutOfBounds(format!(
            "mesh exceeds grid by [{:.6}, {:.6}, {:.6}] m below and [{:.6}, {:.6}, {:.6}] m above",
            below.x, below.y, below.z, above.x, above.y, above.z
        )));
    }
    Ok(())
}

fn fill_parity(mesh: &TriMesh, vol: &mut VoxelVolume) {
    let g = vol.grid;
    let s = g.voxel_size;
    let (nx, ny, nz) = (g.dims[0], g.dims[1], g.dims[2]);
    let mut hits: Vec<Vec<f64>> = vec![Vec::new(); nx * ny];
    for ti in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(ti);
        let (mut p0, mut p1, p2) = ([a.x, a.y], [b.x, b.y], [c.x, c.y]);
        let (mut z0, mut z1, z2) = (a.z, b.z, c.z);
        let area = edge(p0, p1, p2);
        if area == 0.0 {
            continue;
        }
        if area < 0.0 {
            std::mem::swap(&mut p0, &mut p1);
            std::mem::swap(&mut z0, &mut z1);
        }
        let area = area.abs();
        let xmin = p0[0].min(p1[0]).min(p2[0]);
        let xmax = p0[0].max(p1[0]).max(p2[0]);
        let ymin = p0[1].min(p1[1]).min(p2[1]);
        let ymax = p0[1].max(p1[1]).max(p2[1]);
        let i0 = (((xmin - g.origin.x) / s - 0.5).ceil().max(0.0)) as usize;
        let i1 = (((xmax - g.origin.x) / s - 0.5).floor()).min(nx as f64 - 1.0);
        let j0 = (((ymin - g.origin.y) / s - 0.5).ceil().max(0.0)) as usize;
        let j1 = (((ymax - g.origin.y) / s - 0.5).floor()).min(ny as f64 - 1.0);
        if i1 < 0.0 || j1 < 0.0 {
            continue;
        }
        for j in j0..=(j1 as usize) {
            let py = g.origin.y + (j as f64 + 0.5) * s;
            for i in i0..=(i1 as usize) {
                let p = [g.origin.x + (i as f64 + 0.5) * s, py];
                if let Some([w0, w1, w2]) = cover(&[p0, p1, p2], p) {
                    let z = (w0 * z0 + w1 * z1 + w2 * z2) / area;
                    hits[i + nx * j].push(z);
                }
            }
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let col = &mut hits[i + nx * j];
            if col.len() < 2 {
                continue;
            }
            col.sort_by(|a, b| a.total_cmp(b));
            for pair in col.chunks_exact(2) {
                let k0 = ((pair[0] - g.origin.z) / s - 0.5).ceil().max(0.0) as usize;
                let k1 = ((pair[1] - g.origin.z) / s - 0.5).floor();
                if k1 < 0.0 {
                    continue;
                }
                let k1 = (k1 as usize).min(nz - 1);
                for k in k0..=k1 {
                    vol.set(i, j, k, 1.0);
                }
            }
        }
    }
}

fn fill_shell(mesh: &TriMesh, vol: &mut VoxelVolume) {
    let g = vol.grid;
    let mut shell = vec![false; g.len()];
    let step = g.voxel_size * 0.25;
    for ti in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(ti);
        let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
        let n = (longest / step).ceil().max(1.0) as usize;
        for u in 0..=n {
            for v in 0..=(n - u) {
                let p: Vector3<f64> =
                    a + (b - a) * (u as f64 / n as f64) + (c - a) * (v as f64 / n as f64);
                if let Some([x, y, z]) = g.voxel_of(&p) {
                    shell[g.index(x, y, z)] = true;
                }
            }
        }
    }
    let mut outside = vec![false; g.len()];
    let mut queue = VecDeque::new();
    let d = g.dims;
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                let on_face = x == 0 || y == 0 || z == 0 || x + 1 == d[0] || y + 1 == d[1] || z + 1 == d[2];
                let i = g.index(x, y, z);
                if on_face && !shell[i] {
                    outside[i] = true;
                    queue.push_back([x as i64, y as i64, z as i64]);
                }
            }
        }
    }
    while let Some(c) = queue.pop_front() {
        for o in NEIGHBORS6 {
            let n = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
            if !g.in_range(n) {
                continue;
            }
            let i = g.index(n[0] as usize, n[1] as usize, n[2] as usize);
            if !outside[i] && !shell[i] {
                outside[i] = true;
                queue.push_back(n);
            }
        }
    }
    for (v, out) in vol.data.iter_mut().zip(outside) {
        *v = if out { 0.0 } else { 1.0 };
    }
}
