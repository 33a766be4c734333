use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seat_core::geom::mesh::{centered_box, extrude_polygon, TriMesh};
use seat_core::geom::pose::{quat_from_axis_angle, Pose, DEG};
use seat_core::geom::volume::{GridSpec, VoxelVolume};
use seat_core::geom::voxelize::voxelize_mesh;
use seat_core::kitgen::shapes::{make_shape, ShapeKind};
use seat_core::kitgen::check::check_kit;
use seat_core::kitgen::{build_assembly, generate_kit, link_kits, normalize_object, Kit, KitSpec};
use seat_core::Error;

/// Kit lattice extended 12 cm upward so the object can be swept from hover.
fn sweep_grid(kit: &Kit) -> GridSpec {
    let g = kit.occupancy.grid;
    GridSpec::new(g.origin, g.voxel_size, [g.dims[0], g.dims[1], g.dims[2] + 120]).unwrap()
}

fn object_at_cavity(object: &TriMesh, kit: &Kit) -> VoxelVolume {
    voxelize_mesh(&object.transformed(&kit.cavity_pose), &sweep_grid(kit)).unwrap()
}

/// Object voxels shifted up by `k` layers that land in kit solid.
fn overlap_at_lift(obj: &VoxelVolume, kit: &Kit, k: usize) -> usize {
    let d = obj.grid.dims;
    let mut n = 0;
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if obj.get(x, y, z) > 0.5 && z + k < kit.occupancy.grid.dims[2] && kit.occupancy.solid_at(x, y, z + k) {
                    n += 1;
                }
            }
        }
    }
    n
}

/// Cavity columns: open at the top layer of the block.
fn cavity_columns(kit: &Kit) -> Vec<bool> {
    let [nx, ny, nz] = kit.occupancy.grid.dims;
    (0..nx * ny).map(|i| !kit.occupancy.solid_at(i % nx, i / nx, nz - 1)).collect()
}

fn object_columns(obj: &VoxelVolume) -> Vec<bool> {
    let [nx, ny, nz] = obj.grid.dims;
    (0..nx * ny)
        .map(|i| (0..nz).any(|z| obj.get(i % nx, i / nx, z) > 0.5))
        .collect()
}

fn l_prism() -> TriMesh {
    let l = extrude_polygon(
        &[[0.0, 0.0], [0.05, 0.0], [0.05, 0.02], [0.02, 0.02], [0.02, 0.05], [0.0, 0.05]],
        0.0,
        0.03,
    )
    .unwrap();
    normalize_object(&l).unwrap()
}

#[test]
fn cube_cavity_has_margin_clearance() {
    let cube = centered_box(Vector3::repeat(0.04));
    let kit = generate_kit(&cube, &KitSpec::with_margin(0.0025)).unwrap();
    let obj = object_at_cavity(&cube, &kit);
    let cav = cavity_columns(&kit);
    let [nx, ny, _] = kit.occupancy.grid.dims;
    let cols: Vec<usize> = (0..nx * ny).filter(|&i| cav[i]).collect();
    let (xs, ys): (Vec<usize>, Vec<usize>) = cols.iter().map(|&i| (i % nx, i / nx)).unzip();
    let w = xs.iter().max().unwrap() - xs.iter().min().unwrap() + 1;
    let h = ys.iter().max().unwrap() - ys.iter().min().unwrap() + 1;
    // 4.5 cm within one voxel per side
    assert!(w.abs_diff(45) <= 2 && h.abs_diff(45) <= 2, "{w} x {h}");
    // clearance on every horizontal side within [0, 2 * margin]
    let ob = obj.solid_bounds().unwrap();
    let seated = cube.transformed(&kit.cavity_pose).bounds();
    assert!((ob.min - seated.min).xy().amax() < 1e-9);
    let s = kit.occupancy.grid.voxel_size;
    let cav_min_x = kit.occupancy.grid.origin.x + *xs.iter().min().unwrap() as f64 * s;
    let cav_max_x = kit.occupancy.grid.origin.x + (*xs.iter().max().unwrap() + 1) as f64 * s;
    for c in [seated.min.x - cav_min_x, cav_max_x - seated.max.x] {
        assert!((0.0..=0.005 + 1e-9).contains(&c), "clearance {c}");
    }
    assert_eq!(overlap_at_lift(&obj, &kit, 0), 0);
    // cavity depth equals object height
    assert!((kit.cavity_depth - 0.04).abs() < 1e-12);
}

#[test]
fn zero_margin_cavity_matches_footprint() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in ShapeKind::ALL {
        let obj = normalize_object(&make_shape(kind, &mut rng)).unwrap();
        let kit = generate_kit(&obj, &KitSpec::with_margin(0.0)).unwrap();
        let occ = object_at_cavity(&obj, &kit);
        let a = cavity_columns(&kit);
        let b = object_columns(&occ);
        let nx = kit.occupancy.grid.dims[0];
        // every mismatching column sits next to a column of the footprint
        for (i, (&ca, &cb)) in a.iter().zip(&b).enumerate() {
            if ca != cb {
                let (x, y) = ((i % nx) as i64, (i / nx) as i64);
                let near = (-1..=1).any(|dy| {
                    (-1..=1).any(|dx| {
                        let (u, v) = (x + dx, y + dy);
                        u >= 0 && v >= 0 && (u as usize) < nx && b.get(u as usize + nx * v as usize) == Some(&true)
                    })
                });
                assert!(near, "{kind:?} column {x},{y}");
            }
        }
    }
}

#[test]
fn l_cavity_rejects_rotated_object() {
    let obj = l_prism();
    let kit = generate_kit(&obj, &KitSpec::with_margin(0.0025)).unwrap();
    let seated = object_at_cavity(&obj, &kit);
    assert_eq!(overlap_at_lift(&seated, &kit, 0), 0);
    // the cavity is L-shaped, not the bounding box
    let cav = cavity_columns(&kit).iter().filter(|&&c| c).count();
    let [nx, ny, _] = kit.occupancy.grid.dims;
    assert!((cav as f64) < 0.8 * ((nx - 20) * (ny - 20)) as f64);
    let turn = Pose::new(Vector3::zeros(), quat_from_axis_angle(&Vector3::z(), 90.0 * DEG));
    let turned = obj.transformed(&turn);
    let rotated = voxelize_mesh(&turned.transformed(&kit.cavity_pose), &sweep_grid(&kit)).unwrap();
    assert!(overlap_at_lift(&rotated, &kit, 0) > 0);
}

#[test]
fn generated_kits_conform_and_admit_straight_insertion() {
    let spec = KitSpec::with_margin(0.0025);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let offsets = seat_core::kitgen::dilation_offsets(spec.margin / spec.voxel_size);
    let reach = (spec.margin / spec.voxel_size + 1.0).powi(2);
    for kind in ShapeKind::ALL {
        for _ in 0..3 {
            let obj = normalize_object(&make_shape(kind, &mut rng)).unwrap();
            let kit = generate_kit(&obj, &spec).unwrap();
            let occ = object_at_cavity(&obj, &kit);
            // straight-line insertion from 10 cm above, 1 mm steps
            for k in 0..=100 {
                assert_eq!(overlap_at_lift(&occ, &kit, k), 0, "{kind:?} lift {k}");
            }
            // cavity lies within the object's silhouette dilated by margin + 1 voxel
            let cav = cavity_columns(&kit);
            let fp = object_columns(&occ);
            let nx = kit.occupancy.grid.dims[0];
            let fp_idx: Vec<(i64, i64)> = (0..fp.len())
                .filter(|&i| fp[i])
                .map(|i| ((i % nx) as i64, (i / nx) as i64))
                .collect();
            for (i, &c) in cav.iter().enumerate() {
                if !c {
                    continue;
                }
                let (x, y) = ((i % nx) as i64, (i / nx) as i64);
                let ok = fp_idx
                    .iter()
                    .any(|&(u, v)| (((u - x).pow(2) + (v - y).pow(2)) as f64) <= reach);
                assert!(ok, "{kind:?} column {x},{y} too far from object");
            }
            assert!(offsets.len() > 1);
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let obj = normalize_object(&make_shape(ShapeKind::Notched, &mut rng)).unwrap();
    let a = generate_kit(&obj, &KitSpec::default()).unwrap();
    let b = generate_kit(&obj, &KitSpec::default()).unwrap();
    let (mut ba, mut bb) = (Vec::new(), Vec::new());
    a.occupancy.write_to(&mut ba).unwrap();
    b.occupancy.write_to(&mut bb).unwrap();
    assert_eq!(ba, bb);
    assert_eq!(a.cavity_pose, b.cavity_pose);
}

fn two_cubes() -> Vec<(Kit, usize)> {
    let cube = normalize_object(&centered_box(Vector3::repeat(0.04))).unwrap();
    let kit = generate_kit(&cube, &KitSpec::default()).unwrap();
    vec![(kit.clone(), 0), (kit, 1)]
}

#[test]
fn bracket_tilts_second_axis() {
    let asm = link_kits(two_cubes(), &[10.0], KitSpec::default(), 1).unwrap();
    let z0 = asm.world_kit_pose(0).z_axis();
    let z1 = asm.world_kit_pose(1).z_axis();
    assert!((z0 - Vector3::z()).norm() < 1e-12);
    assert!((z1.dot(&Vector3::z()).acos() - 10.0 * DEG).abs() < 1e-9);
    assert!(asm.world_bounds().min.z.abs() < 1e-12);
}

#[test]
fn bracket_angle_floor_and_count() {
    assert!(matches!(
        link_kits(two_cubes(), &[0.0], KitSpec::default(), 1),
        Err(Error::InvalidArgument(_))
    ));
    assert!(link_kits(two_cubes(), &[46.0], KitSpec::default(), 1).is_err());
    assert!(link_kits(two_cubes(), &[10.0, 10.0], KitSpec::default(), 1).is_err());
}

#[test]
fn five_kit_chain_stays_above_horizon() {
    let cube = normalize_object(&centered_box(Vector3::repeat(0.04))).unwrap();
    let kit = generate_kit(&cube, &KitSpec::default()).unwrap();
    for seed in 0..10 {
        let kits = (0..5).map(|i| (kit.clone(), i)).collect();
        let asm = link_kits(kits, &[45.0; 4], KitSpec::default(), seed).unwrap();
        let mut cum = 0.0;
        for (i, a) in asm.bracket_angles.iter().enumerate() {
            cum += a;
            // oracle: tilt of kit i+1 from the axis-angle of its rotation
            let z = asm.world_kit_pose(i + 1).z_axis();
            let tilt = z.dot(&Vector3::z()).clamp(-1.0, 1.0).acos();
            assert!((tilt - (cum as f64).abs() * DEG).abs() < 1e-9);
            assert!(tilt <= 45.0 * DEG * (i + 1) as f64 + 1e-9);
            assert!(z.z > 0.0);
        }
    }
}

#[test]
fn assembly_round_trips_through_disk() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let objects: Vec<TriMesh> = (0..3)
        .map(|_| seat_core::kitgen::shapes::random_object(&mut rng).1)
        .collect();
    let asm = build_assembly(&objects, &KitSpec::default(), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    asm.save(dir.path()).unwrap();
    let back = seat_core::kitgen::KitAssembly::load(dir.path(), &objects).unwrap();
    assert_eq!(back, asm);
    // seated objects do not touch the kit solids
    use seat_core::geom::volume::SolidQuery;
    for (i, k) in asm.kits.iter().enumerate() {
        let pose = asm.world_cavity_pose(i);
        let obj = &objects[k.object_id];
        let occ = voxelize_mesh(obj, &GridSpec::covering(&obj.bounds(), 0.001)).unwrap();
        let g = occ.grid;
        for idx in 0..g.len() {
            if occ.data[idx] > 0.5 {
                let [x, y, z] = g.coords(idx);
                assert!(!asm.is_solid(&pose.transform_point(&g.center(x, y, z))));
            }
        }
    }
}

#[test]
fn kit_check_agrees_with_the_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for kind in ShapeKind::ALL {
        let obj = normalize_object(&make_shape(kind, &mut rng)).unwrap();
        for margin in [0.0, 0.0025] {
            let spec = KitSpec::with_margin(margin);
            let kit = generate_kit(&obj, &spec).unwrap();
            let r = check_kit(&obj, &kit, &spec).unwrap();
            assert!(r.valid(), "{kind:?} margin {margin}: {r:?}");
        }
    }
    // a kit made for a smaller object does not admit the larger one
    let small = centered_box(Vector3::new(0.03, 0.03, 0.02));
    let large = centered_box(Vector3::new(0.04, 0.04, 0.02));
    let spec = KitSpec::default();
    let kit = generate_kit(&small, &spec).unwrap();
    let r = check_kit(&large, &kit, &spec).unwrap();
    assert!(r.max_overlap > 0 && r.covered_columns > 0);
    // and one made for a larger object leaves stray cavity columns
    let kit = generate_kit(&large, &spec).unwrap();
    let r = check_kit(&small, &kit, &spec).unwrap();
    assert_eq!(r.max_overlap, 0);
    assert!(r.stray_columns > 0);
}
