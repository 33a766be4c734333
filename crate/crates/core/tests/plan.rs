use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seat_core::completion::CompletionMode;
use seat_core::geom::mesh::{centered_box, cylinder, uv_sphere, TriMesh};
use seat_core::geom::pose::{quat_from_axis_angle, Pose, DEG};
use seat_core::geom::volume::{VolumeKind, VoxelVolume};
use seat_core::geom::voxelize::voxelize_mesh;
use seat_core::kitgen::shapes::random_object;
use seat_core::kitgen::{build_assembly, KitSpec};
use seat_core::pipeline::{complete_kit, snap_object};
use seat_core::plan::*;
use seat_core::scene::{kit_grid, object_grid, observe, sample_scene, ObserveOptions, Scene, SceneConfig};
use seat_core::snap::SnapConfig;
use seat_core::Error;

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let p = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5));
    let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    Pose::new(p, quat_from_axis_angle(&axis, rng.random_range(0.0..3.14)))
}

fn occupancy(mesh: &TriMesh) -> VoxelVolume {
    voxelize_mesh(mesh, &object_grid()).unwrap()
}

fn scene_with(objects: Vec<TriMesh>, hard: bool, seed: u64) -> Scene {
    let asm = build_assembly(&objects, &KitSpec::default(), seed).unwrap();
    let cfg = SceneConfig {
        hard,
        ..SceneConfig::default()
    };
    sample_scene(&objects, asm, &cfg, seed).unwrap()
}

fn oracle_plan(scene: &Scene, id: usize) -> ActionPlan {
    let o = scene.object(id).unwrap();
    let grasp = grasp_pose_topdown(&occupancy(&o.mesh), &o.pose, &GraspConfig::default()).unwrap();
    make_plan(id, &o.pose, &grasp, &o.gt_kit)
}

#[test]
fn hover_is_place_composed_with_the_offset() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grasp = Pose::identity();
    for _ in 0..1000 {
        let place = random_pose(&mut rng);
        let plan = make_plan(0, &Pose::identity(), &grasp, &place);
        let expect = place.compose(&Pose::from_translation(Vector3::new(0.0, 0.0, 0.1)));
        assert_eq!(plan.hover.p_array(), expect.p_array());
        assert_eq!(plan.hover.q_array(), expect.q_array());
        assert!((plan.hover.p - place.p - place.q * Vector3::new(0.0, 0.0, 0.1)).norm() < 1e-12);
        let ins = plan.insertion();
        assert_eq!(ins.kind, SegmentKind::Insert);
        assert_eq!((ins.from, ins.to), (plan.hover, plan.place));
    }
}

#[test]
fn hover_for_identity_and_tilted_places() {
    let plan = make_plan(0, &Pose::identity(), &Pose::identity(), &Pose::identity());
    assert!((plan.hover.p - Vector3::new(0.0, 0.0, 0.1)).norm() < 1e-15);
    let tilt = Pose::new(Vector3::new(0.1, 0.0, 0.0), quat_from_axis_angle(&Vector3::x(), 30.0 * DEG));
    let plan = make_plan(0, &Pose::identity(), &Pose::identity(), &tilt);
    let off = plan.hover.p - tilt.p;
    assert!((off - Vector3::new(0.0, -0.1 * (30.0 * DEG).sin(), 0.1 * (30.0 * DEG).cos())).norm() < 1e-12);
    // orientation is final before the insertion starts
    assert_eq!(plan.segments[3].to.q, tilt.q);
}

#[test]
fn degenerate_plan_keeps_all_segments() {
    let p = Pose::new(Vector3::new(0.0, 0.1, 0.02), UnitQuaternion::identity());
    let plan = make_plan(2, &p, &p, &p);
    let kinds: Vec<_> = plan.segments.iter().map(|s| s.kind).collect();
    assert_eq!(
        kinds,
        [
            SegmentKind::Approach,
            SegmentKind::Descend,
            SegmentKind::Lift,
            SegmentKind::Transit,
            SegmentKind::Insert
        ]
    );
    let json: serde_json::Value = serde_json::to_value(PlanReport::new(
        &plan,
        &Execution {
            success: true,
            reason: None,
        },
    ))
    .unwrap();
    for key in ["object_id", "grasp", "hover", "place", "segments", "feasible", "reason"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert!(json["segments"][0]["from"]["q"].as_array().unwrap().len() == 4);
}

#[test]
fn cube_grasp_is_at_the_top_face_center() {
    let occ = occupancy(&centered_box(Vector3::new(0.03, 0.03, 0.03)));
    let s = occ.grid.voxel_size;
    for (yaw, p) in [(0.0, [0.1, -0.1, 0.015]), (30.0 * DEG, [-0.05, -0.12, 0.015])] {
        let start = Pose::new(Vector3::from(p), quat_from_axis_angle(&Vector3::z(), yaw));
        let g = grasp_pose_topdown(&occ, &start, &GraspConfig::default()).unwrap();
        let top = start.p + Vector3::new(0.0, 0.0, 0.015);
        for k in 0..3 {
            assert!((g.p[k] - top[k]).abs() <= s + 1e-9, "axis {k}: {} vs {}", g.p[k], top[k]);
        }
        // approach points down
        assert!((g.q * Vector3::z() + Vector3::z()).norm() < 1e-12);
    }
}

#[test]
fn sphere_grasp_is_at_the_apex() {
    let occ = occupancy(&uv_sphere(0.025, 48, 96));
    let s = occ.grid.voxel_size;
    let start = Pose::from_translation(Vector3::new(0.02, -0.1, 0.025));
    let g = grasp_pose_topdown(&occ, &start, &GraspConfig::default()).unwrap();
    let apex = Vector3::new(0.02, -0.1, 0.05);
    for k in 0..3 {
        assert!((g.p[k] - apex[k]).abs() <= s + 1e-9, "axis {k}: {} vs {}", g.p[k], apex[k]);
    }
}

#[test]
fn needle_is_not_graspable() {
    let occ = occupancy(&cylinder(0.001, 0.05, 16));
    let err = grasp_pose_topdown(&occ, &Pose::identity(), &GraspConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NotGraspable(_)));
    let empty = VoxelVolume::zeros(object_grid(), VolumeKind::Occupancy);
    assert!(grasp_pose_topdown(&empty, &Pose::identity(), &GraspConfig::default()).is_err());
}

#[test]
fn larger_of_two_tops_wins() {
    // a low wide step and a narrow tall tower: the wide step is the larger patch
    let low = centered_box(Vector3::new(0.04, 0.03, 0.01)).translated(&Vector3::new(0.0, 0.0, -0.01));
    let tower = centered_box(Vector3::new(0.012, 0.012, 0.03)).translated(&Vector3::new(0.014, 0.0, 0.0));
    let occ = occupancy(&TriMesh::merge(&[low, tower]));
    let g = grasp_pose_topdown(&occ, &Pose::identity(), &GraspConfig::default()).unwrap();
    assert!((g.p.z + 0.005).abs() < 0.002, "grasp z {}", g.p.z);
    assert!(g.p.x < 0.005);
}

#[test]
fn insertion_check_against_the_exact_kit() {
    let scene = scene_with(vec![centered_box(Vector3::new(0.03, 0.02, 0.025))], false, 1);
    let o = &scene.objects[0];
    let occ = occupancy(&o.mesh);
    let plan = make_plan(0, &o.pose, &Pose::identity(), &o.gt_kit);
    assert!(check_straight_insertion(&occ, &scene.assembly, &plan, 0.001));
    // 1 cm sideways puts the object into the wall
    let shifted = Pose::new(o.gt_kit.p + Vector3::new(0.01, 0.0, 0.0), o.gt_kit.q);
    let bad = make_plan(0, &o.pose, &Pose::identity(), &shifted);
    assert!(!check_straight_insertion(&occ, &scene.assembly, &bad, 0.001));
    // a voxelized kit on its own lattice agrees
    let g = kit_grid(&scene.assembly);
    let kit = VoxelVolume::from_fn(g, VolumeKind::Occupancy, |x, y, z| {
        use seat_core::geom::volume::SolidQuery;
        scene.assembly.is_solid(&g.center(x, y, z)) as u8 as f32
    });
    assert!(!check_straight_insertion(&occ, &kit, &bad, 0.001));
    let empty = VoxelVolume::zeros(g, VolumeKind::Occupancy);
    assert!(check_straight_insertion(&occ, &empty, &bad, 0.001));
}

#[test]
fn interpolation_steps_cover_the_segment() {
    let seg = Segment {
        kind: SegmentKind::Insert,
        from: Pose::from_translation(Vector3::new(0.0, 0.0, 0.1)),
        to: Pose::identity(),
    };
    let poses = interpolate_segment(&seg, 0.001);
    assert_eq!(poses.len(), 101);
    assert_eq!(poses[0], seg.from);
    assert!((poses[100].p - seg.to.p).norm() < 1e-15);
    for w in poses.windows(2) {
        assert!((w[0].p - w[1].p).norm() <= 0.001 + 1e-12);
    }
}

#[test]
fn execution_updates_or_explains() {
    let scene = scene_with(vec![centered_box(Vector3::new(0.03, 0.02, 0.025))], false, 4);
    let plan = oracle_plan(&scene, 0);
    let (next, exec) = execute_plan_sim(&scene, &plan).unwrap();
    assert!(exec.success, "{exec:?}");
    assert_eq!(next.objects[0].pose, plan.place);

    let o = &scene.objects[0];
    let wall = Pose::new(o.gt_kit.p + Vector3::new(0.0, 0.01, 0.0), o.gt_kit.q);
    let bad = make_plan(0, &o.pose, &plan.grasp, &wall);
    let (same, exec) = execute_plan_sim(&scene, &bad).unwrap();
    assert_eq!(exec.reason.as_deref(), Some(REASON_COLLISION));
    assert_eq!(same, scene);

    let mut unknown = plan.clone();
    unknown.object_id = 7;
    assert!(matches!(execute_plan_sim(&scene, &unknown), Err(Error::NotFound(_))));
}

#[test]
fn upside_down_objects_fail_on_the_grasp_side() {
    let scene = scene_with(vec![centered_box(Vector3::new(0.03, 0.02, 0.025))], true, 4);
    let plan = oracle_plan(&scene, 0);
    let (same, exec) = execute_plan_sim(&scene, &plan).unwrap();
    assert!(!exec.success);
    assert_eq!(exec.reason.as_deref(), Some(REASON_GRASP_SIDE));
    assert_eq!(same, scene);
}

#[test]
fn two_snapped_plans_fill_both_kits() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let objects = vec![random_object(&mut rng).1, random_object(&mut rng).1];
    let mut scene = scene_with(objects, false, 21);
    let obs = observe(&scene, &ObserveOptions::default()).unwrap();
    let kit = complete_kit(&scene, &obs, CompletionMode::Oracle).unwrap();
    let cfg = SnapConfig::default();
    for id in 0..2 {
        let o = scene.object(id).unwrap().clone();
        let hint = Pose::new(
            o.gt_kit.p + Vector3::new(0.006, -0.004, 0.003),
            quat_from_axis_angle(&Vector3::new(1.0, 1.0, 0.0), 5.0 * DEG) * o.gt_kit.q,
        );
        let snap = snap_object(&scene, &obs, &kit, id, CompletionMode::Oracle, Some(&hint), &cfg).unwrap();
        let grasp = grasp_pose_topdown(&occupancy(&o.mesh), &o.pose, &GraspConfig::default()).unwrap();
        let plan = make_plan(id, &o.pose, &grasp, &snap.pose);
        let (next, exec) = execute_plan_sim(&scene, &plan).unwrap();
        assert!(exec.success, "object {id}: {exec:?}");
        scene = next;
    }
    for o in &scene.objects {
        assert!(o.pose.position_error(&o.gt_kit) <= 0.0025, "{}", o.pose.position_error(&o.gt_kit));
        assert!(o.pose.rotation_error(&o.gt_kit) <= 10.0 * DEG);
    }
}
