use std::fs;
use std::process::Command;

use nalgebra::Vector3;

use seat_bench::report::{csv_row, read_records_csv, rederive_deltas, write_records_csv, CSV_HEADER};
use seat_bench::sweep::SweepAxis;
use seat_bench::*;
use seat_core::completion::CompletionMode;
use seat_core::geom::pose::{quat_from_axis_angle, Pose, DEG};
use seat_core::snap::SnapConfig;
use seat_core::Error;

fn gt() -> Pose {
    Pose::new(
        Vector3::new(0.05, -0.02, 0.03),
        quat_from_axis_angle(&Vector3::new(0.2, 1.0, -0.4), 0.7),
    )
}

#[test]
fn seeds_are_stable_and_path_sensitive() {
    let a = derive_seed(5, &["scene_0001", "0"]);
    assert_eq!(a, derive_seed(5, &["scene_0001", "0"]));
    assert_ne!(a, derive_seed(6, &["scene_0001", "0"]));
    assert_ne!(a, derive_seed(5, &["scene_0001", "1"]));
    // length prefixes keep ("ab", "c") apart from ("a", "bc")
    assert_ne!(derive_seed(0, &["ab", "c"]), derive_seed(0, &["a", "bc"]));
}

#[test]
fn zero_error_hint_is_the_ground_truth() {
    let cfg = SnapConfig::default();
    let h = sample_user_hint(&gt(), 0.0, 0.0, &cfg, 3).unwrap();
    assert_eq!(h.p, gt().p);
    assert!(h.q.angle_to(&gt().q) < 1e-12);
}

#[test]
fn hints_respect_their_bounds() {
    let cfg = SnapConfig::default();
    let (ep, er) = (0.028, 27.5 * DEG);
    for seed in 0..1000 {
        let h = sample_user_hint(&gt(), ep, er, &cfg, seed).unwrap();
        assert!((h.p - gt().p).amax() <= ep);
        assert!(h.q.angle_to(&gt().q) <= er + 1e-9);
    }
    for (p, r) in [(0.03, 0.1), (0.01, 30.0 * DEG), (-0.001, 0.0), (f64::NAN, 0.0)] {
        assert!(matches!(sample_user_hint(&gt(), p, r, &cfg, 0), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn hint_offsets_are_uniform_per_axis() {
    let cfg = SnapConfig::default();
    let eps = 0.02;
    let bins = 10;
    let n = 10_000;
    let mut hist = [[0usize; 10]; 3];
    for seed in 0..n {
        let h = sample_user_hint(&gt(), eps, 0.2, &cfg, seed).unwrap();
        let d = h.p - gt().p;
        for a in 0..3 {
            let b = ((d[a] + eps) / (2.0 * eps) * bins as f64) as usize;
            hist[a][b.min(bins - 1)] += 1;
        }
    }
    let p = 1.0 / bins as f64;
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for h in hist {
        assert!(h.iter().all(|&c| (c as f64 - mean).abs() <= 3.0 * sd), "{h:?}");
    }
}

#[test]
fn exact_hints_have_the_requested_error() {
    for seed in 0..200 {
        let h = hint_at_error(&gt(), 0.015, 10.0 * DEG, seed);
        assert!((h.position_error(&gt()) - 0.015).abs() < 1e-12);
        assert!((h.rotation_error(&gt()) - 10.0 * DEG).abs() < 1e-7);
    }
    assert_ne!(hint_at_error(&gt(), 0.01, 0.1, 1), hint_at_error(&gt(), 0.01, 0.1, 2));
}

#[test]
fn nearest_rank_percentiles() {
    let v: Vec<f64> = (1..=10).rev().map(f64::from).collect();
    assert_eq!(percentile(&v, 50.0), Some(5.0));
    assert_eq!(percentile(&v, 90.0), Some(9.0));
    assert_eq!(percentile(&v, 91.0), Some(10.0));
    assert_eq!(percentile(&v, 100.0), Some(10.0));
    assert_eq!(percentile(&v, 0.0), Some(1.0));
    assert_eq!(percentile(&[], 50.0), None);
    assert_eq!(percentile(&[3.5], 20.0), Some(3.5));
}

fn record(object: usize, delta: f64, hint: Option<Pose>) -> EvalRecord {
    let snap = Pose::new(gt().p + Vector3::new(delta, 0.0, 0.0), quat_from_axis_angle(&Vector3::z(), 0.01) * gt().q);
    EvalRecord {
        scene: "scene_0000".into(),
        object,
        completion: CompletionMode::Oracle,
        informed: hint.is_some(),
        eps_pos: 0.0,
        eps_rot: 0.0,
        hint,
        gt: gt(),
        snap,
        delta_pos: snap.position_error(&gt()),
        delta_rot: snap.rotation_error(&gt()),
        nearest_cavity: if delta > 0.01 { object + 1 } else { object },
        feasible: delta < 0.002,
        success: delta < 0.002,
        reason: String::new(),
        timing: Default::default(),
    }
}

#[test]
fn records_round_trip_and_re_derive() {
    let dir = tempfile::tempdir().unwrap();
    let recs = vec![record(0, 0.001, Some(gt())), record(1, 0.0137, None), record(2, 1.0 / 3.0 * 1e-3, Some(gt()))];
    let path = dir.path().join("records.csv");
    write_records_csv(&recs, &path).unwrap();
    let first = fs::read(&path).unwrap();
    write_records_csv(&recs, &path).unwrap();
    assert_eq!(fs::read(&path).unwrap(), first);

    let rows = read_records_csv(&path).unwrap();
    assert_eq!(rows.len(), 3);
    for (row, r) in rows.iter().zip(&recs) {
        assert_eq!(row.len(), CSV_HEADER.len());
        let (dp, dr) = rederive_deltas(row).unwrap();
        assert_eq!(&dp, &row["delta_pos"]);
        assert_eq!(&dr, &row["delta_rot"]);
        assert_eq!(row["delta_pos"].parse::<f64>().unwrap(), r.delta_pos);
        assert_eq!(csv_row(r).len(), CSV_HEADER.len());
    }
    assert_eq!(rows[1]["hint_px"], "");
    assert_eq!(rows[0]["completion"], "oracle");
}

#[test]
fn summary_rates_and_stats() {
    let recs = vec![record(0, 0.001, Some(gt())), record(1, 0.0137, Some(gt())), record(2, 0.0015, Some(gt()))];
    let s = Summary::of(&recs);
    assert_eq!(s.conditions.len(), 1);
    let c = &s.conditions[0];
    assert_eq!(c.condition, "oracle/informed");
    assert_eq!(c.n, 3);
    assert!((c.success_rate - 2.0 / 3.0).abs() < 1e-12);
    assert!((c.wrong_cavity_rate - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(c.delta_pos.median, recs[2].delta_pos);
    assert_eq!(c.delta_pos.p90, recs[1].delta_pos);
    assert!(!s.success_definition.is_empty());
    assert!(Summary::of(&[]).conditions.is_empty());
}

fn single_kit(n: usize, seed: u64) -> DatasetConfig {
    DatasetConfig {
        n_assemblies: n,
        kits_min: 1,
        kits_max: 1,
        seed,
        ..DatasetConfig::default()
    }
}

#[test]
fn datasets_are_deterministic_and_resume() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = DatasetConfig {
        n_assemblies: 3,
        seed: 4,
        ..DatasetConfig::default()
    };
    let m = generate_dataset(&ObjectSource::Procedural, &cfg, a.path()).unwrap();
    assert_eq!(m.scenes.len(), 3);
    for e in &m.scenes {
        assert!((2..=5).contains(&e.objects.len()));
    }
    generate_dataset(&ObjectSource::Procedural, &cfg, b.path()).unwrap();
    let scene = |d: &std::path::Path| fs::read(d.join("scene_0002").join("scene.json")).unwrap();
    assert_eq!(scene(a.path()), scene(b.path()));

    // an interrupted run picks up where it stopped
    fs::remove_dir_all(b.path().join("scene_0002")).unwrap();
    let again = generate_dataset(&ObjectSource::Procedural, &cfg, b.path()).unwrap();
    assert_eq!(again, m);
    assert_eq!(scene(a.path()), scene(b.path()));

    let other = DatasetConfig { seed: 5, ..cfg.clone() };
    assert!(matches!(
        generate_dataset(&ObjectSource::Procedural, &other, a.path()),
        Err(Error::InvalidArgument(_))
    ));
    let bad = DatasetConfig { kits_min: 3, kits_max: 2, ..cfg };
    assert!(generate_dataset(&ObjectSource::Procedural, &bad, b.path()).is_err());
}

#[test]
fn mesh_directories_feed_datasets() {
    let objs = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let cube = seat_core::geom::mesh::centered_box(Vector3::new(0.02, 0.03, 0.01));
    cube.save_obj(&objs.path().join("box.obj")).unwrap();
    let source = ObjectSource::from_dir(objs.path()).unwrap();
    let m = generate_dataset(&source, &single_kit(2, 0), out.path()).unwrap();
    assert_eq!(m.source, vec!["box.obj".to_string()]);
    assert!(m.scenes.iter().all(|e| e.objects == vec!["box.obj".to_string()]));
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(ObjectSource::from_dir(empty.path()), Err(Error::EmptyInput(_))));
}

#[test]
fn empty_dataset_gives_an_empty_report() {
    let d = tempfile::tempdir().unwrap();
    generate_dataset(&ObjectSource::Procedural, &single_kit(0, 0), d.path()).unwrap();
    let r = run_benchmark(d.path(), &BenchConfig::default()).unwrap();
    assert!(r.records.is_empty());
    assert!(r.summary.conditions.is_empty());
    r.write(d.path()).unwrap();
    assert_eq!(read_records_csv(&d.path().join("records.csv")).unwrap().len(), 0);
}

fn quick() -> BenchConfig {
    BenchConfig {
        snap: SnapConfig {
            n_rotations: 40,
            ..SnapConfig::default()
        },
        ..BenchConfig::default()
    }
}

#[test]
fn benchmark_records_are_consistent() {
    let d = tempfile::tempdir().unwrap();
    generate_dataset(&ObjectSource::Procedural, &single_kit(1, 7), d.path()).unwrap();
    let cfg = quick();
    let r = run_benchmark(d.path(), &cfg).unwrap();
    assert_eq!(r.records.len(), 1);
    let rec = &r.records[0];
    let hint = rec.hint.unwrap();
    assert!((hint.p - rec.gt.p).amax() <= cfg.eps_pos);
    assert_eq!(rec.eps_pos, hint.position_error(&rec.gt));
    assert_eq!(rec.delta_pos, rec.snap.position_error(&rec.gt));
    assert!(!rec.success || rec.feasible);
    assert!(rec.delta_pos < 0.01, "{}", rec.delta_pos);
    assert_eq!(r.summary.conditions[0].condition, cfg.condition());

    let blind = BenchConfig {
        snap: SnapConfig {
            uninformed: true,
            ..cfg.snap.clone()
        },
        ..cfg
    };
    let r = run_benchmark(d.path(), &blind).unwrap();
    assert!(r.records[0].hint.is_none() && !r.records[0].informed);
    assert_eq!(r.records[0].eps_pos, 0.0);
    assert_eq!(r.summary.conditions[0].condition, "oracle/uninformed");
}

#[test]
fn sweeps_reject_bad_bins() {
    let d = tempfile::tempdir().unwrap();
    let cfg = BenchConfig::default();
    assert!(matches!(
        robustness_sweep(d.path(), SweepAxis::Position, &[], 0.1, &cfg),
        Err(Error::EmptyInput(_))
    ));
    assert!(matches!(
        robustness_sweep(d.path(), SweepAxis::Position, &[0.05], 0.1, &cfg),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        robustness_sweep(d.path(), SweepAxis::Rotation, &[0.1], 0.05, &cfg),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn sweep_rows_summarize_each_bin() {
    let d = tempfile::tempdir().unwrap();
    generate_dataset(&ObjectSource::Procedural, &single_kit(1, 3), d.path()).unwrap();
    let t = robustness_sweep(d.path(), SweepAxis::Position, &[0.005, 0.02], 5.0 * DEG, &quick()).unwrap();
    assert_eq!(t.rows.len(), 2);
    for (row, recs) in t.rows.iter().zip(&t.records) {
        assert_eq!(row.n, recs.len());
        assert!((recs[0].eps_pos - row.bin).abs() < 1e-12);
        assert_eq!(row.median, recs[0].delta_pos);
    }
    let out = d.path().join("sweep");
    t.write(&out).unwrap();
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("sweep.dat").is_file());
}

#[test]
fn snap_cli_prints_a_pose() {
    let d = tempfile::tempdir().unwrap();
    let m = generate_dataset(&ObjectSource::Procedural, &single_kit(1, 11), d.path()).unwrap();
    let dir = m.scene_dir(d.path(), &m.scenes[0]);
    let scene = seat_core::scene::Scene::load(&dir).unwrap();
    let g = scene.objects[0].gt_kit;
    let cfg = d.path().join("snap.json");
    fs::write(&cfg, r#"{"n_rotations": 30}"#).unwrap();
    let hint: Vec<String> = g.p_array().iter().chain(g.q_array().iter()).map(|v| v.to_string()).collect();
    let out = Command::new(env!("CARGO_BIN_EXE_seat-snap"))
        .args(["--obs", dir.to_str().unwrap(), "--object", "0", "--config", cfg.to_str().unwrap()])
        .arg(format!("--hint={}", hint.join(",")))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_candidates"][1], 30);
    let pose: Pose = serde_json::from_value(v["pose"].clone()).unwrap();
    assert!(pose.position_error(&g) < 0.005);
    assert!(v["position_score"].is_number() && v["timing_ms"]["total_ms"].is_number());

    let bad = Command::new(env!("CARGO_BIN_EXE_seat-snap"))
        .args(["--obs", dir.to_str().unwrap(), "--object", "0", "--hint", "1,2,3"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn kitgen_cli_checks_its_kits() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_seat-kitgen"))
        .args(["--out", d.path().to_str().unwrap(), "--n", "2", "--kits-per-assembly", "1..2", "--seed", "5"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 2);
    assert!(text.lines().all(|l| l.contains(" ok ")));
    let m = Manifest::load(d.path()).unwrap();
    assert_eq!((m.config.kits_min, m.config.kits_max), (1, 2));
}
