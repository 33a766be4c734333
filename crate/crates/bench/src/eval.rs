//! Per-object evaluation: observe, complete, hint, snap, plan and execute.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use seat_core::completion::CompletionMode;
use seat_core::geom::pose::{Pose, DEG};
use seat_core::pipeline::{complete_kit, complete_object};
use seat_core::plan::{execute_plan_sim, grasp_pose_topdown, make_plan, GraspConfig};
use seat_core::scene::{observe, Observation, ObserveOptions, Scene};
use seat_core::snap::{snap_pose, SnapConfig, SnapInputs};
use seat_core::{Error, Result};

use crate::dataset::Manifest;
use crate::hint::{derive_seed, hint_at_error, sample_user_hint};
use crate::report::{Report, Summary};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintMode {
    /// Per-axis offsets and rotation angle drawn uniformly up to the bounds.
    Uniform,
    /// Errors of exactly the given magnitude in random directions.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub snap: SnapConfig,
    pub completion: CompletionMode,
    pub hint_mode: HintMode,
    /// Hint position error bound (uniform) or magnitude (exact), meters.
    pub eps_pos: f64,
    /// Hint rotation error bound or magnitude, radians.
    pub eps_rot: f64,
    pub grasp: GraspConfig,
    pub seed: u64,
    /// Evaluate only the first scenes of the dataset.
    pub max_scenes: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            snap: SnapConfig::default(),
            completion: CompletionMode::Oracle,
            hint_mode: HintMode::Uniform,
            eps_pos: 0.028,
            eps_rot: 27.5 * DEG,
            grasp: GraspConfig::default(),
            seed: 0,
            max_scenes: None,
        }
    }
}

impl BenchConfig {
    pub fn informed(&self) -> bool {
        !self.snap.uninformed
    }

    /// Label of the experimental condition, e.g. `oracle/informed`.
    pub fn condition(&self) -> String {
        let inf = if self.informed() { "informed" } else { "uninformed" };
        format!("{}/{inf}", self.completion)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub complete_ms: f64,
    pub position_ms: f64,
    pub rotation_ms: f64,
    pub plan_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scene: String,
    pub object: usize,
    pub completion: CompletionMode,
    pub informed: bool,
    /// Realized hint error; zero when uninformed.
    pub eps_pos: f64,
    pub eps_rot: f64,
    pub hint: Option<Pose>,
    pub gt: Pose,
    pub snap: Pose,
    pub delta_pos: f64,
    pub delta_rot: f64,
    /// Object whose cavity lies nearest the snapped position.
    pub nearest_cavity: usize,
    pub feasible: bool,
    /// Feasible and within the kit margin.
    pub success: bool,
    pub reason: String,
    pub timing: StageTimings,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Evaluate every object of one scene directory.
pub fn evaluate_scene(dir: &Path, scene_id: &str, cfg: &BenchConfig) -> Result<Vec<EvalRecord>> {
    let scene = Scene::load(dir)?;
    let obs = if Observation::exists(dir) {
        Observation::load(dir)?
    } else {
        observe(&scene, &ObserveOptions::default())?
    };
    let t = Instant::now();
    let kit = complete_kit(&scene, &obs, cfg.completion)?;
    let kit_ms = ms(t);
    let margin = scene.assembly.spec.margin;
    let mut out = Vec::with_capacity(scene.objects.len());
    for o in &scene.objects {
        let seed = derive_seed(cfg.seed, &[scene_id, &o.id.to_string()]);
        let t = Instant::now();
        let object = complete_object(&scene, &obs, o.id, cfg.completion)?;
        let complete_ms = kit_ms + ms(t);

        let hint = if cfg.informed() {
            Some(match cfg.hint_mode {
                HintMode::Uniform => sample_user_hint(&o.gt_kit, cfg.eps_pos, cfg.eps_rot, &cfg.snap, seed)?,
                HintMode::Exact => hint_at_error(&o.gt_kit, cfg.eps_pos, cfg.eps_rot, seed),
            })
        } else {
            None
        };
        let snap_cfg = SnapConfig {
            seed,
            ..cfg.snap.clone()
        };
        let snap = snap_pose(&SnapInputs { object: &object, kit: &kit }, hint.as_ref(), &snap_cfg)?;

        let t = Instant::now();
        let start = obs.object_frames.get(&o.id).copied().unwrap_or(o.pose);
        let (feasible, reason) = match grasp_pose_topdown(&object, &start, &cfg.grasp) {
            Ok(grasp) => {
                let plan = make_plan(o.id, &start, &grasp, &snap.pose);
                let (_, exec) = execute_plan_sim(&scene, &plan)?;
                (exec.success, exec.reason.unwrap_or_default())
            }
            Err(Error::NotGraspable(_)) => (false, "not-graspable".to_string()),
            Err(e) => return Err(e),
        };
        let plan_ms = ms(t);

        let delta_pos = snap.pose.position_error(&o.gt_kit);
        let nearest_cavity = scene
            .objects
            .iter()
            .min_by(|a, b| {
                let da = (a.gt_kit.p - snap.pose.p).norm();
                let db = (b.gt_kit.p - snap.pose.p).norm();
                da.total_cmp(&db).then(a.id.cmp(&b.id))
            })
            .map(|c| c.id)
            .unwrap_or(o.id);
        out.push(EvalRecord {
            scene: scene_id.to_string(),
            object: o.id,
            completion: cfg.completion,
            informed: hint.is_some(),
            eps_pos: hint.map_or(0.0, |h| h.position_error(&o.gt_kit)),
            eps_rot: hint.map_or(0.0, |h| h.rotation_error(&o.gt_kit)),
            hint,
            gt: o.gt_kit,
            snap: snap.pose,
            delta_pos,
            delta_rot: snap.pose.rotation_error(&o.gt_kit),
            nearest_cavity,
            feasible,
            success: feasible && delta_pos <= margin,
            reason,
            timing: StageTimings {
                complete_ms,
                position_ms: snap.timing_ms.position_ms,
                rotation_ms: snap.timing_ms.rotation_ms,
                plan_ms,
            },
        });
    }
    Ok(out)
}

/// Evaluate a dataset. Scenes run in parallel; records come back sorted by
/// scene and object.
pub fn run_benchmark(dataset: &Path, cfg: &BenchConfig) -> Result<Report> {
    cfg.snap.validate()?;
    let manifest = Manifest::load(dataset)?;
    let n = cfg.max_scenes.unwrap_or(usize::MAX).min(manifest.scenes.len());
    let per_scene = manifest.scenes[..n]
        .par_iter()
        .map(|e| evaluate_scene(&manifest.scene_dir(dataset, e), &e.id, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut records: Vec<EvalRecord> = per_scene.into_iter().flatten().collect();
    records.sort_by(|a, b| a.scene.cmp(&b.scene).then(a.object.cmp(&b.object)));
    let summary = Summary::of(&records);
    Ok(Report { records, summary })
}
