//! Record tables and summaries.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::Quaternion;
use serde::{Deserialize, Serialize};

use seat_core::geom::pose::{quat_geodesic, Pose};
use seat_core::{Error, Result};

use crate::eval::EvalRecord;

pub const SUCCESS_DEFINITION: &str =
    "success = snapped pose inserted without collision along the straight hover-to-place path, and delta_pos <= kit margin";

/// Nearest-rank percentile (`p` in [0, 100]) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub median: f64,
    pub p20: f64,
    pub p80: f64,
    pub p90: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let p = |q| percentile(values, q).unwrap_or(f64::NAN);
        Stats {
            median: p(50.0),
            p20: p(20.0),
            p80: p(80.0),
            p90: p(90.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub n: usize,
    pub delta_pos: Stats,
    pub delta_rot: Stats,
    pub success_rate: f64,
    pub feasible_rate: f64,
    pub wrong_cavity_rate: f64,
    /// Median per-stage wall time, ms.
    pub timing_ms: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub success_definition: String,
    pub conditions: Vec<ConditionSummary>,
}

impl Summary {
    pub fn of(records: &[EvalRecord]) -> Summary {
        let mut groups: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
        for r in records {
            let inf = if r.informed { "informed" } else { "uninformed" };
            groups.entry(format!("{}/{inf}", r.completion)).or_default().push(r);
        }
        let conditions = groups
            .into_iter()
            .map(|(condition, rs)| {
                let n = rs.len();
                let rate = |f: &dyn Fn(&EvalRecord) -> bool| rs.iter().filter(|r| f(r)).count() as f64 / n as f64;
                let col = |f: &dyn Fn(&EvalRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
                let mut timing_ms = BTreeMap::new();
                for (name, f) in [
                    ("complete", (|r: &EvalRecord| r.timing.complete_ms) as fn(&EvalRecord) -> f64),
                    ("position", |r| r.timing.position_ms),
                    ("rotation", |r| r.timing.rotation_ms),
                    ("plan", |r| r.timing.plan_ms),
                ] {
                    timing_ms.insert(name.to_string(), percentile(&col(&f), 50.0).unwrap_or(0.0));
                }
                ConditionSummary {
                    condition,
                    n,
                    delta_pos: Stats::of(&col(&|r| r.delta_pos)),
                    delta_rot: Stats::of(&col(&|r| r.delta_rot)),
                    success_rate: rate(&|r| r.success),
                    feasible_rate: rate(&|r| r.feasible),
                    wrong_cavity_rate: rate(&|r| r.nearest_cavity != r.object),
                    timing_ms,
                }
            })
            .collect();
        Summary {
            success_definition: SUCCESS_DEFINITION.to_string(),
            conditions,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub records: Vec<EvalRecord>,
    pub summary: Summary,
}

pub const CSV_HEADER: [&str; 33] = [
    "scene",
    "object",
    "completion",
    "informed",
    "eps_pos",
    "eps_rot",
    "hint_px",
    "hint_py",
    "hint_pz",
    "hint_qx",
    "hint_qy",
    "hint_qz",
    "hint_qw",
    "gt_px",
    "gt_py",
    "gt_pz",
    "gt_qx",
    "gt_qy",
    "gt_qz",
    "gt_qw",
    "snap_px",
    "snap_py",
    "snap_pz",
    "snap_qx",
    "snap_qy",
    "snap_qz",
    "snap_qw",
    "delta_pos",
    "delta_rot",
    "nearest_cavity",
    "feasible",
    "success",
    "reason",
];

fn pose_fields(p: Option<&Pose>, out: &mut Vec<String>) {
    match p {
        Some(p) => {
            out.extend(p.p_array().iter().map(|v| v.to_string()));
            out.extend(p.q_array().iter().map(|v| v.to_string()));
        }
        None => out.extend(std::iter::repeat_n(String::new(), 7)),
    }
}

/// One CSV row. Floats use the shortest representation that reads back to
/// the same value, so every stored number can be recomputed exactly.
pub fn csv_row(r: &EvalRecord) -> Vec<String> {
    let mut row = vec![
        r.scene.clone(),
        r.object.to_string(),
        r.completion.to_string(),
        r.informed.to_string(),
        r.eps_pos.to_string(),
        r.eps_rot.to_string(),
    ];
    pose_fields(r.hint.as_ref(), &mut row);
    pose_fields(Some(&r.gt), &mut row);
    pose_fields(Some(&r.snap), &mut row);
    row.extend([
        r.delta_pos.to_string(),
        r.delta_rot.to_string(),
        r.nearest_cavity.to_string(),
        r.feasible.to_string(),
        r.success.to_string(),
        r.reason.clone(),
    ]);
    row
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

impl Report {
    /// `records.csv` (no timings, so reruns are byte-identical) and
    /// `summary.json`.
    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out)?;
        write_records_csv(&self.records, &out.join("records.csv"))?;
        fs::write(out.join("summary.json"), serde_json::to_string_pretty(&self.summary)?)?;
        Ok(())
    }
}

pub fn write_records_csv(records: &[EvalRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record(csv_row(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a records file as header-keyed string maps.
pub fn read_records_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    r.records()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(header.iter().cloned().zip(row.iter().map(String::from)).collect())
        })
        .collect()
}

/// Recompute `delta_pos` and `delta_rot` of a stored row from its gt and
/// snapped poses, formatted as they are stored.
pub fn rederive_deltas(row: &BTreeMap<String, String>) -> Result<(String, String)> {
    let f = |k: &str| -> Result<f64> {
        row.get(k)
            .ok_or_else(|| Error::NotFound(format!("column {k}")))?
            .parse::<f64>()
            .map_err(|e| Error::InvalidArgument(format!("column {k}: {e}")))
    };
    let p = |pre: &str| -> Result<nalgebra::Vector3<f64>> {
        Ok(nalgebra::Vector3::new(f(&format!("{pre}_px"))?, f(&format!("{pre}_py"))?, f(&format!("{pre}_pz"))?))
    };
    let q = |pre: &str| -> Result<Quaternion<f64>> {
        Ok(Quaternion::new(
            f(&format!("{pre}_qw"))?,
            f(&format!("{pre}_qx"))?,
            f(&format!("{pre}_qy"))?,
            f(&format!("{pre}_qz"))?,
        ))
    };
    let dp = (p("snap")? - p("gt")?).norm();
    let dr = quat_geodesic(&q("snap")?, &q("gt")?)?;
    Ok((dp.to_string(), dr.to_string()))
}
