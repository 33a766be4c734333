//! Snap accuracy as a function of hint error.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use seat_core::{Error, Result};

use crate::eval::{run_benchmark, BenchConfig, EvalRecord, HintMode};
use crate::report::{percentile, write_records_csv};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Vary hint position error (m); report position error of the snap.
    Position,
    /// Vary hint rotation error (rad); report rotation error of the snap.
    Rotation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bin: f64,
    pub n: usize,
    pub median: f64,
    pub p20: f64,
    pub p80: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    /// Hint error held fixed on the other axis.
    pub fixed: f64,
    pub rows: Vec<SweepRow>,
    pub records: Vec<Vec<EvalRecord>>,
}

impl SweepTable {
    /// `sweep.csv`, `sweep.dat` (whitespace columns for plotting) and the
    /// raw records of each bin.
    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out)?;
        let mut csv = String::from("bin,n,median,p20,p80\n");
        let mut dat = String::from("# bin median p20 p80\n");
        for r in &self.rows {
            let _ = writeln!(csv, "{},{},{},{},{}", r.bin, r.n, r.median, r.p20, r.p80);
            let _ = writeln!(dat, "{} {} {} {}", r.bin, r.median, r.p20, r.p80);
        }
        fs::write(out.join("sweep.csv"), csv)?;
        fs::write(out.join("sweep.dat"), dat)?;
        for (i, recs) in self.records.iter().enumerate() {
            write_records_csv(recs, &out.join(format!("records_bin{i}.csv")))?;
        }
        Ok(())
    }
}

/// Evaluate the dataset once per bin with hints exactly `bin` away on the
/// swept axis and `fixed` away on the other. Every bin reuses the same
/// per-object seeds, so bins differ only in the hint magnitude.
pub fn robustness_sweep(
    dataset: &Path,
    axis: SweepAxis,
    bins: &[f64],
    fixed: f64,
    cfg: &BenchConfig,
) -> Result<SweepTable> {
    if bins.is_empty() {
        return Err(Error::EmptyInput("no sweep bins".into()));
    }
    let (pos_limit, rot_limit) = (cfg.snap.delta_position, cfg.snap.delta_orientation);
    let mut rows = Vec::with_capacity(bins.len());
    let mut records = Vec::with_capacity(bins.len());
    for &bin in bins {
        let (eps_pos, eps_rot) = match axis {
            SweepAxis::Position => (bin, fixed),
            SweepAxis::Rotation => (fixed, bin),
        };
        if !(0.0..=pos_limit).contains(&eps_pos) || !(0.0..=rot_limit).contains(&eps_rot) {
            return Err(Error::InvalidArgument(format!(
                "sweep hint ({eps_pos} m, {eps_rot} rad) exceeds the search radii"
            )));
        }
        let bin_cfg = BenchConfig {
            hint_mode: HintMode::Exact,
            eps_pos,
            eps_rot,
            snap: seat_core::snap::SnapConfig {
                uninformed: false,
                ..cfg.snap.clone()
            },
            ..cfg.clone()
        };
        let report = run_benchmark(dataset, &bin_cfg)?;
        let metric: Vec<f64> = report
            .records
            .iter()
            .map(|r| match axis {
                SweepAxis::Position => r.delta_pos,
                SweepAxis::Rotation => r.delta_rot,
            })
            .collect();
        let p = |q| percentile(&metric, q).unwrap_or(f64::NAN);
        rows.push(SweepRow {
            bin,
            n: metric.len(),
            median: p(50.0),
            p20: p(20.0),
            p80: p(80.0),
        });
        records.push(report.records);
    }
    Ok(SweepTable {
        axis,
        fixed,
        rows,
        records,
    })
}
