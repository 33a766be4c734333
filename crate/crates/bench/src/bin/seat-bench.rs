//! Dataset generation, benchmark runs and robustness sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use seat_bench::{generate_dataset, robustness_sweep, run_benchmark, BenchConfig, DatasetConfig, ObjectSource, SweepAxis};
use seat_core::completion::CompletionMode;
use seat_core::geom::pose::DEG;

#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Position,
    Rotation,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset of kit assemblies and scenes.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Directory of .obj meshes; procedural shapes when omitted.
        #[arg(long)]
        objects: Option<PathBuf>,
        /// DatasetConfig JSON; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        hard: bool,
    },
    /// Evaluate a dataset and write records.csv and summary.json.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// BenchConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        completion: Option<CompletionMode>,
        #[arg(long)]
        uninformed: bool,
    },
    /// Snap error as a function of hint error.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Hint errors to sweep: millimeters for position, degrees for rotation.
        #[arg(long, value_delimiter = ',', required = true)]
        bins: Vec<f64>,
        /// Error held on the other axis, in its unit (degrees or millimeters).
        #[arg(long)]
        fixed: f64,
    },
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let s = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&s).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(T::default()),
    }
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen {
            out,
            objects,
            config,
            n,
            seed,
            hard,
        } => {
            let mut cfg: DatasetConfig = read_config(config.as_deref())?;
            if let Some(n) = n {
                cfg.n_assemblies = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.hard |= hard;
            let source = match objects {
                Some(dir) => ObjectSource::from_dir(&dir)?,
                None => ObjectSource::Procedural,
            };
            let m = generate_dataset(&source, &cfg, &out)?;
            println!("{} scenes in {}", m.scenes.len(), out.display());
        }
        Cmd::Run {
            dataset,
            out,
            config,
            completion,
            uninformed,
        } => {
            let mut cfg: BenchConfig = read_config(config.as_deref())?;
            if let Some(c) = completion {
                cfg.completion = c;
            }
            cfg.snap.uninformed |= uninformed;
            let report = run_benchmark(&dataset, &cfg)?;
            report.write(&out)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
        }
        Cmd::Sweep {
            dataset,
            out,
            config,
            axis,
            bins,
            fixed,
        } => {
            let cfg: BenchConfig = read_config(config.as_deref())?;
            let (axis, bins, fixed) = match axis {
                Axis::Position => (SweepAxis::Position, bins.iter().map(|b| b * 1e-3).collect::<Vec<_>>(), fixed * DEG),
                Axis::Rotation => (SweepAxis::Rotation, bins.iter().map(|b| b * DEG).collect(), fixed * 1e-3),
            };
            let table = robustness_sweep(&dataset, axis, &bins, fixed, &cfg)?;
            table.write(&out)?;
            for r in &table.rows {
                println!("{} n={} median={} p20={} p80={}", r.bin, r.n, r.median, r.p20, r.p80);
            }
        }
    }
    Ok(())
}
