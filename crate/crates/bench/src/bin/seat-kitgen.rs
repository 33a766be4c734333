//! Generate kit assemblies and check every cavity against its object.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;

use seat_bench::{generate_dataset, DatasetConfig, ObjectSource};
use seat_core::kitgen::check::check_kit;
use seat_core::scene::Scene;

#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// Directory of .obj meshes; procedural shapes when omitted.
    #[arg(long)]
    objects: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Horizontal clearance, meters.
    #[arg(long, default_value_t = 0.0025)]
    margin: f64,
    /// Kits per assembly, `k` or `min..max`.
    #[arg(long, default_value = "2..5")]
    kits_per_assembly: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Start objects upside down.
    #[arg(long)]
    hard: bool,
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    Ok((a.trim().parse().context("kits per assembly")?, b.trim().parse().context("kits per assembly")?))
}

fn main() -> Result<()> {
    let args = Args::parse();
    let (kits_min, kits_max) = parse_range(&args.kits_per_assembly)?;
    let cfg = DatasetConfig {
        n_assemblies: args.n,
        kits_min,
        kits_max,
        margin: args.margin,
        seed: args.seed,
        hard: args.hard,
        ..DatasetConfig::default()
    };
    let source = match &args.objects {
        Some(dir) => ObjectSource::from_dir(dir)?,
        None => ObjectSource::Procedural,
    };
    let manifest = generate_dataset(&source, &cfg, &args.out)?;
    let mut invalid = 0;
    for entry in &manifest.scenes {
        let scene = Scene::load(&manifest.scene_dir(&args.out, entry))?;
        for k in &scene.assembly.kits {
            let report = check_kit(&scene.object(k.object_id)?.mesh, &k.kit, &scene.assembly.spec)?;
            let status = if report.valid() { "ok" } else { "INVALID" };
            invalid += usize::from(!report.valid());
            println!(
                "{} object {} {status} overlap={} stray={} covered={}",
                entry.id, k.object_id, report.max_overlap, report.stray_columns, report.covered_columns
            );
        }
    }
    if invalid > 0 {
        bail!("{invalid} kits failed the check");
    }
    Ok(())
}
