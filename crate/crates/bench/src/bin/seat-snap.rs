//! Snap one object of a saved scene to its cavity.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde_json::json;

use seat_core::completion::CompletionMode;
use seat_core::geom::pose::Pose;
use seat_core::pipeline::{complete_kit, snap_object};
use seat_core::scene::{observe, Observation, ObserveOptions, Scene};
use seat_core::snap::SnapConfig;

#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// Scene directory, with or without a saved observation.
    #[arg(long)]
    obs: PathBuf,
    #[arg(long)]
    object: usize,
    /// Goal pose `x,y,z,qx,qy,qz,qw`; uninformed search when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    hint: Option<Vec<f64>>,
    /// SnapConfig JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "oracle")]
    completion: CompletionMode,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut cfg: SnapConfig = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SnapConfig::default(),
    };
    let hint = match &args.hint {
        Some(h) if h.len() != 7 => bail!("--hint takes 7 comma-separated values, got {}", h.len()),
        Some(h) => Some(Pose::from_parts([h[0], h[1], h[2]], [h[3], h[4], h[5], h[6]])?),
        None => None,
    };
    cfg.uninformed = hint.is_none();
    let scene = Scene::load(&args.obs)?;
    let obs = if Observation::exists(&args.obs) {
        Observation::load(&args.obs)?
    } else {
        observe(&scene, &ObserveOptions::default())?
    };
    let kit = complete_kit(&scene, &obs, args.completion)?;
    let r = snap_object(&scene, &obs, &kit, args.object, args.completion, hint.as_ref(), &cfg)?;
    let out = json!({
        "pose": r.pose,
        "position_score": r.position_score,
        "n_candidates": [r.candidates_evaluated.0, r.candidates_evaluated.1],
        "timing_ms": r.timing_ms,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
