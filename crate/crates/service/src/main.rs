//! `seat-serve`: the teleoperation session service.

use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;

use seat_core::completion::CompletionMode;
use seat_core::snap::SnapConfig;
use seat_service::{serve, ServiceConfig};

#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// Dataset directory sessions can be opened from.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, default_value = "oracle")]
    completion: CompletionMode,
    /// SnapConfig JSON.
    #[arg(long)]
    snap_config: Option<PathBuf>,
    /// Static editor bundle served at /.
    #[arg(long)]
    ui: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt::init();
    let args = Args::parse();
    let snap = match &args.snap_config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SnapConfig::default(),
    };
    let cfg = ServiceConfig {
        dataset: args.dataset,
        completion: args.completion,
        snap,
        ui_dir: args.ui,
        ..ServiceConfig::default()
    };
    let addr = SocketAddr::new(args.host, args.port);
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    serve(listener, cfg).await?;
    Ok(())
}
