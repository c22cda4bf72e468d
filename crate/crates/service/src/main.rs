use std::net::SocketAddr;
use std::time::Duration;

use clap::Parser;
use qmod_service::{router, AppState, Config};

#[derive(Parser, Debug)]
#[command(
    name = "qm-service",
    version,
    about = "HTTP API for conformal modulus computations"
)]
struct Args {
    /// Listen address.
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Concurrent solver tasks (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Seconds a finished job or stored solution is kept.
    #[arg(long, default_value_t = 3600)]
    ttl: u64,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QM_LOG", "info")).init();
    let args = Args::parse();
    let mut config = Config {
        ttl: Duration::from_secs(args.ttl),
        ..Config::default()
    };
    if let Some(w) = args.workers {
        config.workers = w.max(1);
    }
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}
