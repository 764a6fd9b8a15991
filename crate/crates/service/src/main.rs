use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use log::info;

use graphal_core::graph::DEFAULT_DENSE_CAP;
use graphal_service::{router, AppState, Environment};

#[derive(Parser)]
#[command(name = "graphal-service", version, about = "HTTP service for interactive labeling sessions")]
struct Args {
    #[arg(long, env = "GRAPHAL_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Directory for session event logs; sessions are kept in memory only
    /// when omitted.
    #[arg(long, env = "GRAPHAL_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Directory holding the MNIST IDX files.
    #[arg(long, env = "GRAPHAL_MNIST_DIR")]
    mnist_dir: Option<PathBuf>,
    /// Largest dataset accepted.
    #[arg(long, default_value_t = DEFAULT_DENSE_CAP)]
    max_nodes: usize,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut env = Environment {
        dense_cap: args.max_nodes,
        ..Environment::default()
    };
    if let Some(dir) = &args.mnist_dir {
        for p in [&mut env.mnist_images, &mut env.mnist_labels] {
            *p = dir.join(p.file_name().expect("default MNIST path has a file name"));
        }
    }
    let state = Arc::new(AppState::new(env, args.data_dir)?);
    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
