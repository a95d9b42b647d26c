use clap::Parser;
use std::net::SocketAddr;

#[derive(Parser)]
#[command(name = "rgrl-server", about = "HTTP service for relation-guided representation learning runs")]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8391")]
    addr: SocketAddr,
    /// Maximum number of jobs executing concurrently.
    #[arg(long, default_value_t = 2)]
    workers: usize,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    if let Err(e) = rgrl_server::serve(args.addr, args.workers).await {
        eprintln!("server error: {e}");
        std::process::exit(3);
    }
}
