//! `rgrl`: drive the service from the command line.
//!
//! Every subcommand except `serve` talks HTTP: either to the server named
//! by `--server`, or to a private in-process server bound to an ephemeral
//! port for the duration of the command.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rgrl_api::{GenRequest, Mode, RunConfig, RunOutcome, SweepRow, SyntheticSpec};
use rgrl_client::Client;
use rgrl_core::model::PNorm;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "rgrl", about = "Relation-guided representation learning", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8391")]
        addr: SocketAddr,
        /// Maximum number of concurrently executing jobs.
        #[arg(long, default_value_t = 2)]
        workers: usize,
    },
    /// Full pipeline: train, build the affinity, cluster, evaluate.
    Run(RunArgs),
    /// Out-of-sample run: train on a seed subset, label the rest by
    /// nearest neighbor in latent space.
    Oos(RunArgs),
    /// Grid search over beta and gamma, reusing one pre-trained checkpoint.
    Sweep(RunArgs),
    /// Clustering metrics for two label files (ground truth, prediction).
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        server: Option<String>,
    },
    /// Generate a union-of-subspaces dataset and write it to disk.
    Gen {
        /// Number of subspaces (clusters).
        #[arg(long, short)]
        k: usize,
        /// Intrinsic dimension of each subspace.
        #[arg(long)]
        dsub: usize,
        /// Ambient dimension.
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        per_cluster: usize,
        /// Additive Gaussian noise level.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        server: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Server to submit to; a private in-process server is used when
    /// omitted.
    #[arg(long)]
    server: Option<String>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    /// Elementwise exponent of the affinity matrix.
    #[arg(long)]
    rho: Option<f64>,
    /// Intrinsic subspace dimension used by the affinity truncation.
    #[arg(long)]
    dsub: Option<usize>,
    /// Cluster count.
    #[arg(long)]
    k: Option<usize>,
    /// Replace weighted reconstruction with plain reconstruction
    /// (`run` only).
    #[arg(long)]
    ablation_sc: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    L2,
}

impl From<NormArg> for PNorm {
    fn from(value: NormArg) -> Self {
        match value {
            NormArg::L1 => PNorm::L1,
            NormArg::L2 => PNorm::L2,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let code = runtime.block_on(dispatch(cli));
    std::process::exit(code);
}

async fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Serve { addr, workers } => match rgrl_server::serve(addr, workers).await {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                3
            }
        },
        Command::Run(args) => submit_and_wait(args, None).await,
        Command::Oos(args) => submit_and_wait(args, Some(Mode::Oos)).await,
        Command::Sweep(args) => submit_and_wait(args, Some(Mode::Sweep)).await,
        Command::Eval { truth, pred, server } => eval(truth, pred, server).await,
        Command::Gen {
            k,
            dsub,
            dim,
            per_cluster,
            noise,
            seed,
            out,
            server,
        } => {
            let spec = SyntheticSpec {
                clusters: k,
                subspace_dim: dsub,
                ambient_dim: dim,
                per_cluster,
                noise,
            };
            gen(spec, seed, out, server).await
        }
    }
}

/// Connect to `--server` or spin up a private one.
async fn connect(server: Option<String>) -> Result<Client, i32> {
    match server {
        Some(url) => Ok(Client::new(url)),
        None => match rgrl_server::spawn_ephemeral(2).await {
            Ok((addr, _handle)) => Ok(Client::new(format!("http://{addr}"))),
            Err(e) => {
                eprintln!("error: failed to start in-process server: {e}");
                Err(3)
            }
        },
    }
}

fn load_config(args: &RunArgs, force_mode: Option<Mode>) -> Result<RunConfig, i32> {
    let mut config = match RunConfig::from_toml_file(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(e.kind().exit_code());
        }
    };
    if let Some(mode) = force_mode {
        config.mode = mode;
    } else {
        // `run` executes the full pipeline (or its ablation); oos/sweep
        // configs are reachable only through their subcommands.
        if config.mode != Mode::AblationSc {
            config.mode = Mode::Full;
        }
        if args.ablation_sc {
            config.mode = Mode::AblationSc;
        }
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(beta) = args.beta {
        config.hyper.beta = beta;
    }
    if let Some(gamma) = args.gamma {
        config.hyper.gamma = gamma;
    }
    if let Some(alpha) = args.alpha {
        config.hyper.alpha = alpha;
    }
    if let Some(norm) = args.norm {
        config.hyper.norm = norm.into();
    }
    if let Some(rho) = args.rho {
        config.affinity.rho = rho;
    }
    if let Some(dsub) = args.dsub {
        config.affinity.subspace_dim = dsub;
    }
    if let Some(k) = args.k {
        config.affinity.clusters = k;
    }
    Ok(config)
}

async fn submit_and_wait(args: RunArgs, force_mode: Option<Mode>) -> i32 {
    let config = match load_config(&args, force_mode) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let client = match connect(args.server).await {
        Ok(c) => c,
        Err(code) => return code,
    };

    let id = match client.submit(&config).await {
        Ok(id) => id,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    eprintln!("job {id} submitted");

    let mut last = String::new();
    let result = client
        .wait(id, Duration::from_millis(250), |status| {
            if let Some(p) = &status.progress {
                let line = format!("{} {}/{}", p.phase, p.done, p.total);
                if line != last {
                    eprint!("\r{line}        ");
                    let _ = std::io::stderr().flush();
                    last = line;
                }
            }
            if status.state.is_terminal() {
                eprintln!();
            }
        })
        .await;

    match result {
        Ok(outcome) => {
            print_outcome(&outcome);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn print_outcome(outcome: &RunOutcome) {
    if let Some(oos) = &outcome.oos {
        eprintln!(
            "seed set {} samples, holdout {} samples",
            oos.seed_size, oos.holdout_size
        );
        if let Some(m) = &oos.seed_metrics {
            println!("SEED_ACC {}", m.acc);
        }
    }
    if let Some(rows) = &outcome.sweep {
        print_sweep(rows);
    }
    if let Some(m) = &outcome.metrics {
        println!("ACC {}", m.acc);
        println!("NMI {}", m.nmi);
        println!("PUR {}", m.purity);
    }
    if outcome.degenerate_affinity {
        eprintln!("warning: affinity matrix is all-near-zero");
    }
    if outcome.degenerate_clustering {
        eprintln!("warning: clustering is degenerate (no usable spectral structure)");
    }
    if let Some(path) = &outcome.artifacts.meta {
        if let Some(dir) = path.parent() {
            eprintln!("artifacts in {}", dir.display());
        }
    }
}

fn print_sweep(rows: &[SweepRow]) {
    println!("beta gamma ACC NMI PUR");
    for row in rows {
        match (&row.metrics, &row.error) {
            (Some(m), _) => println!(
                "{} {} {} {} {}{}",
                row.beta,
                row.gamma,
                m.acc,
                m.nmi,
                m.purity,
                if row.best { " best" } else { "" }
            ),
            (None, Some(err)) => println!("{} {} failed: {err}", row.beta, row.gamma),
            (None, None) => println!("{} {} failed", row.beta, row.gamma),
        }
    }
}

async fn eval(truth: PathBuf, pred: PathBuf, server: Option<String>) -> i32 {
    let y_true = match rgrl_core::data::read_labels(&truth) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return e.kind().exit_code();
        }
    };
    let y_pred = match rgrl_core::data::read_labels(&pred) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return e.kind().exit_code();
        }
    };
    let client = match connect(server).await {
        Ok(c) => c,
        Err(code) => return code,
    };
    match client.eval(y_true, y_pred).await {
        Ok(m) => {
            println!("ACC {}", m.acc);
            println!("NMI {}", m.nmi);
            println!("PUR {}", m.purity);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

async fn gen(spec: SyntheticSpec, seed: u64, out: PathBuf, server: Option<String>) -> i32 {
    let client = match connect(server).await {
        Ok(c) => c,
        Err(code) => return code,
    };
    let request = GenRequest {
        spec,
        seed,
        out_dir: out,
    };
    match client.gen(&request).await {
        Ok(output) => {
            println!("data {}", output.data_path.display());
            println!("labels {}", output.labels_path.display());
            println!("meta {}", output.meta_path.display());
            eprintln!("{} features x {} samples", output.features, output.samples);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
