use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use kreinres::harness::{parse_config, run};

/// Krein-space spectral experiments: pencil spectra, weighted resolvent
/// sweeps, commutator positivity checks, and kernel property reports.
#[derive(Parser)]
#[command(name = "kreinres", version)]
struct Cli {
    /// spectrum | sweep | mourre | virial | putnam | calculus | definitize | bessel | commutator
    command: String,
    /// JSON configuration with top-level keys `model`, `run`, `output`
    #[arg(long)]
    config: PathBuf,
    /// output directory (default: current directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// rayon worker threads (fallback: KREINRES_THREADS)
    #[arg(long)]
    threads: Option<usize>,
    /// enable multi-resolution stability assertions
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    // deterministic single-threaded BLAS; parallelism lives in rayon
    std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("KREINRES_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("config error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let out_dir = cli.out.unwrap_or_else(|| PathBuf::from("."));
    match run(&cli.command, &cfg, &out_dir, cli.strict) {
        Ok(code) => ExitCode::from(code as u8),
        Err(kreinres::Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
