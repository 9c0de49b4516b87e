use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kse_synth::cli::{run, RunOptions, THREADS_ENV};

/// Observer-based boundary control toolkit for the linear Kuramoto-Sivashinsky equation.
#[derive(Parser, Debug)]
#[command(name = "kse-synth", version, about)]
struct Args {
    /// Job configuration (JSON, schema 1).
    config: PathBuf,
    /// Output directory (overrides the config's `outdir`).
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Log solver progress to stderr.
    #[arg(long, short)]
    verbose: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if args.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let out = run(&args.config, &RunOptions { outdir: args.outdir, threads: args.threads });
    print!("{}", out.summary);
    if let Some(e) = &out.error {
        eprintln!("kse-synth: {e}");
    }
    ExitCode::from(out.exit_code as u8)
}
