//! Command-line front end: one subcommand per run type, a TOML file per run.
//!
//! Exit codes: 0 success, 2 invalid input (config, parse, I/O), 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mems::io::{run, Command, Overrides, RunConfig};
use mems::Error;

#[derive(Parser)]
#[command(name = "mems-cli", version, about = "Spectral Galerkin runs for the fourth-order MEMS equations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the command named in the file.
    Run(Common),
    Spectrum(Common),
    SolveParabolic(Common),
    SolveHyperbolic(Common),
    Picard(Common),
    Certify(Common),
    QuenchSweep(Common),
    Convergence(Common),
    /// Parse and validate a file without running it.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Grid resolution N.
    #[arg(long)]
    n: Option<usize>,
    /// Truncation K.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Basis cache directory; overrides the file and $MEMS_CACHE_DIR.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            lambda: self.lambda,
            beta: self.beta,
            tau: self.tau,
            n: self.n,
            k: self.k,
            dt: self.dt,
            t_final: self.t_final,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            cache_dir: self.cache_dir.clone(),
        }
    }
}

fn execute(cli: Cli) -> mems::Result<()> {
    let (forced, common, check) = match &cli.command {
        Sub::Run(c) => (None, c, false),
        Sub::Check(c) => (None, c, true),
        Sub::Spectrum(c) => (Some(Command::Spectrum), c, false),
        Sub::SolveParabolic(c) => (Some(Command::SolveParabolic), c, false),
        Sub::SolveHyperbolic(c) => (Some(Command::SolveHyperbolic), c, false),
        Sub::Picard(c) => (Some(Command::Picard), c, false),
        Sub::Certify(c) => (Some(Command::Certify), c, false),
        Sub::QuenchSweep(c) => (Some(Command::QuenchSweep), c, false),
        Sub::Convergence(c) => (Some(Command::Convergence), c, false),
    };
    let mut config = RunConfig::read_unvalidated(&common.config)?;
    if let Some(c) = forced {
        config.command = c;
    }
    config.apply(&common.overrides())?;
    if check {
        println!("{}: valid {} config", common.config.display(), config.command.name());
        return Ok(());
    }
    let m = run(&config)?;
    println!(
        "{} finished in {:.3} s, basis {} ({:?})",
        config.command.name(),
        m.wall_clock_seconds,
        &m.basis_fingerprint[..16],
        m.cache_status
    );
    for f in &m.outputs {
        println!("  {}", config.output_dir.join(f).display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
