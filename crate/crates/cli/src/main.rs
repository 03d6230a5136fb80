use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jwec_cli::{config_from_overrides, load_config_file, run, Command, Overrides, RunConfig, RunError};

/// Region evaluation, rate-distortion curves and small-blocklength
/// simulation of keyed watermarking codes.
#[derive(Parser)]
#[command(name = "jwec", version)]
struct Cli {
    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Rate-distortion curve of the message source over a D' grid.
    Rd(Flags),
    /// Evaluate the keyed region conditions at one point.
    RegionEval(Flags),
    /// Optimize one region coordinate over auxiliary channels.
    RegionOpt(Flags),
    /// Build a random code and run Monte-Carlo trials on it.
    Simulate(Flags),
    /// Bin-multiplicity and compression audits of one random code.
    Audit(Flags),
    /// R(D') and embedding feasibility over a D' grid.
    Sweep(Flags),
    /// Run whatever command a config (or a manifest) names.
    Run(Flags),
}

#[derive(Args)]
struct Flags {
    /// Run config; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    aux: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: current directory).
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    extended: bool,
    #[arg(long)]
    exact_equivocation: bool,
}

fn load(command: Option<Command>, f: Flags) -> Result<RunConfig, RunError> {
    let o = Overrides {
        command,
        spec: f.spec,
        aux: f.aux,
        n: f.n,
        trials: f.trials,
        delta: f.delta,
        gamma: f.gamma,
        seed: f.seed,
        out: f.out,
        extended: f.extended,
        exact_equivocation: f.exact_equivocation,
    };
    Ok(match f.config {
        Some(p) => load_config_file(&p, &o)?,
        None => config_from_overrides(&o)?,
    })
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Verb::Rd(f) => (Some(Command::Rd), f),
        Verb::RegionEval(f) => (Some(Command::RegionEval), f),
        Verb::RegionOpt(f) => (Some(Command::RegionOpt), f),
        Verb::Simulate(f) => (Some(Command::Simulate), f),
        Verb::Audit(f) => (Some(Command::Audit), f),
        Verb::Sweep(f) => (Some(Command::Sweep), f),
        Verb::Run(f) => (None, f),
    };
    let result = load(command, flags).and_then(|cfg| {
        let out = run(&cfg)?;
        let dir = PathBuf::from(cfg.out.as_deref().unwrap_or("."));
        out.write_to(&dir)?;
        println!("{} {}", out.manifest_hash, dir.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
