//! `padlab` command-line tool.
//!
//! Exit codes: 0 success, 1 internal error, 2 configuration or input error.
//! A failed stationarity verdict is a result, not an error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use padlab::posenc::ResizeMode;
use padlab::GridSize;

use config::{parse_offsets, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] padlab::Error),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Library(_) | CliError::Io { .. } => 2,
            CliError::Internal(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "padlab", version, about = "Positional statistics of convolutional feature maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an explicit positional encoding (CSV, PGM, JSON descriptor)
    Encode(EncodeArgs),
    /// Monte Carlo moments, stationarity verdict and, for linear nets, exact moments
    Analyze(AnalyzeArgs),
    /// Ridge readout of position from per-location feature statistics
    Probe(ProbeArgs),
    /// Draw training scales from a schedule and log their frequencies
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; flags given on the command line take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); never changes results
    #[arg(long, env = "PADLAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct NetArgs {
    /// Preset name or path to a network JSON file
    #[arg(long)]
    net: Option<String>,
    /// Input grid, HxW or N
    #[arg(long)]
    size: Option<GridSize>,
    /// Monte Carlo sample count
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct EncodeArgs {
    /// csg, csg-aligned, spe or constant
    #[arg(long)]
    kind: Option<String>,
    /// Grid, HxW or N
    #[arg(long)]
    size: Option<GridSize>,
    /// Channel count for spe (multiple of 4) and constant
    #[arg(long)]
    channels: Option<usize>,
    /// Resize the generated encoding to this grid
    #[arg(long)]
    resize_to: Option<GridSize>,
    /// Resize mode: interp or expand
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ResizeMode>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Offsets as di,dj;di,dj;...
    #[arg(long, allow_hyphen_values = true)]
    offsets: Option<String>,
    /// z threshold for verdicts
    #[arg(long)]
    z: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Ridge strength
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Schedule JSON file; defaults to 256/384/512 with probabilities 0.5/0.25/0.25
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Number of training steps to draw
    #[arg(long)]
    steps: Option<u64>,
    #[command(flatten)]
    common: Common,
}

fn parse_mode(s: &str) -> Result<ResizeMode, String> {
    match s {
        "interp" => Ok(ResizeMode::Interp),
        "expand" => Ok(ResizeMode::Expand),
        other => Err(format!("unknown resize mode '{other}' (interp, expand)")),
    }
}

fn common_flags(c: Common) -> (Option<PathBuf>, RunConfig) {
    let flags = RunConfig { out: c.out, seed: c.seed, threads: c.threads, ..Default::default() };
    (c.config, flags)
}

fn net_flags(n: NetArgs, base: RunConfig) -> RunConfig {
    RunConfig { net: n.net, size: n.size, samples: n.samples, ..base }
}

fn resolve(name: &str, file: Option<PathBuf>, flags: RunConfig) -> Result<RunConfig, CliError> {
    let base = match file {
        Some(path) => RunConfig::load(&path)?,
        None => RunConfig::default(),
    };
    if let Some(cmd) = &base.command {
        if cmd != name {
            return Err(CliError::Config(format!(
                "config file is for command '{cmd}', not '{name}'"
            )));
        }
    }
    let mut cfg = base.overlay(flags);
    cfg.command = Some(name.to_string());
    Ok(cfg)
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    match cli.command {
        Command::Encode(a) => {
            let (file, base) = common_flags(a.common);
            let flags = RunConfig {
                kind: a.kind,
                size: a.size,
                channels: a.channels,
                resize_to: a.resize_to,
                mode: a.mode,
                ..base
            };
            commands::cmd_encode(&resolve("encode", file, flags)?)
        }
        Command::Analyze(a) => {
            let (file, base) = common_flags(a.common);
            let offsets = a.offsets.as_deref().map(parse_offsets).transpose().map_err(CliError::Config)?;
            let flags = RunConfig { offsets, z: a.z, ..net_flags(a.net, base) };
            commands::cmd_analyze(&resolve("analyze", file, flags)?)
        }
        Command::Probe(a) => {
            let (file, base) = common_flags(a.common);
            let flags = RunConfig { lambda: a.lambda, ..net_flags(a.net, base) };
            commands::cmd_probe(&resolve("probe", file, flags)?)
        }
        Command::Schedule(a) => {
            let (file, base) = common_flags(a.common);
            let flags = RunConfig { schedule: a.schedule, steps: a.steps, ..base };
            commands::cmd_schedule(&resolve("schedule", file, flags)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("padlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
