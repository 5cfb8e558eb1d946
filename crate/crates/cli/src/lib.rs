//! The `gread` command-line runner.
//!
//! Every subcommand resolves a flat [`config::RunConfig`] from an optional
//! file or shipped preset plus `--set key=value` overrides, echoes it to
//! `<out>/config.toml`, and writes its results next to it.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use gread::GreadError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("divergence: {0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }
}

impl From<GreadError> for CliError {
    fn from(e: GreadError) -> Self {
        let msg = e.to_string();
        match e {
            GreadError::Config(_) | GreadError::Shape(_) | GreadError::MissingOperator(_) => {
                CliError::Config(msg)
            }
            GreadError::Data(_) | GreadError::Io { .. } | GreadError::Structure(_) => CliError::Data(msg),
            GreadError::Divergence { .. } | GreadError::NonFiniteGradient(_) => CliError::Divergence(msg),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gread", version, about = "Graph reaction-diffusion experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file path or shipped preset name.
    #[arg(long, global = true)]
    pub config: Option<String>,

    /// Output directory (default: $GREAD_OUT, else ./out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for sweep cells.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Override one config key, e.g. `--set reaction=bs`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write checkpoint, history and metrics.
    Train,
    /// Write a synthetic dataset in the on-disk format.
    Generate { kind: GenerateKind },
    /// Dirichlet energy along the dynamics.
    Energy,
    /// Test accuracy over a grid of T or tau values.
    Sweep,
    /// Hidden states at chosen times.
    Export,
    /// Per-step right-hand-side timing against edge count.
    Bench,
    /// List shipped presets.
    Presets,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenerateKind {
    Csbm,
    Homophily,
    Grid,
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("GREAD_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Command::Presets = cli.command {
        for name in config::preset_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let mut cfg = config::resolve(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    if let Command::Generate { kind } = cli.command {
        cfg.dataset = match kind {
            GenerateKind::Csbm => config::DatasetKind::Csbm,
            GenerateKind::Homophily => config::DatasetKind::Homophily,
            GenerateKind::Grid => config::DatasetKind::Grid,
        };
    }
    let out = out_dir(cli);
    std::fs::create_dir_all(&out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let echo = out.join("config.toml");
    std::fs::write(&echo, cfg.to_toml()).map_err(|e| CliError::Data(format!("{}: {e}", echo.display())))?;

    let jobs = cli.jobs.unwrap_or(0);
    match cli.command {
        Command::Sweep => commands::sweep(&cfg, &out, jobs),
        _ => {
            gread::par::set_mode(gread::par::ExecMode::Sequential);
            match cli.command {
                Command::Train => commands::train(&cfg, &out),
                Command::Generate { .. } => commands::generate(&cfg, &out),
                Command::Energy => commands::energy(&cfg, &out),
                Command::Export => commands::export(&cfg, &out),
                Command::Bench => commands::bench(&cfg, &out),
                Command::Sweep | Command::Presets => unreachable!(),
            }
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gread: {e}");
            e.exit_code()
        }
    }
}
