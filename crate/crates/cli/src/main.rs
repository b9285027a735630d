//! `fermi-rg`: run geometry, ladder, flow and audit computations from one config file.

mod artifacts;
mod commands;
mod fixtures;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use fermi_rg::config::RunConfig;

use artifacts::Artifacts;

#[derive(Parser)]
#[command(name = "fermi-rg", version, about = "Multiscale renormalization-group engine for a 2D fermion gas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the last flow scale.
    #[arg(long = "j-max", global = true)]
    j_max: Option<i32>,
    /// Overrides the ladder length cap.
    #[arg(long = "ell-max", global = true)]
    ell_max: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the configuration against every parameter constraint.
    Validate,
    /// Fermi curve, cutoff profiles and sector partitions.
    Geometry,
    /// Ladder identity suite and the particle-particle suppression scan.
    Ladders,
    /// The renormalization-group flow with per-scale dumps.
    Flow,
    /// All flow audits plus the coupling-scaling and ladder-remainder diagnostics.
    Audit,
}

impl Cli {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(j) = self.j_max {
            cfg.flow.j_max = j;
        }
        if let Some(l) = self.ell_max {
            cfg.rg.ell_max = l;
        }
        Ok(cfg)
    }

    fn out_dir(&self, verb: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out").join(verb))
    }
}

type Body = fn(&RunConfig, &mut Artifacts) -> Result<()>;

fn run(cli: &Cli) -> Result<bool> {
    let cfg = cli.load()?;
    let (verb, body): (&'static str, Body) = match cli.command {
        Command::Validate => return commands::validate(&cfg, cli.out.as_deref()),
        Command::Geometry => ("geometry", commands::geometry),
        Command::Ladders => ("ladders", commands::ladders),
        Command::Flow => ("flow", commands::flow),
        Command::Audit => ("audit", commands::audit),
    };
    commands::require_valid(&cfg)?;
    let dir = cli.out_dir(verb);
    let mut artifacts = Artifacts::create(&dir, verb, cfg.seed)?;
    body(&cfg, &mut artifacts)?;
    let n = artifacts.finish()?;
    println!("wrote {n} tables to {}", dir.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
