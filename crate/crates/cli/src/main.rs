//! `fwlab` — experiment runner for the slow-fast jump-diffusion laboratory.
//!
//! Every run is pinned by a TOML config plus a mandatory master seed: the
//! manifest records a hash of the resolved configuration, and identical
//! config+seed produce byte-identical CSV outputs at any worker count.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "fwlab",
    version,
    about = "Slow-fast jump-system laboratory: validation, simulation, averaging diagnostics, \
             steering-cost optimization, exit-time experiments, and a tractable toy model"
)]
struct Cli {
    /// Path to the TOML experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file. Some seed is mandatory.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (0 = one per core); never changes results.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Output directory for manifest, summary, and CSV tables.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Config override as key.path=value; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Run the standing-assumption checks and report each one.
    Validate,
    /// Integrate two-scale paths over an epsilon grid.
    Simulate,
    /// Tabulate the averaged drift, mixing rate, and deviation probabilities.
    Average,
    /// Optimize steering costs: barrier height and point-to-point values.
    Action,
    /// First-exit experiment: exit-time scaling and exit-locus histogram.
    Exit,
    /// Tractable single-scale jump model with exact rare-event references.
    Toyldp,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Validate => "validate",
            Cmd::Simulate => "simulate",
            Cmd::Average => "average",
            Cmd::Action => "action",
            Cmd::Exit => "exit",
            Cmd::Toyldp => "toyldp",
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let config_path = cli
        .config
        .ok_or_else(|| anyhow!("pass --config PATH pointing at the experiment TOML file"))?;
    let resolved = config::load(&config_path, &cli.overrides, cli.seed, cli.workers)?;

    if resolved.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(resolved.workers)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;

    let started = Instant::now();
    let name = cli.command.name();
    let report = match cli.command {
        Cmd::Validate => commands::validate(&resolved, &cli.out),
        Cmd::Simulate => commands::simulate(&resolved, &cli.out),
        Cmd::Average => commands::average(&resolved, &cli.out),
        Cmd::Action => commands::action(&resolved, &cli.out),
        Cmd::Exit => commands::exit(&resolved, &cli.out),
        Cmd::Toyldp => commands::toyldp(&resolved, &cli.out),
    }?;
    let total_ms = started.elapsed().as_millis();

    commands::write_manifest(&cli.out, &resolved, name, &report, total_ms)?;
    commands::write_summary(&cli.out, &resolved, name, &report)?;

    for line in &report.summary_lines {
        println!("{line}");
    }
    if report.failed_trials > 0 {
        println!("failed trials: {}", report.failed_trials);
    }
    println!(
        "{} artifacts written to {}",
        report.outputs.len() + 2,
        cli.out.display()
    );
    Ok(report.ok)
}
