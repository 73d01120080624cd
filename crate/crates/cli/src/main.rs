use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod error;
mod pipeline;
mod stages;

use config::PipelineConfig;
use error::CliResult;
use pipeline::{Context, Stage, Status};

/// Wet-bulb snowfall-regime pipeline.
///
/// Every subcommand reads the same JSON configuration and writes
/// `<out>/<stage>/` with a `manifest.json` that records the configuration
/// hash, seed, versions and completion status.
#[derive(Debug, Parser)]
#[command(name = "snowline", version)]
struct Cli {
    /// JSON configuration file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration value, e.g. `--set synth.dlat=5`.
    /// Values parse as JSON, falling back to plain strings.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world: product wet-bulb fields, mask, precipitation, gauges.
    Synth,
    /// Air temperature, humidity and pressure to wet-bulb temperature.
    Wetbulb,
    /// Estimate product errors at gauges and build the weighted ensemble.
    Fuse,
    /// Daily potential-snowfall masks for the ensemble and each product.
    Snowmask,
    /// Snowfall areas per region, daily and per calendar period.
    Areas,
    /// Annual and sliding-window snowfall frequency maps and exceedance masks.
    Exceedance,
    /// Transition latitudes per longitude slice and their retraction rates.
    Transition,
    /// Annual snowfall-to-precipitation ratio.
    Spr,
    /// Regional trend tables and per-pixel trend maps.
    Trend,
    /// Validation scores against gauges.
    Validate,
    /// Every stage in order.
    Run,
    /// Print the resolved configuration.
    ShowConfig,
}

fn load(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("out={}", serde_json::Value::String(o.to_string_lossy().into_owned())));
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> CliResult<()> {
    let cfg = load(&cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let ctx = Context::new(cfg);
    let single = match cli.command {
        Command::Synth => Stage::Synth,
        Command::Wetbulb => Stage::Wetbulb,
        Command::Fuse => Stage::Fuse,
        Command::Snowmask => Stage::Snowmask,
        Command::Areas => Stage::Areas,
        Command::Exceedance => Stage::Exceedance,
        Command::Transition => Stage::Transition,
        Command::Spr => Stage::Spr,
        Command::Trend => Stage::Trend,
        Command::Validate => Stage::Validate,
        Command::ShowConfig => {
            println!("{}", serde_json::to_string_pretty(&ctx.cfg)?);
            return Ok(());
        }
        Command::Run => {
            let stages = stages::full_run(&ctx);
            ctx.write_run_manifest(Status::Running, &stages)?;
            for &s in &stages {
                stages::run_one(&ctx, s)?;
                println!("{}: complete -> {}", s.name(), ctx.stage_dir(s).display());
            }
            ctx.write_run_manifest(Status::Complete, &stages)?;
            return Ok(());
        }
    };
    stages::run_one(&ctx, single)?;
    println!("{}: complete -> {}", single.name(), ctx.stage_dir(single).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
