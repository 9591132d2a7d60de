use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nchandover::cli::{self, ScenarioConfig, ValidateOptions};

/// Delay, throughput and handover analysis for 802.11 links.
#[derive(Parser)]
#[command(name = "nchandover", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expected delivery time per mode across an erasure-probability sweep.
    DelaySweep(Common),
    /// Expected delivery time per mode across a distance sweep.
    DistanceSweep(Common),
    /// Optimal AP switch time; also writes the objective curve.
    Handover {
        #[command(flatten)]
        common: Common,
        /// Where to write the objective curve. Defaults to `<out>.curve.csv`.
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Run the self-check suite; exit status 1 if any check fails.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Swap in a deliberately wrong unicast formula.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => {
                ScenarioConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.out.is_some() {
            cfg.out.clone_from(&self.out);
        }
        Ok(cfg)
    }
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn emit(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::DelaySweep(common) => {
            let cfg = common.load()?;
            let csv = cli::cmd_delay_sweep(&cfg).map_err(|e| e.to_string())?;
            emit(cfg.out.as_deref(), &csv)?;
        }
        Command::DistanceSweep(common) => {
            let cfg = common.load()?;
            let csv = cli::cmd_distance_sweep(&cfg).map_err(|e| e.to_string())?;
            emit(cfg.out.as_deref(), &csv)?;
        }
        Command::Handover { common, curve_out } => {
            let cfg = common.load()?;
            let result = cli::cmd_handover(&cfg).map_err(|e| e.to_string())?;
            emit(cfg.out.as_deref(), &result.summary)?;
            match curve_out.or_else(|| cfg.out.as_deref().map(cli::curve_path)) {
                Some(path) => emit(Some(&path), &result.curve)?,
                None => eprintln!("note: objective curve not written; pass --out or --curve-out"),
            }
        }
        Command::Validate {
            common,
            inject_fault,
        } => {
            let cfg = common.load()?;
            let opts = if inject_fault {
                ValidateOptions::with_injected_fault()
            } else {
                ValidateOptions::default()
            };
            let report = cli::cmd_validate(&cfg, &opts).map_err(|e| e.to_string())?;
            emit(cfg.out.as_deref(), &report.to_string())?;
            if !report.all_passed() {
                return Ok(EXIT_VALIDATION);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
