//! The `warden` binary: synthesize, simulate and verify grid patrol missions.

mod commands;
mod draw;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit codes: 0 success, 2 unrealizable, 3 verification failure,
/// 4 parse error; 1 for everything else.
pub const EXIT_UNREALIZABLE: u8 = 2;
pub const EXIT_VERIFICATION: u8 = 3;
pub const EXIT_PARSE: u8 = 4;

#[derive(Parser)]
#[command(name = "warden", version, about = "Mission controller synthesis and hybrid enactment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a controller from a mission file and export it.
    Synthesize(SynthesizeArgs),
    /// Run a mission against the simulated robot and record trace, log and
    /// trajectory.
    Simulate(SimulateArgs),
    /// Check a controller file against the three synthesis conditions.
    Verify(VerifyArgs),
    /// Evaluate the mission's formulas over a recorded trace.
    CheckTrace(CheckTraceArgs),
    /// Print the mission's composed environment in the LTS text format.
    DumpLts(DumpLtsArgs),
}

#[derive(Args)]
struct MissionArgs {
    /// Mission file (.msn)
    #[arg(long)]
    mission: PathBuf,
    /// Occupancy snapshot whose occupied cells are added to the avoid set
    #[arg(long)]
    obstacles: Option<PathBuf>,
    /// Plant gain K override
    #[arg(long = "plant.K", value_name = "K")]
    plant_k: Option<f64>,
    /// Plant damping D override
    #[arg(long = "plant.D", value_name = "D")]
    plant_d: Option<f64>,
    /// Proportional gain override
    #[arg(long = "plant.Kp", value_name = "KP")]
    plant_kp: Option<f64>,
    /// Forward speed override (mm/s)
    #[arg(long = "plant.vfwd", value_name = "MM_S")]
    plant_vfwd: Option<f64>,
    /// Forward heading drift override (rad/s)
    #[arg(long = "plant.drift", value_name = "RAD_S")]
    plant_drift: Option<f64>,
    /// Integration step override (s)
    #[arg(long = "plant.dt", value_name = "S")]
    plant_dt: Option<f64>,
    /// Actuator saturation override (V)
    #[arg(long = "plant.vmax", value_name = "V")]
    plant_vmax: Option<f64>,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[command(flatten)]
    mission: MissionArgs,
    /// Output directory for controller.ctl and the report
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    mission: MissionArgs,
    /// Controller file; synthesized inline when absent
    #[arg(long)]
    controller: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Simulated seconds to run
    #[arg(long, default_value_t = 1800.0)]
    budget: f64,
    /// Seed for all randomness (sensor noise)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sensor noise standard deviation in pixels (0 = off)
    #[arg(long, default_value_t = 0.0)]
    noise_px: f64,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    mission: MissionArgs,
    /// Controller file to verify
    #[arg(long)]
    controller: PathBuf,
}

#[derive(Args)]
struct CheckTraceArgs {
    #[command(flatten)]
    mission: MissionArgs,
    /// Trace file: one action per line (or enactment trace lines), optional
    /// `@loop` marker
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct DumpLtsArgs {
    #[command(flatten)]
    mission: MissionArgs,
    /// Write to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synthesize(args) => commands::synthesize(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Verify(args) => commands::verify(args),
        Command::CheckTrace(args) => commands::check_trace(args),
        Command::DumpLts(args) => commands::dump_lts(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
