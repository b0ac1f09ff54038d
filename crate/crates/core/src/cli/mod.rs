//! `vmarker` command line.
//!
//! Exit codes: 0 success, 2 input or format error, 3 numerical or geometric
//! degeneracy, 1 anything else.

mod commands;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "vmarker", version, about = "Tracked-stylus calibration, waypoint capture and demonstration evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pivot calibration of the tip offset from a pose recording.
    CalibratePosition(CalibratePositionArgs),
    /// Tip orientation from hole recordings; completes a calibration file.
    CalibrateOrientation(CalibrateOrientationArgs),
    /// Drawing frame from three probed waypoints.
    IdentifyFrame(IdentifyFrameArgs),
    /// Evaluate demonstration traces against an ideal path.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset with ground truth.
    Simulate(SimulateArgs),
    /// Waypoints from button presses in a pen event log.
    Snapshot(SnapshotArgs),
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Neighborhood radius of the tip-point filter, meters.
    #[arg(long, default_value_t = 0.005)]
    pub radius: f64,
    /// Neighbors (excluding the point itself) a core tip point needs.
    #[arg(long, default_value_t = 10)]
    pub min_neighbors: usize,
    /// Solve once on all poses without filtering.
    #[arg(long)]
    pub no_filter: bool,
}

#[derive(Debug, Args)]
pub struct CalibratePositionArgs {
    /// Fiducial pose recording (`t,x,y,z,qx,qy,qz,qw` CSV or JSON lines).
    #[arg(long)]
    pub poses: PathBuf,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Smallest acceptable largest pairwise rotation between poses, degrees.
    #[arg(long, default_value_t = 30.0)]
    pub min_span_deg: f64,
    /// Write the calibration file here (rotation left at identity).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateOrientationArgs {
    /// Hole manifest: `{"holes": [{"axis": [x,y,z], "poses": "file"}], "button": {"poses": "file", "direction": [x,y,z]}}`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Calibration file from `calibrate-position`; supplies the tip offset.
    #[arg(long, conflicts_with = "translation")]
    pub prior: Option<PathBuf>,
    /// Tip offset `x,y,z` in meters, instead of `--prior`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub translation: Option<Vec<f64>>,
    /// Chord radius of the per-hole axis filter.
    #[arg(long, default_value_t = 0.0175)]
    pub axis_radius: f64,
    /// Neighbors a core axis estimate needs (capped at poses per hole − 1).
    #[arg(long, default_value_t = 10)]
    pub axis_min_neighbors: usize,
    /// Disable the axis filter.
    #[arg(long)]
    pub no_filter: bool,
    /// Roll about the tip axis of the starting rotation, radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub initial_roll: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentifyFrameArgs {
    /// Waypoint file with exactly three waypoints: +x, origin, +y side.
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long, default_value = "F")]
    pub label: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Trace CSV in world coordinates; repeat for a cohort. Processed in sorted path order.
    #[arg(long = "trace", required = true)]
    pub traces: Vec<PathBuf>,
    /// Drawing frame file.
    #[arg(long)]
    pub frame: PathBuf,
    /// Ideal path file: `{"waypoints": [[x,y], ...], "visiting_sequence": [i, ...]}`.
    #[arg(long)]
    pub path: PathBuf,
    /// Ideal points per segment.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// ε-zone half-width, meters.
    #[arg(long, default_value_t = 0.003)]
    pub epsilon: f64,
    /// Histogram bin width, meters.
    #[arg(long, default_value_t = 0.0005)]
    pub bin_width: f64,
    /// Spectrum threshold as a fraction of the largest non-DC amplitude.
    #[arg(long, default_value_t = 0.05)]
    pub threshold_ratio: f64,
    /// Absolute spectrum threshold in newtons; overrides `--threshold-ratio`.
    #[arg(long)]
    pub threshold_abs: Option<f64>,
    /// Largest allowed closest approach to a waypoint, meters.
    #[arg(long, default_value_t = 0.02)]
    pub gate: f64,
    /// Directory for `report.json`, `aggregate.csv`, `histogram.csv` and `spectrum_<k>.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation plan JSON; every field optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the plan's dataset seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SnapshotArgs {
    /// Fiducial pose recording.
    #[arg(long)]
    pub poses: PathBuf,
    /// Pen event log (`EVT <t> BTN 1|0`, `EVT <t> PWR 1`).
    #[arg(long)]
    pub events: PathBuf,
    /// Tip calibration file.
    #[arg(long)]
    pub calibration: PathBuf,
    /// Presses this far outside the recording, seconds, still snap to its ends.
    #[arg(long, default_value_t = 0.1)]
    pub guard: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(CliError::from_clap)?;
    match cli.command {
        Command::CalibratePosition(a) => commands::cmd_calibrate_position(&a),
        Command::CalibrateOrientation(a) => commands::cmd_calibrate_orientation(&a),
        Command::IdentifyFrame(a) => commands::cmd_identify_frame(&a),
        Command::Evaluate(a) => commands::cmd_evaluate(&a),
        Command::Simulate(a) => commands::cmd_simulate(&a),
        Command::Snapshot(a) => commands::cmd_snapshot(&a),
    }
}

pub fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.kind == ErrorKind::Help {
                print!("{}", e.message);
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {}", e.message);
            ExitCode::from(e.kind.exit_code())
        }
    }
}
