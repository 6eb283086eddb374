//! `gvfsim`: run formation flight scenarios, extract settling metrics and
//! sample the guidance field.
//!
//! Exit codes: 0 on success, 2 when a scenario or log fails validation,
//! 1 when an output file cannot be written.

use clap::{Args, Parser, Subcommand};
use gvf_swarm_core::gvf::build_field;
use gvf_swarm_core::runner::{run, sync_time};
use gvf_swarm_core::scenario::Scenario;
use gvf_swarm_core::svg::render_trajectories;
use gvf_swarm_core::telemetry::TelemetryLog;
use nalgebra::Vector2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gvfsim",
    version,
    about = "Deterministic simulator for circular formation flight of fixed-wing vehicles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write the telemetry log as CSV.
    Simulate(SimulateArgs),
    /// Print settling metrics of a telemetry log.
    Metrics {
        /// Telemetry CSV produced by `simulate`.
        log: PathBuf,
        /// Phase error magnitude counted as synchronized, radians.
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
    },
    /// Sample the guidance field of a scenario's circle on a grid.
    Field {
        /// Scenario file (TOML); only the circle and gains are used.
        scenario: PathBuf,
        /// Grid resolution, e.g. 40x30.
        #[arg(long, default_value = "20x20")]
        grid: String,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Telemetry CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render the trajectories to an SVG file.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Override the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's duration, in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Write the radio trace (one SEND/DROP/DELIVER line per event).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the per-control-tick agent state dump.
    #[arg(long)]
    agents: Option<PathBuf>,
    /// Keep only every Nth telemetry frame (first and last always kept).
    #[arg(long, default_value_t = 1)]
    decimate: usize,
}

enum CliError {
    /// Bad scenario, bad log, bad flag value.
    Validation(String),
    /// The work was sound but an output could not be written.
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(2),
            CliError::Io(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

fn write_output(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(path) => std::fs::write(path, contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::from_path(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(duration_s) = args.duration {
        scenario.duration_s = duration_s;
    }
    scenario
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    if args.decimate == 0 {
        return Err(CliError::Validation(
            "--decimate must be at least 1".into(),
        ));
    }

    let output = run(&scenario).map_err(|e| CliError::Validation(e.to_string()))?;

    write_output(
        args.out.as_deref(),
        &output.log.to_csv_string_decimated(args.decimate),
    )?;
    if let Some(path) = &args.svg {
        let (center, radius) = scenario
            .curve()
            .expect("validated scenario")
            .as_circle()
            .expect("scenario curves are circles");
        write_output(Some(path), &render_trajectories(&output.log, center, radius))?;
    }
    if let Some(path) = &args.trace {
        write_output(Some(path), &output.trace_dump())?;
    }
    if let Some(path) = &args.agents {
        write_output(Some(path), &output.agent_dump)?;
    }

    eprintln!(
        "simulated {} vehicles for {}s: {} frames, radio {}/{}/{} sent/delivered/dropped, sync@0.05rad = {}",
        scenario.vehicles.len(),
        scenario.duration_s,
        output.log.frames.len(),
        output.messages_sent,
        output.messages_delivered,
        output.messages_dropped,
        match sync_time(&output.log, 0.05) {
            Some(t) => format!("{t}s"),
            None => "never".into(),
        }
    );
    Ok(())
}

fn metrics(log_path: &Path, threshold: f64) -> Result<(), CliError> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(CliError::Validation(format!(
            "--threshold must be positive, got {threshold}"
        )));
    }
    let text = std::fs::read_to_string(log_path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", log_path.display())))?;
    let log = TelemetryLog::from_csv_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", log_path.display())))?;

    match sync_time(&log, threshold) {
        Some(t) => println!("sync_time_s={t}"),
        None => println!("sync_time_s=none"),
    }
    match log.final_max_phase_error() {
        Some(z) => println!("final_max_phase_error_rad={z}"),
        None => println!("final_max_phase_error_rad=none"),
    }
    Ok(())
}

fn field(scenario_path: &Path, grid: &str, out: Option<&Path>) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path)?;
    let (w, h) = grid
        .split_once(['x', 'X'])
        .and_then(|(w, h)| Some((w.parse::<usize>().ok()?, h.parse::<usize>().ok()?)))
        .filter(|&(w, h)| w >= 2 && h >= 2)
        .ok_or_else(|| {
            CliError::Validation(format!("--grid must look like 40x30 (at least 2x2), got {grid}"))
        })?;

    let curve = scenario.curve().expect("validated scenario");
    let params = scenario.gvf_params().expect("validated scenario");
    let (center, radius) = curve.as_circle().expect("scenario curves are circles");
    let span = 2.0 * radius;

    let mut csv = String::from("x_m,y_m,e_m2,dir_x,dir_y\n");
    for j in 0..h {
        let y = center.y - span + 2.0 * span * j as f64 / (h - 1) as f64;
        for i in 0..w {
            let x = center.x - span + 2.0 * span * i as f64 / (w - 1) as f64;
            // The field is undefined on the center itself; skip that point.
            if let Ok(sample) = build_field(&curve, &params, Vector2::new(x, y)) {
                let _ = writeln!(
                    csv,
                    "{x},{y},{},{},{}",
                    sample.e, sample.direction.x, sample.direction.y
                );
            }
        }
    }
    write_output(out, &csv)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Metrics { log, threshold } => metrics(log, *threshold),
        Command::Field { scenario, grid, out } => field(scenario, grid, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}
