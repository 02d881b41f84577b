//! Command-line front end.
//!
//! Every command records its fully resolved options in a manifest so that
//! `rerun --manifest FILE` reproduces the outputs. Exit codes: 0 success,
//! 1 usage, parse or I/O errors, 2 estimation or simulation failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{ate_with_tolerance, point_rmse, run_velocity_grid, GridConfig, DEFAULT_ASSOCIATION_TOLERANCE};
use crate::io::{
    format_points_csv, format_scan_csv, parse_points_csv, parse_scan_csv, parse_trajectory_csv, read_text,
    write_text, RunManifest,
};
use crate::motion_model::{deskew_scan, BodyVelocity, Pose2, RangeLimits, SweepScan};
use crate::render::{render_svg, Layer};
use crate::simulator::{simulate_sweep_from, SensorConfig, WorldModel};
use crate::solver::{estimate_velocity, EstimateReport, EstimatorConfig, StreamEstimator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;

const BUILTIN_WORLD: &str = "builtin:room";

#[derive(Debug, Parser)]
#[command(name = "lidar-deskew", version, about = "Velocity estimation and de-skewing for slow planar LiDARs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a sweep in a polygon world.
    Simulate(SimulateArgs),
    /// Estimate the sensor velocity from a scan.
    Estimate(EstimateArgs),
    /// Re-project a scan into the sweep-start frame.
    Deskew(DeskewArgs),
    /// Point RMSE or trajectory ATE.
    Eval(EvalArgs),
    /// Run the velocity grid experiment.
    Grid(GridArgs),
    /// Overlay point sets in an SVG figure.
    Render(RenderArgs),
    /// Run a command again from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// World JSON; the bundled room when omitted.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub v: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub w: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub revs: usize,
    #[arg(long, default_value_t = 10.0)]
    pub sweep_hz: f64,
    #[arg(long, default_value_t = 360)]
    pub beams: usize,
    /// Range noise standard deviation, m.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub start_x: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub start_y: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub start_theta: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ScanInput {
    /// Scan CSV (`t,angle,range`).
    #[arg(long)]
    pub scan: PathBuf,
    /// Estimator configuration JSON; defaults for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = RangeLimits::default().min_range)]
    pub min_range: f64,
    #[arg(long, default_value_t = RangeLimits::default().max_range)]
    pub max_range: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: ScanInput,
    /// Initial forward velocity.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub v0: f64,
    /// Initial yaw rate.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub w0: f64,
    /// Estimate over sliding two-revolution windows.
    #[arg(long)]
    pub stream: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DeskewArgs {
    #[command(flatten)]
    pub input: ScanInput,
    #[arg(long, allow_negative_numbers = true, requires = "w", conflicts_with = "auto")]
    pub v: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires = "v", conflicts_with = "auto")]
    pub w: Option<f64>,
    /// Estimate the velocity first.
    #[arg(long, required_unless_present = "v")]
    pub auto: bool,
    /// Output points CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Points CSV compared index by index with `--b`.
    #[arg(long, requires = "b", conflicts_with_all = ["est", "reference"])]
    pub a: Option<PathBuf>,
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Estimated trajectory CSV.
    #[arg(long, requires = "reference", required_unless_present = "a")]
    pub est: Option<PathBuf>,
    /// Reference trajectory CSV.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Timestamp association tolerance, s.
    #[arg(long, default_value_t = DEFAULT_ASSOCIATION_TOLERANCE)]
    pub tolerance: f64,
    /// Output metrics JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Grid configuration JSON; defaults for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    /// Points CSV files, one layer each (at most 4).
    #[arg(required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Layer labels in input order; file stems by default.
    #[arg(long = "label")]
    pub labels: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_domain_failure() {
        EXIT_DOMAIN
    } else {
        EXIT_USAGE
    }
}

pub fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Simulate(a) => simulate(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Deskew(a) => deskew(&a),
        Command::Eval(a) => eval(&a),
        Command::Grid(a) => grid(&a),
        Command::Render(a) => render(&a),
        Command::Rerun(a) => rerun(&a),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn manifest_for<A: Serialize>(command: &str, args: &A) -> RunManifest {
    RunManifest::new(command, serde_json::to_value(args).expect("options serialize"))
}

/// Manifest location for commands whose output is a single file.
fn sidecar_manifest(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string()))
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn load_world(path: Option<&Path>) -> Result<(WorldModel, String)> {
    match path {
        Some(p) => Ok((WorldModel::from_json(&read_text(p)?, &path_str(p))?, path_str(p))),
        None => Ok((WorldModel::default_room(), BUILTIN_WORLD.to_string())),
    }
}

fn load_scan(input: &ScanInput) -> Result<(SweepScan, EstimatorConfig)> {
    let limits = RangeLimits {
        min_range: input.min_range,
        max_range: input.max_range,
    };
    let scan = parse_scan_csv(&read_text(&input.scan)?, &path_str(&input.scan), &limits)?;
    let cfg: EstimatorConfig = match &input.config {
        Some(p) => load_json(p)?,
        None => EstimatorConfig::default(),
    };
    cfg.validate()?;
    Ok((scan, cfg))
}

fn scan_inputs(input: &ScanInput) -> Vec<String> {
    std::iter::once(&input.scan).chain(&input.config).map(|p| path_str(p)).collect()
}

fn simulate(a: &SimulateArgs) -> Result<i32> {
    let (world, world_name) = load_world(a.world.as_deref())?;
    let vel = BodyVelocity::new(a.v, a.w)?;
    let sensor = SensorConfig {
        sweep_hz: a.sweep_hz,
        beams_per_rev: a.beams,
        range_noise_sigma: a.noise,
        ..SensorConfig::default()
    };
    let start = Pose2::new(a.start_x, a.start_y, a.start_theta);
    let gt = simulate_sweep_from(&world, start, vel, &sensor, a.revs, a.seed)?;

    let scan_path = a.out.join("scan.csv");
    let truth_path = a.out.join("truth.csv");
    let manifest_path = a.out.join("manifest.json");
    write_text(&scan_path, &format_scan_csv(&gt.scan))?;
    write_text(&truth_path, &format_points_csv(&gt.true_endpoints))?;

    let mut m = manifest_for("simulate", a);
    m.seed = Some(a.seed);
    m.inputs = vec![world_name];
    m.outputs = vec![path_str(&scan_path), path_str(&truth_path)];
    write_text(&manifest_path, &m.to_json())?;
    println!(
        "simulated {} beams over {} revolutions -> {}",
        gt.scan.len(),
        a.revs,
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn print_report(prefix: &str, r: &EstimateReport) {
    println!(
        "{prefix}v = {:.6} w = {:.6} (std {:.4}, {:.4}; rounds {}; correspondences {})",
        r.velocity.v, r.velocity.w, r.velocity_std[0], r.velocity_std[1], r.rounds, r.correspondence_count
    );
}

fn estimate(a: &EstimateArgs) -> Result<i32> {
    let (scan, cfg) = load_scan(&a.input)?;
    if scan.revolutions() < 1 {
        return Err(Error::invalid("the scan does not cover a full revolution"));
    }
    let x0 = BodyVelocity::with_limits(a.v0, a.w0, &cfg.solver.limits)?;
    let report_path = a.out.join("estimate.json");
    let mut m = manifest_for("estimate", a);
    m.inputs = scan_inputs(&a.input);
    m.outputs = vec![path_str(&report_path)];

    let degenerate = if a.stream {
        let mut est = StreamEstimator::with_initial(cfg, x0);
        let windows = est.run(&scan)?;
        for w in &windows {
            print_report(&format!("[{:.3}, {:.3}] ", w.start, w.end), &w.report);
        }
        write_text(&report_path, &to_json(&windows))?;
        windows.iter().map(|w| &w.report).find(|r| r.degenerate).cloned()
    } else {
        let report = estimate_velocity(&scan, x0, &cfg)?;
        print_report("", &report);
        write_text(&report_path, &to_json(&report))?;
        Some(report).filter(|r| r.degenerate)
    };
    write_text(&a.out.join("manifest.json"), &m.to_json())?;
    match degenerate {
        Some(r) => Err(r.require_observable().unwrap_err()),
        None => Ok(EXIT_OK),
    }
}

fn deskew(a: &DeskewArgs) -> Result<i32> {
    let (scan, cfg) = load_scan(&a.input)?;
    let mut m = manifest_for("deskew", a);
    m.inputs = scan_inputs(&a.input);
    m.outputs = vec![path_str(&a.out)];
    let vel = match (a.v, a.w) {
        (Some(v), Some(w)) => BodyVelocity::with_limits(v, w, &cfg.solver.limits)?,
        _ => {
            let report = estimate_velocity(&scan, BodyVelocity::ZERO, &cfg)?;
            print_report("estimated ", &report);
            report.require_observable()?;
            m.results = serde_json::json!({ "estimate": report.velocity, "velocity_std": report.velocity_std });
            report.velocity
        }
    };
    let points = deskew_scan(&scan, vel)?;
    write_text(&a.out, &format_points_csv(&points))?;
    write_text(&sidecar_manifest(&a.out), &m.to_json())?;
    println!("de-skewed {} points with v = {:.6} w = {:.6}", points.len(), vel.v, vel.w);
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct Metrics {
    metric: &'static str,
    value: f64,
    count: usize,
}

fn eval(a: &EvalArgs) -> Result<i32> {
    let mut m = manifest_for("eval", a);
    let metrics = match (&a.a, &a.b, &a.est, &a.reference) {
        (Some(pa), Some(pb), _, _) => {
            let x = parse_points_csv(&read_text(pa)?, &path_str(pa))?;
            let y = parse_points_csv(&read_text(pb)?, &path_str(pb))?;
            m.inputs = vec![path_str(pa), path_str(pb)];
            Metrics {
                metric: "rmse",
                value: point_rmse(&x, &y)?,
                count: x.len(),
            }
        }
        (_, _, Some(pe), Some(pr)) => {
            let est = parse_trajectory_csv(&read_text(pe)?, &path_str(pe))?;
            let reference = parse_trajectory_csv(&read_text(pr)?, &path_str(pr))?;
            m.inputs = vec![path_str(pe), path_str(pr)];
            Metrics {
                metric: "ate",
                value: ate_with_tolerance(&est, &reference, a.tolerance)?,
                count: est.len(),
            }
        }
        _ => return Err(Error::invalid("give either --a/--b or --est/--ref")),
    };
    m.outputs = vec![path_str(&a.out)];
    write_text(&a.out, &to_json(&metrics))?;
    write_text(&sidecar_manifest(&a.out), &m.to_json())?;
    println!("{} = {:.6}", metrics.metric, metrics.value);
    Ok(EXIT_OK)
}

fn grid(a: &GridArgs) -> Result<i32> {
    let mut cfg: GridConfig = match &a.config {
        Some(p) => load_json(p)?,
        None => GridConfig::default(),
    };
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let (world, world_name) = load_world(a.world.as_deref())?;

    let start = Instant::now();
    let table = run_velocity_grid(&world, &cfg)?;
    for c in &table.cells {
        println!(
            "v = {:5.2} w = {:5.2}: {:7.1} ms{}",
            c.v,
            c.w,
            1e3 * c.elapsed_secs,
            if c.failed { "  FAILED" } else { "" }
        );
    }
    println!("total {:.2} s", start.elapsed().as_secs_f64());
    print!("{}", table.to_text_table());

    let csv = a.out.join("grid.csv");
    let txt = a.out.join("grid.txt");
    write_text(&csv, &table.to_csv())?;
    write_text(&txt, &table.to_text_table())?;
    let mut m = manifest_for("grid", a);
    m.seed = Some(cfg.seed);
    m.inputs = std::iter::once(world_name).chain(a.config.iter().map(|p| path_str(p))).collect();
    m.outputs = vec![path_str(&csv), path_str(&txt)];
    m.results = serde_json::json!({ "config": cfg, "failed_cells": table.failed_cells() });
    write_text(&a.out.join("manifest.json"), &m.to_json())?;

    let total = table.cells.len();
    let ok = total - table.failed_cells();
    if 10 * ok >= 9 * total {
        Ok(EXIT_OK)
    } else {
        Err(Error::EstimationFailed(format!("only {ok} of {total} grid cells succeeded")))
    }
}

fn render(a: &RenderArgs) -> Result<i32> {
    if a.labels.len() > a.inputs.len() {
        return Err(Error::invalid("more labels than inputs"));
    }
    let layers = a
        .inputs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let label = a.labels.get(k).cloned().unwrap_or_else(|| {
                p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            Ok(Layer::new(label, parse_points_csv(&read_text(p)?, &path_str(p))?))
        })
        .collect::<Result<Vec<_>>>()?;
    let svg = render_svg(&layers)?;
    write_text(&a.out, &svg)?;
    let mut m = manifest_for("render", a);
    m.inputs = a.inputs.iter().map(|p| path_str(p)).collect();
    m.outputs = vec![path_str(&a.out)];
    write_text(&sidecar_manifest(&a.out), &m.to_json())?;
    println!("wrote {}", a.out.display());
    Ok(EXIT_OK)
}

fn parameters<T: DeserializeOwned>(m: &RunManifest, source: &str) -> Result<T> {
    serde_json::from_value(m.parameters.clone())
        .map_err(|e| Error::parse(source, format!("manifest parameters: {e}")))
}

fn rerun(a: &RerunArgs) -> Result<i32> {
    let source = path_str(&a.manifest);
    let m = RunManifest::from_json(&read_text(&a.manifest)?, &source)?;
    let command = match m.command.as_str() {
        "simulate" => Command::Simulate(parameters(&m, &source)?),
        "estimate" => Command::Estimate(parameters(&m, &source)?),
        "deskew" => Command::Deskew(parameters(&m, &source)?),
        "eval" => Command::Eval(parameters(&m, &source)?),
        "grid" => Command::Grid(parameters(&m, &source)?),
        "render" => Command::Render(parameters(&m, &source)?),
        other => return Err(Error::parse(source, format!("cannot rerun command `{other}`"))),
    };
    execute(command)
}
