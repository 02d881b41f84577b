//! Text formats: scan, point and trajectory CSV files and run manifests.
//!
//! All writers use fixed decimal formatting so the same data always produces
//! the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::motion_model::{wrap_beam_angle, Point2, Pose2, RangeLimits, RayMeasurement, SweepScan};

pub const SCAN_HEADER: &str = "t,angle,range";
pub const POINTS_HEADER: &str = "x,y";
pub const TRAJECTORY_HEADER: &str = "t,x,y,theta";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Reads a numeric CSV body after checking the header; rows carry their line numbers.
fn parse_rows<const N: usize>(text: &str, header: &str, source: &str) -> Result<Vec<(usize, [f64; N])>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| Error::parse(format!("{source}:1"), e.to_string()))?;
    if found.is_empty() || (found.len() == 1 && found[0].is_empty()) {
        return Err(Error::parse(source, "empty file"));
    }
    let found = found.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(Error::parse(
            format!("{source}:1"),
            format!("expected header `{header}`, found `{found}`"),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("{source}:{line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line()) as usize;
        let loc = || format!("{source}:{line}");
        if record.len() != N {
            return Err(Error::parse(loc(), format!("expected {N} fields, found {}", record.len())));
        }
        let mut row = [0.0; N];
        for (slot, field) in row.iter_mut().zip(record.iter()) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(loc(), format!("invalid number `{field}`")))?;
        }
        rows.push((line, row));
    }
    Ok(rows)
}

pub fn parse_scan_csv(text: &str, source: &str, limits: &RangeLimits) -> Result<SweepScan> {
    let rows = parse_rows::<3>(text, SCAN_HEADER, source)?;
    let mut measurements = Vec::with_capacity(rows.len());
    let mut previous: Option<f64> = None;
    for (line, [t, angle, range]) in rows {
        let loc = format!("{source}:{line}");
        if previous.is_some_and(|p| t <= p) {
            return Err(Error::parse(loc, "timestamps must be strictly increasing"));
        }
        previous = Some(t);
        let m = RayMeasurement::with_limits(range, wrap_beam_angle(angle), t, limits)
            .map_err(|e| Error::parse(loc, e.to_string()))?;
        measurements.push(m);
    }
    SweepScan::from_measurements(measurements)
}

pub fn format_scan_csv(scan: &SweepScan) -> String {
    let mut out = format!("{SCAN_HEADER}\n");
    for m in scan.measurements() {
        let _ = writeln!(out, "{:.9},{:.9},{:.9}", m.timestamp, m.beam_angle, m.range);
    }
    out
}

pub fn parse_points_csv(text: &str, source: &str) -> Result<Vec<Point2>> {
    Ok(parse_rows::<2>(text, POINTS_HEADER, source)?
        .into_iter()
        .map(|(_, [x, y])| Point2::new(x, y))
        .collect())
}

pub fn format_points_csv(points: &[Point2]) -> String {
    let mut out = format!("{POINTS_HEADER}\n");
    for p in points {
        let _ = writeln!(out, "{:.9},{:.9}", p.x, p.y);
    }
    out
}

pub fn parse_trajectory_csv(text: &str, source: &str) -> Result<Trajectory> {
    let rows = parse_rows::<4>(text, TRAJECTORY_HEADER, source)?;
    for pair in rows.windows(2) {
        if pair[1].1[0] <= pair[0].1[0] {
            return Err(Error::parse(
                format!("{source}:{}", pair[1].0),
                "timestamps must be strictly increasing",
            ));
        }
    }
    let (stamps, poses) = rows
        .into_iter()
        .map(|(_, [t, x, y, th])| (t, Pose2::new(x, y, th)))
        .unzip();
    Trajectory::new(stamps, poses)
}

pub fn format_trajectory_csv(traj: &Trajectory) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for (t, p) in traj.iter() {
        let _ = writeln!(out, "{:.9},{:.9},{:.9},{:.9}", t, p.x, p.y, p.theta);
    }
    out
}

/// Record of a command invocation, sufficient to re-run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Fully resolved command options; enough to run the command again.
    pub parameters: serde_json::Value,
    /// Values computed during the run that later steps depend on.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            parameters,
            results: serde_json::Value::Null,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("{source}:{}:{}", e.line(), e.column()), e.to_string()))?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::parse(
                source,
                format!("unsupported manifest version {}", m.format_version),
            ));
        }
        Ok(m)
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}
