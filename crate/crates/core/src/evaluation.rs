//! Metrics and the velocity-grid experiment.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion_model::{deskew_scan, normalize_angle, skewed_points, BodyVelocity, Point2, Pose2};
use crate::simulator::{simulate_sweep_from, SensorConfig, WorldModel};
use crate::solver::{estimate_velocity, EstimatorConfig};

/// Time-stamped poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<Pose2>,
}

impl Trajectory {
    pub fn new(stamps: Vec<f64>, poses: Vec<Pose2>) -> Result<Self> {
        if stamps.len() != poses.len() {
            return Err(Error::invalid("trajectory stamps and poses differ in length"));
        }
        if stamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("non-finite trajectory timestamp"));
        }
        if stamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("trajectory timestamps not strictly increasing"));
        }
        Ok(Trajectory { stamps, poses })
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn poses(&self) -> &[Pose2] {
        &self.poses
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &Pose2)> {
        self.stamps.iter().copied().zip(self.poses.iter())
    }

    /// Applies `tf ∘ pose` to every pose.
    pub fn transformed(&self, tf: &Pose2) -> Trajectory {
        Trajectory {
            stamps: self.stamps.clone(),
            poses: self.poses.iter().map(|p| tf.compose(p)).collect(),
        }
    }

    /// Index of the pose closest in time to `t`.
    fn nearest(&self, t: f64) -> Option<usize> {
        if self.stamps.is_empty() {
            return None;
        }
        let k = self.stamps.partition_point(|&s| s < t);
        let mut best = None::<usize>;
        for c in [k.wrapping_sub(1), k] {
            if c < self.stamps.len()
                && best.is_none_or(|b| (self.stamps[c] - t).abs() < (self.stamps[b] - t).abs())
            {
                best = Some(c);
            }
        }
        best
    }
}

pub fn point_rmse(a: &[Point2], b: &[Point2]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "point sets differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("point sets are empty"));
    }
    let sq: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).sum();
    Ok((sq / a.len() as f64).sqrt())
}

/// Pairs of positions `(est, ref)` whose timestamps are nearest neighbours
/// within `tolerance` seconds.
pub fn associate_by_time(est: &Trajectory, reference: &Trajectory, tolerance: f64) -> Vec<(Point2, Point2)> {
    est.iter()
        .filter_map(|(t, p)| {
            let k = reference.nearest(t)?;
            ((reference.stamps[k] - t).abs() <= tolerance)
                .then(|| (p.translation(), reference.poses[k].translation()))
        })
        .collect()
}

pub const DEFAULT_ASSOCIATION_TOLERANCE: f64 = 0.05;

/// Closed-form least-squares rigid transform `T` minimizing
/// `Σ ‖T·p_est - p_ref‖²` over the given pairs.
pub fn rigid_fit(pairs: &[(Point2, Point2)]) -> Result<Pose2> {
    if pairs.len() < 2 {
        return Err(Error::AlignmentFailed(format!(
            "{} associated poses, at least 2 required",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mu_e = pairs.iter().map(|(e, _)| e).sum::<Point2>() / n;
    let mu_r = pairs.iter().map(|(_, r)| r).sum::<Point2>() / n;
    let (mut dot, mut crs) = (0.0, 0.0);
    for (e, r) in pairs {
        let (a, b) = (e - mu_e, r - mu_r);
        dot += a.dot(&b);
        crs += a.x * b.y - a.y * b.x;
    }
    let theta = crs.atan2(dot);
    let rot = crate::motion_model::rotation(theta);
    let t = mu_r - rot * mu_e;
    Ok(Pose2::new(t.x, t.y, theta))
}

/// Rigid alignment of `est` onto `reference` with timestamp association.
pub fn horn_align(est: &Trajectory, reference: &Trajectory) -> Result<Pose2> {
    horn_align_with_tolerance(est, reference, DEFAULT_ASSOCIATION_TOLERANCE)
}

pub fn horn_align_with_tolerance(est: &Trajectory, reference: &Trajectory, tolerance: f64) -> Result<Pose2> {
    rigid_fit(&associate_by_time(est, reference, tolerance))
}

/// Absolute trajectory error: position RMSE after rigid alignment.
pub fn ate(est: &Trajectory, reference: &Trajectory) -> Result<f64> {
    ate_with_tolerance(est, reference, DEFAULT_ASSOCIATION_TOLERANCE)
}

pub fn ate_with_tolerance(est: &Trajectory, reference: &Trajectory, tolerance: f64) -> Result<f64> {
    let pairs = associate_by_time(est, reference, tolerance);
    let tf = rigid_fit(&pairs)?;
    let aligned: Vec<Point2> = pairs.iter().map(|(e, _)| tf.transform_point(e)).collect();
    let refs: Vec<Point2> = pairs.iter().map(|(_, r)| *r).collect();
    point_rmse(&aligned, &refs)
}

/// Settings of the velocity-grid experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub v_set: Vec<f64>,
    pub w_set: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub n_revs: usize,
    /// Draw a random start heading per trial.
    pub randomize_heading: bool,
    pub start: Pose2,
    pub sensor: SensorConfig,
    pub estimator: EstimatorConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        let set = vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        GridConfig {
            v_set: set.clone(),
            w_set: set,
            trials: 20,
            seed: 2024,
            n_revs: 2,
            randomize_heading: true,
            start: Pose2::IDENTITY,
            sensor: SensorConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.v_set.is_empty() || self.w_set.is_empty() {
            return Err(Error::invalid("velocity sets must be non-empty"));
        }
        if self.trials < 2 {
            return Err(Error::invalid("at least 2 trials per cell are required"));
        }
        if self.n_revs == 0 {
            return Err(Error::invalid("n_revs must be positive"));
        }
        self.sensor.validate()?;
        self.estimator.validate()
    }
}

/// Statistics of one `(v, w)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCellResult {
    pub v: f64,
    pub w: f64,
    pub trials: usize,
    pub failures: usize,
    pub v_mean: f64,
    pub v_std: f64,
    pub w_mean: f64,
    pub w_std: f64,
    pub rmse_deskewed: f64,
    pub rmse_skewed: f64,
    /// More than half of the trials failed.
    pub failed: bool,
    #[serde(skip)]
    pub elapsed_secs: f64,
}

/// One simulated-and-estimated trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub estimate: BodyVelocity,
    pub rmse_deskewed: f64,
    pub rmse_skewed: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of a trial, a pure function of the grid seed and the (cell, trial) key.
pub fn trial_seed(seed: u64, cell: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(seed ^ ((cell as u64) << 32)) ^ trial as u64)
}

/// Simulates one window, estimates its velocity from zero and scores the de-skew.
pub fn run_trial(
    world: &WorldModel,
    vel: BodyVelocity,
    start: Pose2,
    sensor: &SensorConfig,
    n_revs: usize,
    estimator: &EstimatorConfig,
    seed: u64,
) -> Result<TrialResult> {
    let gt = simulate_sweep_from(world, start, vel, sensor, n_revs, seed)?;
    let report = estimate_velocity(&gt.scan, BodyVelocity::ZERO, estimator)?;
    let deskewed = deskew_scan(&gt.scan, report.velocity)?;
    Ok(TrialResult {
        estimate: report.velocity,
        rmse_deskewed: point_rmse(&deskewed, &gt.true_endpoints)?,
        rmse_skewed: point_rmse(&skewed_points(&gt.scan), &gt.true_endpoints)?,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_cell(world: &WorldModel, cfg: &GridConfig, cell: usize, v: f64, w: f64) -> GridCellResult {
    let started = Instant::now();
    let outcomes: Vec<Option<TrialResult>> = (0..cfg.trials)
        .map(|trial| {
            let seed = trial_seed(cfg.seed, cell, trial);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let heading = if cfg.randomize_heading {
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
            } else {
                0.0
            };
            let start = Pose2::new(cfg.start.x, cfg.start.y, normalize_angle(cfg.start.theta + heading));
            let vel = BodyVelocity::with_limits(v, w, &cfg.estimator.solver.limits).ok()?;
            run_trial(world, vel, start, &cfg.sensor, cfg.n_revs, &cfg.estimator, rng.random()).ok()
        })
        .collect();
    let ok: Vec<TrialResult> = outcomes.iter().flatten().copied().collect();
    let failures = cfg.trials - ok.len();
    let (v_mean, v_std) = mean_std(&ok.iter().map(|r| r.estimate.v).collect::<Vec<_>>());
    let (w_mean, w_std) = mean_std(&ok.iter().map(|r| r.estimate.w).collect::<Vec<_>>());
    let (rmse_deskewed, _) = mean_std(&ok.iter().map(|r| r.rmse_deskewed).collect::<Vec<_>>());
    let (rmse_skewed, _) = mean_std(&ok.iter().map(|r| r.rmse_skewed).collect::<Vec<_>>());
    GridCellResult {
        v,
        w,
        trials: cfg.trials,
        failures,
        v_mean,
        v_std,
        w_mean,
        w_std,
        rmse_deskewed,
        rmse_skewed,
        failed: 2 * failures > cfg.trials,
        elapsed_secs: started.elapsed().as_secs_f64(),
    }
}

/// Results of the grid, row-major with rows over `w` and columns over `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub v_set: Vec<f64>,
    pub w_set: Vec<f64>,
    pub cells: Vec<GridCellResult>,
}

pub fn run_velocity_grid(world: &WorldModel, cfg: &GridConfig) -> Result<GridTable> {
    cfg.validate()?;
    let keys: Vec<(usize, f64, f64)> = cfg
        .w_set
        .iter()
        .flat_map(|&w| cfg.v_set.iter().map(move |&v| (v, w)))
        .enumerate()
        .map(|(k, (v, w))| (k, v, w))
        .collect();
    // collect() on an indexed parallel iterator keeps key order
    let cells = keys
        .par_iter()
        .map(|&(k, v, w)| run_cell(world, cfg, k, v, w))
        .collect();
    Ok(GridTable {
        v_set: cfg.v_set.clone(),
        w_set: cfg.w_set.clone(),
        cells,
    })
}

impl GridTable {
    pub fn cell(&self, v: f64, w: f64) -> Option<&GridCellResult> {
        self.cells.iter().find(|c| c.v == v && c.w == w)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.failed).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,w,v_mean,v_std,w_mean,w_std,rmse_deskewed,rmse_skewed,failures\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:.3},{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                c.v, c.w, c.v_mean, c.v_std, c.w_mean, c.w_std, c.rmse_deskewed, c.rmse_skewed, c.failures
            );
        }
        out
    }

    /// Three lines per row of `w`: estimated `v`, estimated `w`, and
    /// de-skewed/skewed RMSE, one column per commanded `v`.
    pub fn to_text_table(&self) -> String {
        const WIDTH: usize = 15;
        let mut out = String::new();
        let _ = write!(out, "{:>10} ||", "w \\ v");
        for v in &self.v_set {
            let _ = write!(out, " {:>w$} |", format!("{v:.3}"), w = WIDTH);
        }
        out.push('\n');
        let rule = "=".repeat(12 + self.v_set.len() * (WIDTH + 3));
        let _ = writeln!(out, "{rule}");
        for (r, w) in self.w_set.iter().enumerate() {
            let row = &self.cells[r * self.v_set.len()..(r + 1) * self.v_set.len()];
            let lines: [fn(&GridCellResult) -> String; 3] = [
                |c| format!("{:.3}±{:.3}", c.v_mean, c.v_std),
                |c| format!("{:.3}±{:.3}", c.w_mean, c.w_std),
                |c| format!("{:.3}/{:.3}", c.rmse_deskewed, c.rmse_skewed),
            ];
            for (k, line) in lines.iter().enumerate() {
                let label = if k == 0 { format!("{w:.3}") } else { String::new() };
                let _ = write!(out, "{label:>10} ||");
                for c in row {
                    let text = if c.failed { "FAILED".to_string() } else { line(c) };
                    let _ = write!(out, " {:>w$} |", text, w = WIDTH);
                }
                out.push('\n');
            }
            let _ = writeln!(out, "{}", "-".repeat(rule.chars().count()));
        }
        out
    }
}
