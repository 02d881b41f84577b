//! Synthetic skewed sweeps from a polygonal world.
//!
//! Beam `i` of a sweep fires at `t_i = i / (beams_per_rev · sweep_hz)` with
//! beam angle `2π i / beams_per_rev` (counter-clockwise), from the pose the
//! robot reaches by integrating its constant velocity up to `t_i`. Ranges
//! come from exact ray casting plus Gaussian range noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::motion_model::{
    arc_pose, endpoint, wrap_beam_angle, BodyVelocity, Point2, Pose2, RangeLimits, RayMeasurement,
    SweepScan,
};

pub const WORLD_FORMAT_VERSION: u32 = 1;

const DEFAULT_ROOM: &str = include_str!("../worlds/room.json");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Ray parameter of the intersection with `origin + t·dir`, if any.
    pub fn intersect_ray(&self, origin: &Point2, dir: &Point2) -> Option<f64> {
        let e = self.b - self.a;
        let denom = cross(dir, &e);
        if denom.abs() < 1e-15 {
            return None;
        }
        let ao = self.a - origin;
        let t = cross(&ao, &e) / denom;
        let s = cross(&ao, dir) / denom;
        (t > 1e-12 && (0.0..=1.0).contains(&s)).then_some(t)
    }
}

fn cross(a: &Point2, b: &Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Set of segments in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WorldFile {
    version: u32,
    segments: Vec<[[f64; 2]; 2]>,
}

impl WorldModel {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("world has no segments"));
        }
        for (k, s) in segments.iter().enumerate() {
            if !(s.a.iter().chain(s.b.iter()).all(|c| c.is_finite())) {
                return Err(Error::invalid(format!("segment {k} has non-finite coordinates")));
            }
            if s.length() <= 0.0 {
                return Err(Error::invalid(format!("segment {k} has zero length")));
            }
        }
        Ok(WorldModel { segments })
    }

    /// The shipped 10 m × 8 m room with two interior obstacles.
    pub fn default_room() -> Self {
        Self::from_json(DEFAULT_ROOM, "worlds/room.json").expect("bundled world is valid")
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| {
            Error::parse(format!("{source}:{}:{}", e.line(), e.column()), e.to_string())
        })?;
        if file.version != WORLD_FORMAT_VERSION {
            return Err(Error::parse(
                source,
                format!("unsupported world version {}, expected {WORLD_FORMAT_VERSION}", file.version),
            ));
        }
        let segments = file
            .segments
            .iter()
            .map(|[a, b]| Segment::new(Point2::new(a[0], a[1]), Point2::new(b[0], b[1])))
            .collect();
        WorldModel::new(segments).map_err(|e| Error::parse(source, e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let file = WorldFile {
            version: WORLD_FORMAT_VERSION,
            segments: self
                .segments
                .iter()
                .map(|s| [[s.a.x, s.a.y], [s.b.x, s.b.y]])
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("world serializes")
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Axis-aligned bounds `(min, max)` of all segment endpoints.
    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = Point2::repeat(f64::INFINITY);
        let mut hi = Point2::repeat(f64::NEG_INFINITY);
        for s in &self.segments {
            for p in [s.a, s.b] {
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
        (lo, hi)
    }

    pub fn contains(&self, p: &Point2) -> bool {
        let (lo, hi) = self.bounds();
        p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y
    }

    /// Applies a rigid transform to every segment.
    pub fn transformed(&self, pose: &Pose2) -> WorldModel {
        WorldModel {
            segments: self
                .segments
                .iter()
                .map(|s| Segment::new(pose.transform_point(&s.a), pose.transform_point(&s.b)))
                .collect(),
        }
    }

    pub fn raycast(&self, origin: &Point2, direction: f64, max_range: f64) -> Option<f64> {
        raycast(self, origin, direction, max_range)
    }
}

/// Distance to the first segment hit along `direction`, or `None` when
/// nothing is hit within `max_range`.
pub fn raycast(world: &WorldModel, origin: &Point2, direction: f64, max_range: f64) -> Option<f64> {
    if !direction.is_finite() {
        return None;
    }
    let (s, c) = direction.sin_cos();
    let dir = Point2::new(c, s);
    world
        .segments
        .iter()
        .filter_map(|seg| seg.intersect_ray(origin, &dir))
        .filter(|&t| t <= max_range)
        .min_by(f64::total_cmp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// Revolutions per second.
    pub sweep_hz: f64,
    pub beams_per_rev: usize,
    /// Standard deviation of additive range noise, m.
    pub range_noise_sigma: f64,
    pub range_limits: RangeLimits,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            sweep_hz: 10.0,
            beams_per_rev: 360,
            range_noise_sigma: 0.01,
            range_limits: RangeLimits::default(),
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sweep_hz > 0.0 && self.sweep_hz.is_finite()) {
            return Err(Error::invalid("sweep_hz must be positive"));
        }
        if self.beams_per_rev < 8 {
            return Err(Error::invalid("beams_per_rev must be at least 8"));
        }
        if !(self.range_noise_sigma >= 0.0 && self.range_noise_sigma.is_finite()) {
            return Err(Error::invalid("range noise sigma must be non-negative"));
        }
        let l = self.range_limits;
        if !(l.min_range >= 0.0 && l.min_range < l.max_range && l.max_range.is_finite()) {
            return Err(Error::invalid("invalid sensor range limits"));
        }
        Ok(())
    }

    pub fn beam_period(&self) -> f64 {
        1.0 / (self.beams_per_rev as f64 * self.sweep_hz)
    }
}

/// A simulated scan with everything needed to score it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBundle {
    pub scan: SweepScan,
    pub true_velocity: BodyVelocity,
    /// Noiseless endpoints in the sweep-start frame, one per returned beam.
    pub true_endpoints: Vec<Point2>,
    /// World-frame pose at every returned beam.
    pub true_poses: Trajectory,
    /// Index of each returned beam among all fired beams.
    pub beam_indices: Vec<usize>,
}

/// Simulates `n_revs` revolutions starting at the world origin.
pub fn simulate_sweep(
    world: &WorldModel,
    vel: BodyVelocity,
    sensor: &SensorConfig,
    n_revs: usize,
    seed: u64,
) -> Result<GroundTruthBundle> {
    simulate_sweep_from(world, Pose2::IDENTITY, vel, sensor, n_revs, seed)
}

pub fn simulate_sweep_from(
    world: &WorldModel,
    start: Pose2,
    vel: BodyVelocity,
    sensor: &SensorConfig,
    n_revs: usize,
    seed: u64,
) -> Result<GroundTruthBundle> {
    sensor.validate()?;
    if n_revs == 0 {
        return Err(Error::invalid("n_revs must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sensor.range_noise_sigma)
        .map_err(|e| Error::invalid(format!("range noise: {e}")))?;
    let n = sensor.beams_per_rev;
    let period = sensor.beam_period();
    let limits = sensor.range_limits;

    let mut measurements = Vec::with_capacity(n * n_revs);
    let mut true_endpoints = Vec::with_capacity(n * n_revs);
    let mut stamps = Vec::with_capacity(n * n_revs);
    let mut poses = Vec::with_capacity(n * n_revs);
    let mut beam_indices = Vec::with_capacity(n * n_revs);

    for i in 0..n * n_revs {
        let t = i as f64 * period;
        let rel = arc_pose(vel.v, vel.w, t);
        let pose = start.compose(&rel);
        if !world.contains(&pose.translation()) {
            return Err(Error::SimulationDomain(format!(
                "robot leaves the world bounds at t = {t:.4} s (position {:.3}, {:.3})",
                pose.x, pose.y
            )));
        }
        let alpha = wrap_beam_angle(2.0 * std::f64::consts::PI * (i % n) as f64 / n as f64);
        let Some(range) = world.raycast(&pose.translation(), pose.theta + alpha, limits.max_range) else {
            continue;
        };
        let recorded = if sensor.range_noise_sigma > 0.0 {
            range + noise.sample(&mut rng)
        } else {
            range
        };
        if !limits.contains(recorded) || !limits.contains(range) {
            continue;
        }
        let truth = RayMeasurement {
            range,
            beam_angle: alpha,
            timestamp: t,
        };
        measurements.push(RayMeasurement {
            range: recorded,
            ..truth
        });
        true_endpoints.push(endpoint(vel, &truth, 0.0));
        stamps.push(t);
        poses.push(pose);
        beam_indices.push(i);
    }

    Ok(GroundTruthBundle {
        scan: SweepScan::new(measurements, 0.0)?,
        true_velocity: vel,
        true_endpoints,
        true_poses: Trajectory::new(stamps, poses)?,
        beam_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_model::{deskew_scan, skewed_points};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn square(half: f64) -> WorldModel {
        let c = [(-half, -half), (half, -half), (half, half), (-half, half)];
        let segs = (0..4)
            .map(|k| {
                let (a, b) = (c[k], c[(k + 1) % 4]);
                Segment::new(Point2::new(a.0, a.1), Point2::new(b.0, b.1))
            })
            .collect();
        WorldModel::new(segs).unwrap()
    }

    #[test]
    fn raycast_examples() {
        let w = square(2.0);
        let o = Point2::zeros();
        assert_abs_diff_eq!(w.raycast(&o, 0.0, 30.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.raycast(&o, PI / 4.0, 30.0).unwrap(), 2.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert!(w.raycast(&Point2::new(5.0, 0.0), 0.0, 30.0).is_none());
        assert!(w.raycast(&o, 0.0, 1.5).is_none());
    }

    #[test]
    fn zero_length_segment_rejected() {
        let p = Point2::new(1.0, 1.0);
        assert!(WorldModel::new(vec![Segment::new(p, p)]).is_err());
    }

    #[test]
    fn world_json_round_trip() {
        let w = WorldModel::default_room();
        let back = WorldModel::from_json(&w.to_json(), "mem").unwrap();
        assert_eq!(w, back);
        let err = WorldModel::from_json("{\"version\": 2, \"segments\": []}", "x.json").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = WorldModel::from_json("{\"version\": 1,\n \"segments\": [[[0,0],[1,", "y.json").unwrap_err();
        assert!(err.to_string().contains("y.json:2"));
    }

    #[test]
    fn static_sweep_is_polar_scan() {
        let world = WorldModel::default_room();
        let sensor = SensorConfig::default();
        let gt = simulate_sweep(&world, BodyVelocity::ZERO, &sensor, 1, 3).unwrap();
        assert_eq!(gt.scan.len(), 360);
        for (z, p) in gt.scan.measurements().iter().zip(&gt.true_endpoints) {
            let q = z.local_point();
            assert!((q - p).norm() < 0.06);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let world = WorldModel::default_room();
        let sensor = SensorConfig::default();
        let vel = BodyVelocity::new(0.5, 0.5).unwrap();
        let a = simulate_sweep(&world, vel, &sensor, 2, 11).unwrap();
        let b = simulate_sweep(&world, vel, &sensor, 2, 11).unwrap();
        let c = simulate_sweep(&world, vel, &sensor, 2, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.scan, c.scan);
    }

    #[test]
    fn noiseless_deskew_recovers_truth() {
        let world = WorldModel::default_room();
        let sensor = SensorConfig {
            range_noise_sigma: 0.0,
            ..Default::default()
        };
        for (v, w) in [(0.5, 0.5), (-2.0, 2.0), (0.0, 3.0), (1.0, -1e-6)] {
            let vel = BodyVelocity::new(v, w).unwrap();
            let gt = simulate_sweep(&world, vel, &sensor, 2, 0).unwrap();
            let pts = deskew_scan(&gt.scan, vel).unwrap();
            for (p, q) in pts.iter().zip(&gt.true_endpoints) {
                assert!((p - q).norm() < 1e-9);
            }
            assert_eq!(gt.beam_indices.len(), gt.scan.len());
            let skewed = skewed_points(&gt.scan);
            assert_eq!(skewed.len(), gt.true_endpoints.len());
        }
    }

    #[test]
    fn leaving_the_world_is_an_error() {
        let world = square(1.0);
        let vel = BodyVelocity::new(10.0, 0.0).unwrap();
        let err = simulate_sweep(&world, vel, &SensorConfig::default(), 2, 0).unwrap_err();
        assert!(matches!(err, Error::SimulationDomain(_)));
    }

    #[test]
    fn sensor_validation() {
        let bad = SensorConfig {
            beams_per_rev: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SensorConfig {
            sweep_hz: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
