//! Constant-velocity unicycle kinematics, beam endpoint reconstruction and
//! the de-skew transform.
//!
//! Under a constant body velocity `(v, w)` the base follows a circular arc.
//! Integrating from the origin for a time `dt` gives, with `l = v dt` and
//! `θ = w dt`,
//!
//! ```text
//! x = l sin(θ)/θ,    y = l (1 - cos(θ))/θ,    heading = θ
//! ```
//!
//! Both ratios are replaced by their Taylor series when `|θ|` drops below
//! [`SMALL_ANGLE`], which keeps the straight-line limit exact.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2 = Vector2<f64>;

/// Below this heading change the arc ratios switch to their series expansion.
pub const SMALL_ANGLE: f64 = 1e-4;

/// Sanity bounds applied when a [`BodyVelocity`] is constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VelocityLimits {
    pub max_v: f64,
    pub max_w: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        VelocityLimits {
            max_v: 10.0,
            max_w: 10.0,
        }
    }
}

/// Translational (m/s) and angular (rad/s) velocity of the base.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub v: f64,
    pub w: f64,
}

impl BodyVelocity {
    pub const ZERO: BodyVelocity = BodyVelocity { v: 0.0, w: 0.0 };

    pub fn new(v: f64, w: f64) -> Result<Self> {
        Self::with_limits(v, w, &VelocityLimits::default())
    }

    pub fn with_limits(v: f64, w: f64, limits: &VelocityLimits) -> Result<Self> {
        if !v.is_finite() || !w.is_finite() {
            return Err(Error::invalid(format!("non-finite velocity ({v}, {w})")));
        }
        if v.abs() > limits.max_v || w.abs() > limits.max_w {
            return Err(Error::invalid(format!(
                "velocity ({v}, {w}) outside sanity limits (|v| <= {}, |w| <= {})",
                limits.max_v, limits.max_w
            )));
        }
        Ok(BodyVelocity { v, w })
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.v, self.w)
    }

    pub fn norm(&self) -> f64 {
        self.v.hypot(self.w)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Planar pose: position in meters, heading in radians normalized to `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Pose2::IDENTITY
    }
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.theta)
    }

    /// Maps a point expressed in this pose's frame into the parent frame.
    pub fn transform_point(&self, p: &Point2) -> Point2 {
        self.rotation() * p + self.translation()
    }

    /// `self ∘ other`: `other` is expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.transform_point(&other.translation());
        Pose2::new(t.x, t.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        Pose2::new(t.x, t.y, -self.theta)
    }
}

pub fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// `sin(θ)/θ` and `(1 - cos θ)/θ` with their first derivatives in θ.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ArcRatios {
    pub sinc: f64,
    pub cosc: f64,
    pub dsinc: f64,
    pub dcosc: f64,
}

pub(crate) fn arc_ratios(theta: f64) -> ArcRatios {
    if theta.abs() < SMALL_ANGLE {
        let t2 = theta * theta;
        ArcRatios {
            sinc: 1.0 - t2 / 6.0,
            cosc: theta / 2.0 - theta * t2 / 24.0,
            dsinc: -theta / 3.0 + theta * t2 / 30.0,
            dcosc: 0.5 - t2 / 8.0,
        }
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        ArcRatios {
            sinc: s / theta,
            cosc: (1.0 - c) / theta,
            dsinc: (theta * c - s) / t2,
            dcosc: (theta * s - (1.0 - c)) / t2,
        }
    }
}

/// Unchecked arc integration; callers guarantee finite inputs.
pub(crate) fn arc_pose(v: f64, w: f64, dt: f64) -> Pose2 {
    let theta = w * dt;
    let l = v * dt;
    let r = arc_ratios(theta);
    Pose2::new(l * r.sinc, l * r.cosc, theta)
}

/// Pose reached after moving with `vel` for `dt` seconds from the origin.
/// Negative `dt` extrapolates backwards along the same arc.
pub fn pose_at(vel: BodyVelocity, dt: f64) -> Result<Pose2> {
    if !dt.is_finite() || !vel.v.is_finite() || !vel.w.is_finite() {
        return Err(Error::invalid(format!(
            "pose_at requires finite inputs, got vel=({}, {}), dt={dt}",
            vel.v, vel.w
        )));
    }
    Ok(arc_pose(vel.v, vel.w, dt))
}

/// Sensor limits on valid ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RangeLimits {
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for RangeLimits {
    fn default() -> Self {
        RangeLimits {
            min_range: 0.05,
            max_range: 30.0,
        }
    }
}

impl RangeLimits {
    pub fn contains(&self, range: f64) -> bool {
        range >= self.min_range && range <= self.max_range
    }
}

/// A single beam: range, beam angle in the sensor frame and acquisition time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayMeasurement {
    pub range: f64,
    pub beam_angle: f64,
    pub timestamp: f64,
}

impl RayMeasurement {
    pub fn new(range: f64, beam_angle: f64, timestamp: f64) -> Result<Self> {
        Self::with_limits(range, beam_angle, timestamp, &RangeLimits::default())
    }

    pub fn with_limits(
        range: f64,
        beam_angle: f64,
        timestamp: f64,
        limits: &RangeLimits,
    ) -> Result<Self> {
        if !range.is_finite() || !beam_angle.is_finite() || !timestamp.is_finite() {
            return Err(Error::invalid("non-finite measurement field"));
        }
        if !limits.contains(range) {
            return Err(Error::invalid(format!(
                "range {range} outside [{}, {}]",
                limits.min_range, limits.max_range
            )));
        }
        if !(-PI..PI).contains(&beam_angle) {
            return Err(Error::invalid(format!(
                "beam angle {beam_angle} outside [-pi, pi)"
            )));
        }
        if timestamp < 0.0 {
            return Err(Error::invalid(format!("negative timestamp {timestamp}")));
        }
        Ok(RayMeasurement {
            range,
            beam_angle,
            timestamp,
        })
    }

    /// Endpoint in the sensor frame at acquisition time.
    pub fn local_point(&self) -> Point2 {
        let (s, c) = self.beam_angle.sin_cos();
        Point2::new(self.range * c, self.range * s)
    }
}

/// Wraps an arbitrary angle into the `[-π, π)` convention used for beam angles.
pub fn wrap_beam_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        -PI
    } else {
        r
    }
}

/// Time-ordered beams covering one or more revolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepScan {
    measurements: Vec<RayMeasurement>,
    sweep_start: f64,
}

impl SweepScan {
    pub fn new(measurements: Vec<RayMeasurement>, sweep_start: f64) -> Result<Self> {
        if !sweep_start.is_finite() {
            return Err(Error::invalid("non-finite sweep start"));
        }
        if let Some(first) = measurements.first() {
            if sweep_start > first.timestamp {
                return Err(Error::invalid(format!(
                    "sweep start {sweep_start} after first timestamp {}",
                    first.timestamp
                )));
            }
        }
        for (k, pair) in measurements.windows(2).enumerate() {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(Error::invalid(format!(
                    "timestamps not strictly increasing at measurement {}",
                    k + 1
                )));
            }
        }
        Ok(SweepScan {
            measurements,
            sweep_start,
        })
    }

    /// Scan anchored at its first timestamp.
    pub fn from_measurements(measurements: Vec<RayMeasurement>) -> Result<Self> {
        let start = measurements.first().map_or(0.0, |m| m.timestamp);
        Self::new(measurements, start)
    }

    pub fn measurements(&self) -> &[RayMeasurement] {
        &self.measurements
    }

    pub fn sweep_start(&self) -> f64 {
        self.sweep_start
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.measurements.first(), self.measurements.last()) {
            (Some(_), Some(last)) => last.timestamp - self.sweep_start,
            _ => 0.0,
        }
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.measurements.iter().map(|m| m.timestamp).collect()
    }

    /// Total beam angle swept, accumulating the counter-clockwise step between
    /// consecutive beams.
    pub fn angular_coverage(&self) -> f64 {
        let steps: Vec<f64> = self
            .measurements
            .windows(2)
            .map(|p| (p[1].beam_angle - p[0].beam_angle).rem_euclid(2.0 * PI))
            .collect();
        if steps.is_empty() {
            return 0.0;
        }
        let total: f64 = steps.iter().sum();
        total + total / steps.len() as f64
    }

    /// Number of complete revolutions contained in the scan.
    pub fn revolutions(&self) -> usize {
        (self.angular_coverage() / (2.0 * PI) + 1e-6).floor() as usize
    }

    /// Splits the scan at every full turn of accumulated beam angle.
    /// Each piece keeps the start time of its revolution.
    pub fn split_revolutions(&self) -> Vec<SweepScan> {
        let mut out = Vec::new();
        if self.measurements.is_empty() {
            return out;
        }
        let mut acc = 0.0;
        let mut current = vec![self.measurements[0]];
        let mut start = self.sweep_start;
        for pair in self.measurements.windows(2) {
            let step = (pair[1].beam_angle - pair[0].beam_angle).rem_euclid(2.0 * PI);
            acc += step;
            if acc >= 2.0 * PI - 1e-9 {
                acc -= 2.0 * PI;
                out.push(SweepScan {
                    measurements: std::mem::take(&mut current),
                    sweep_start: start,
                });
                start = pair[1].timestamp;
            }
            current.push(pair[1]);
        }
        if !current.is_empty() {
            out.push(SweepScan {
                measurements: current,
                sweep_start: start,
            });
        }
        out
    }

    /// Concatenates consecutive pieces; the result starts at the first piece's start.
    pub fn concat(pieces: &[SweepScan]) -> Result<SweepScan> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::invalid("cannot concatenate zero scans"))?;
        let measurements = pieces
            .iter()
            .flat_map(|s| s.measurements.iter().copied())
            .collect();
        SweepScan::new(measurements, first.sweep_start)
    }

    /// Reverses the time axis and the beam order. A beam taken at `t` moves to
    /// `sweep_start + (t_last - t)`.
    pub fn time_reversed(&self) -> SweepScan {
        let end = self.measurements.last().map_or(self.sweep_start, |m| m.timestamp);
        let measurements = self
            .measurements
            .iter()
            .rev()
            .map(|m| RayMeasurement {
                timestamp: self.sweep_start + (end - m.timestamp),
                ..*m
            })
            .collect();
        SweepScan {
            measurements,
            sweep_start: self.sweep_start,
        }
    }
}

/// Endpoint of `z` expressed in the frame of the pose at `t_origin`.
pub fn endpoint(vel: BodyVelocity, z: &RayMeasurement, t_origin: f64) -> Point2 {
    let pose = arc_pose(vel.v, vel.w, z.timestamp - t_origin);
    let heading = pose.theta + z.beam_angle;
    let (s, c) = heading.sin_cos();
    Point2::new(pose.x + z.range * c, pose.y + z.range * s)
}

/// Endpoint together with its derivatives with respect to `v` and `w`.
pub(crate) fn endpoint_with_jacobian(
    v: f64,
    w: f64,
    z: &RayMeasurement,
    t_origin: f64,
) -> (Point2, Point2, Point2) {
    let dt = z.timestamp - t_origin;
    let theta = w * dt;
    let l = v * dt;
    let r = arc_ratios(theta);
    let heading = theta + z.beam_angle;
    let (s, c) = heading.sin_cos();
    let p = Point2::new(l * r.sinc + z.range * c, l * r.cosc + z.range * s);
    let dp_dv = Point2::new(dt * r.sinc, dt * r.cosc);
    let dp_dw = Point2::new(
        l * r.dsinc * dt - z.range * dt * s,
        l * r.dcosc * dt + z.range * dt * c,
    );
    (p, dp_dv, dp_dw)
}

/// Maps every beam into the frame of the pose at `scan.sweep_start()`,
/// preserving order.
pub fn deskew_scan(scan: &SweepScan, vel: BodyVelocity) -> Result<Vec<Point2>> {
    if scan.is_empty() {
        return Err(Error::invalid("cannot de-skew an empty scan"));
    }
    let t0 = scan.sweep_start();
    Ok(scan
        .measurements()
        .iter()
        .map(|z| endpoint(vel, z, t0))
        .collect())
}

/// Raw polar-to-Cartesian endpoints, ignoring motion during the sweep.
pub fn skewed_points(scan: &SweepScan) -> Vec<Point2> {
    scan.measurements().iter().map(|z| z.local_point()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_velocity_is_identity() {
        let p = pose_at(BodyVelocity::ZERO, 1.0).unwrap();
        assert_eq!(p, Pose2::IDENTITY);
    }

    #[test]
    fn straight_line() {
        let p = pose_at(BodyVelocity::new(1.0, 0.0).unwrap(), 2.0).unwrap();
        assert_abs_diff_eq!(p.x, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.theta, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quarter_circle() {
        let p = pose_at(BodyVelocity::new(1.0, 1.0).unwrap(), PI / 2.0).unwrap();
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_dt_rejected() {
        assert!(matches!(
            pose_at(BodyVelocity::ZERO, f64::NAN),
            Err(Error::InvalidArgument(_))
        ));
        assert!(pose_at(BodyVelocity::ZERO, f64::INFINITY).is_err());
    }

    #[test]
    fn velocity_limits() {
        assert!(BodyVelocity::new(10.5, 0.0).is_err());
        assert!(BodyVelocity::new(0.0, -11.0).is_err());
        assert!(BodyVelocity::new(f64::NAN, 0.0).is_err());
        assert!(BodyVelocity::new(-10.0, 10.0).is_ok());
    }

    #[test]
    fn measurement_validation() {
        assert!(RayMeasurement::new(0.01, 0.0, 0.0).is_err());
        assert!(RayMeasurement::new(31.0, 0.0, 0.0).is_err());
        assert!(RayMeasurement::new(1.0, PI, 0.0).is_err());
        assert!(RayMeasurement::new(1.0, -PI, 0.0).is_ok());
        assert!(RayMeasurement::new(1.0, 0.0, -0.1).is_err());
    }

    #[test]
    fn scan_validation() {
        let a = RayMeasurement::new(1.0, 0.0, 0.1).unwrap();
        let b = RayMeasurement::new(1.0, 0.1, 0.1).unwrap();
        assert!(SweepScan::new(vec![a, b], 0.0).is_err());
        assert!(SweepScan::new(vec![a], 0.2).is_err());
        assert!(SweepScan::new(vec![a], 0.1).is_ok());
    }

    #[test]
    fn endpoint_examples() {
        let z = RayMeasurement::new(2.0, 0.0, 0.5).unwrap();
        let p = endpoint(BodyVelocity::ZERO, &z, 0.0);
        assert_abs_diff_eq!(p.x, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-15);

        let z = RayMeasurement::new(1.0, 0.0, 1.0).unwrap();
        let p = endpoint(BodyVelocity::new(0.0, PI / 2.0).unwrap(), &z, 0.0);
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);

        let z = RayMeasurement::new(1.0, PI / 2.0, 1.0).unwrap();
        let p = endpoint(BodyVelocity::new(1.0, 0.0).unwrap(), &z, 0.0);
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn series_branch_is_continuous() {
        for &v in &[0.3, -1.7, 2.0] {
            for &dt in &[0.05f64, 0.2, -0.1] {
                let below = SMALL_ANGLE * (1.0 - 1e-9) / dt.abs();
                let above = SMALL_ANGLE * (1.0 + 1e-9) / dt.abs();
                for sign in [-1.0, 1.0] {
                    let a = arc_pose(v, sign * below, dt);
                    let b = arc_pose(v, sign * above, dt);
                    assert!((a.x - b.x).abs() < 1e-12);
                    assert!((a.y - b.y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn deskew_empty_scan_fails() {
        let scan = SweepScan::new(vec![], 0.0).unwrap();
        assert!(deskew_scan(&scan, BodyVelocity::ZERO).is_err());
    }

    #[test]
    fn deskew_zero_velocity_is_polar() {
        let ms: Vec<_> = (0..50)
            .map(|i| {
                RayMeasurement::new(1.0 + 0.1 * i as f64, wrap_beam_angle(0.3 * i as f64), 0.01 * i as f64)
                    .unwrap()
            })
            .collect();
        let scan = SweepScan::from_measurements(ms).unwrap();
        let pts = deskew_scan(&scan, BodyVelocity::ZERO).unwrap();
        for (p, q) in pts.iter().zip(skewed_points(&scan)) {
            assert!((p - q).norm() < 1e-15);
        }
    }

    #[test]
    fn pose_group_operations() {
        let a = Pose2::new(1.0, -2.0, 0.7);
        let id = a.compose(&a.inverse());
        assert_abs_diff_eq!(id.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id.theta, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_beam_angle(PI), -PI, epsilon = 1e-15);
    }

    #[test]
    fn split_into_revolutions() {
        let n = 36;
        let ms: Vec<_> = (0..3 * n)
            .map(|i| {
                let a = wrap_beam_angle(2.0 * PI * (i % n) as f64 / n as f64);
                RayMeasurement::new(2.0, a, 0.001 * i as f64).unwrap()
            })
            .collect();
        let scan = SweepScan::from_measurements(ms).unwrap();
        assert_eq!(scan.revolutions(), 3);
        let revs = scan.split_revolutions();
        assert_eq!(revs.len(), 3);
        assert!(revs.iter().all(|r| r.len() == n));
        assert_abs_diff_eq!(revs[1].sweep_start(), 0.001 * n as f64, epsilon = 1e-15);
    }
}
