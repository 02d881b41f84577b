// Independent oracles shared by the integration tests.
#![allow(dead_code)]

use lidar_deskew::motion_model::{endpoint, normalize_angle, BodyVelocity, Pose2, RayMeasurement, SweepScan};
use lidar_deskew::scan_pipeline::PlanarPatch;
use lidar_deskew::solver::patch_error;
use nalgebra::{Matrix3x2, Vector3};

/// Integrates x' = v cos θ, y' = v sin θ, θ' = w with classic RK4.
pub fn rk4_pose(v: f64, w: f64, dt: f64, step: f64) -> Pose2 {
    let f = |s: [f64; 3]| [v * s[2].cos(), v * s[2].sin(), w];
    let mut s = [0.0; 3];
    let n = (dt.abs() / step).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    for _ in 0..n {
        let k1 = f(s);
        let k2 = f([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1], s[2] + 0.5 * h * k1[2]]);
        let k3 = f([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1], s[2] + 0.5 * h * k2[2]]);
        let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1], s[2] + h * k3[2]]);
        for i in 0..3 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Pose2 { x: s[0], y: s[1], theta: s[2] }
}

pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

/// Residual recomputed from scratch: endpoints, then patches, then error.
pub fn residual_from_scratch(
    vel: BodyVelocity,
    scan: &SweepScan,
    a: (usize, usize),
    b: (usize, usize),
) -> Vector3<f64> {
    let ms = scan.measurements();
    let t0 = scan.sweep_start();
    let patch = |src: (usize, usize)| {
        let p = endpoint(vel, &ms[src.0], t0);
        let q = endpoint(vel, &ms[src.1], t0);
        PlanarPatch::from_endpoints(&p, &q, ms[src.0].timestamp, ms[src.1].timestamp, src).unwrap()
    };
    patch_error(&patch(a), &patch(b)).0
}

/// Central finite differences of the residual in `(v, w)`.
pub fn jacobian_fd(vel: BodyVelocity, scan: &SweepScan, a: (usize, usize), b: (usize, usize), h: f64) -> Matrix3x2<f64> {
    let at = |v: f64, w: f64| residual_from_scratch(BodyVelocity { v, w }, scan, a, b);
    let dv = (at(vel.v + h, vel.w) - at(vel.v - h, vel.w)) / (2.0 * h);
    let dw = (at(vel.v, vel.w + h) - at(vel.v, vel.w - h)) / (2.0 * h);
    Matrix3x2::from_columns(&[dv, dw])
}

/// A scan of four beams in two pairs, each pair forming a patch.
pub fn four_beam_scan(beams: [(f64, f64, f64); 4]) -> SweepScan {
    let ms = beams
        .iter()
        .map(|&(r, a, t)| RayMeasurement { range: r, beam_angle: a, timestamp: t })
        .collect();
    SweepScan::new(ms, 0.0).unwrap()
}
