// Recovers the sensor velocity from a single two-revolution window.

use lidar_deskew::motion_model::BodyVelocity;
use lidar_deskew::simulator::{simulate_sweep_from, SensorConfig, WorldModel};
use lidar_deskew::solver::{estimate_velocity, EstimateReport, EstimatorConfig};
use lidar_deskew::motion_model::Pose2;

pub fn run_example() -> lidar_deskew::Result<(BodyVelocity, EstimateReport)> {
    let truth = BodyVelocity::new(-1.0, 0.5)?;
    let start = Pose2::new(0.5, -0.5, 1.0);
    let gt = simulate_sweep_from(&WorldModel::default_room(), start, truth, &SensorConfig::default(), 2, 5)?;
    let report = estimate_velocity(&gt.scan, BodyVelocity::ZERO, &EstimatorConfig::default())?;
    Ok((truth, report))
}

#[allow(dead_code)]
fn main() -> lidar_deskew::Result<()> {
    let (truth, r) = run_example()?;
    println!("true      v = {:+.4} w = {:+.4}", truth.v, truth.w);
    println!(
        "estimated v = {:+.4} w = {:+.4}  (std {:.4}, {:.4})",
        r.velocity.v, r.velocity.w, r.velocity_std[0], r.velocity_std[1]
    );
    println!(
        "{} rounds, converged: {}, {} correspondences, final cost {:.5}",
        r.rounds, r.converged, r.correspondence_count, r.final_cost
    );
    Ok(())
}
