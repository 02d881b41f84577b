// Point error against ground truth after each ICP round for a sensor
// spinning in place at 3 rad/s.

use lidar_deskew::evaluation::point_rmse;
use lidar_deskew::motion_model::{deskew_scan, BodyVelocity};
use lidar_deskew::simulator::{simulate_sweep, SensorConfig, WorldModel};
use lidar_deskew::solver::{estimate_velocity, EstimatorConfig};

/// RMSE before estimation (index 0) and after every round.
pub fn run_example() -> lidar_deskew::Result<Vec<f64>> {
    let vel = BodyVelocity::new(0.0, 3.0)?;
    let gt = simulate_sweep(&WorldModel::default_room(), vel, &SensorConfig::default(), 2, 3)?;
    let report = estimate_velocity(&gt.scan, BodyVelocity::ZERO, &EstimatorConfig::default())?;
    std::iter::once(BodyVelocity::ZERO)
        .chain(report.velocity_trace.iter().copied())
        .map(|v| point_rmse(&deskew_scan(&gt.scan, v)?, &gt.true_endpoints))
        .collect()
}

#[allow(dead_code)]
fn main() -> lidar_deskew::Result<()> {
    for (round, rmse) in run_example()?.iter().enumerate() {
        println!("{round:2} {rmse:.4} {}", "#".repeat((rmse * 100.0).round() as usize));
    }
    Ok(())
}
