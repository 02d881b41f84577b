// Simulates a sweep of a moving sensor and undoes the motion distortion with
// the true velocity.

use lidar_deskew::evaluation::point_rmse;
use lidar_deskew::motion_model::{deskew_scan, skewed_points, BodyVelocity};
use lidar_deskew::simulator::{simulate_sweep, SensorConfig, WorldModel};

/// Returns `(skewed RMSE, de-skewed RMSE)` against the noiseless endpoints.
pub fn run_example() -> lidar_deskew::Result<(f64, f64)> {
    let world = WorldModel::default_room();
    let vel = BodyVelocity::new(1.0, 1.0)?;
    let gt = simulate_sweep(&world, vel, &SensorConfig::default(), 2, 11)?;
    let skewed = point_rmse(&skewed_points(&gt.scan), &gt.true_endpoints)?;
    let deskewed = point_rmse(&deskew_scan(&gt.scan, vel)?, &gt.true_endpoints)?;
    Ok((skewed, deskewed))
}

#[allow(dead_code)]
fn main() -> lidar_deskew::Result<()> {
    let (skewed, deskewed) = run_example()?;
    println!("RMSE skewed   {skewed:.4} m");
    println!("RMSE deskewed {deskewed:.4} m");
    Ok(())
}
