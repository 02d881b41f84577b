// Tracks the velocity over a longer stream in sliding two-revolution
// windows, each warm-started from the previous one.

use lidar_deskew::motion_model::BodyVelocity;
use lidar_deskew::simulator::{simulate_sweep, SensorConfig, WorldModel};
use lidar_deskew::solver::{EstimatorConfig, StreamEstimator, WindowEstimate};

pub fn run_example() -> lidar_deskew::Result<Vec<WindowEstimate>> {
    let vel = BodyVelocity::new(0.3, 1.0)?;
    let gt = simulate_sweep(&WorldModel::default_room(), vel, &SensorConfig::default(), 6, 21)?;
    StreamEstimator::new(EstimatorConfig::default()).run(&gt.scan)
}

#[allow(dead_code)]
fn main() -> lidar_deskew::Result<()> {
    for w in run_example()? {
        println!(
            "[{:.2} s, {:.2} s] v = {:+.3} w = {:+.3} ({} rounds)",
            w.start, w.end, w.report.velocity.v, w.report.velocity.w, w.report.rounds
        );
    }
    Ok(())
}
