// Writes an SVG comparing skewed, de-skewed and true endpoints of a
// rotating sensor.
//
// `cargo run --release --example render_figure -- out.svg`

use lidar_deskew::motion_model::{deskew_scan, skewed_points, BodyVelocity};
use lidar_deskew::render::{render_svg, Layer};
use lidar_deskew::simulator::{simulate_sweep, SensorConfig, WorldModel};
use lidar_deskew::solver::{estimate_velocity, EstimatorConfig};

pub fn run_example() -> lidar_deskew::Result<String> {
    let vel = BodyVelocity::new(0.5, 3.0)?;
    let gt = simulate_sweep(&WorldModel::default_room(), vel, &SensorConfig::default(), 2, 9)?;
    let report = estimate_velocity(&gt.scan, BodyVelocity::ZERO, &EstimatorConfig::default())?;
    render_svg(&[
        Layer::new("skewed", skewed_points(&gt.scan)),
        Layer::new("de-skewed", deskew_scan(&gt.scan, report.velocity)?),
        Layer::new("ground truth", gt.true_endpoints),
    ])
}

#[allow(dead_code)]
fn main() -> lidar_deskew::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "deskew.svg".into());
    std::fs::write(&out, run_example()?)?;
    println!("wrote {out}");
    Ok(())
}
