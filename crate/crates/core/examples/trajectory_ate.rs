// Absolute trajectory error of a noisy, rigidly displaced copy of a path.

use lidar_deskew::evaluation::{ate, Trajectory};
use lidar_deskew::motion_model::{BodyVelocity, Pose2, pose_at};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Returns `(ATE of the displaced copy, ATE of the displaced noisy copy)`.
pub fn run_example() -> lidar_deskew::Result<(f64, f64)> {
    let vel = BodyVelocity::new(1.0, 0.4)?;
    let stamps: Vec<f64> = (0..400).map(|k| 0.05 * k as f64).collect();
    let poses = stamps.iter().map(|&t| pose_at(vel, t)).collect::<lidar_deskew::Result<Vec<_>>>()?;
    let reference = Trajectory::new(stamps.clone(), poses)?;
    let shifted = reference.transformed(&Pose2::new(3.0, -2.0, 0.7));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 0.1 / 2f64.sqrt()).expect("valid sigma");
    let noisy_poses = shifted
        .poses()
        .iter()
        .map(|p| Pose2::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng), p.theta))
        .collect();
    let noisy = Trajectory::new(stamps, noisy_poses)?;
    Ok((ate(&shifted, &reference)?, ate(&noisy, &reference)?))
}

#[allow(dead_code)]
fn main() -> lidar_deskew::Result<()> {
    let (exact, noisy) = run_example()?;
    println!("ATE rigidly displaced {exact:.3e} m");
    println!("ATE with 0.1 m noise  {noisy:.4} m");
    Ok(())
}
