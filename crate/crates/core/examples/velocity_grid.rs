// Runs the 6×6 velocity grid in the bundled room and prints the table.
//
// `cargo run --release --example velocity_grid -- [trials]`

use std::time::Instant;

use lidar_deskew::evaluation::{run_velocity_grid, GridConfig, GridTable};
use lidar_deskew::simulator::WorldModel;

pub fn run_example(trials: usize) -> lidar_deskew::Result<GridTable> {
    let cfg = GridConfig {
        trials,
        ..GridConfig::default()
    };
    run_velocity_grid(&WorldModel::default_room(), &cfg)
}

#[allow(dead_code)]
fn main() -> lidar_deskew::Result<()> {
    let trials = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20);
    let started = Instant::now();
    let table = run_example(trials)?;
    print!("{}", table.to_text_table());
    println!();
    print!("{}", table.to_csv());
    println!("\n{} trials per cell, {:.1} s", trials, started.elapsed().as_secs_f64());
    Ok(())
}
