//! Writes a generated two-environment toy world (rasters, registry,
//! measurements and a run manifest) to a directory.
//!
//! cargo run --release --example make_toy_world -- --out data/toy --size 800 --measurements 800

use std::path::PathBuf;

use clap::Parser;
use pathloss::toy::{ToyConfig, ToyWorld};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "toy_world")]
    out: PathBuf,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Side of the square world, meters.
    #[arg(long, default_value_t = 1200.0)]
    size: f64,
    /// Measurements per environment.
    #[arg(long, default_value_t = 3000)]
    measurements: usize,
    /// Extra manifest lines, e.g. "train.n_trees = 50".
    #[arg(long)]
    set: Vec<String>,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    let config = ToyConfig {
        seed: args.seed,
        size_m: args.size,
        measurements_per_env: args.measurements,
        ..ToyConfig::default()
    };
    let world = ToyWorld::generate(&config)?;
    world.write_to(&args.out)?;
    if !args.set.is_empty() {
        let path = args.out.join("manifest.cfg");
        let mut text = std::fs::read_to_string(&path)?;
        for line in &args.set {
            text.push_str(line);
            text.push('\n');
        }
        std::fs::write(&path, text)?;
    }
    for env in &world.environments {
        let los = env.measurements.len();
        println!("{}: {} stations, {los} measurements", env.name, env.stations.len());
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
