//! Builds measured baselines for a toy environment, then simulates a grid of
//! synthetic links normalized by those baselines.
//!
//! cargo run --release --example synthetic_coverage

use pathloss::pipeline::process_environment;
use pathloss::reference::ReferenceConfig;
use pathloss::simulator::{simulate_links, SimConfig};
use pathloss::toy::{ToyConfig, ToyWorld};

fn summary(name: &str, targets: impl Iterator<Item = f64>) {
    let v: Vec<f64> = targets.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    println!("  {name}: {} samples, delta RSRP mean {mean:+.2} dB, sd {sd:.2} dB", v.len());
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = ToyWorld::generate(&ToyConfig {
        size_m: 800.0,
        measurements_per_env: 800,
        ..ToyConfig::default()
    })?;
    for toy in &world.environments {
        let env = toy.environment();
        let real = process_environment(&env, &toy.measurements, &ReferenceConfig::default())?;
        println!("{}", env.name);
        for (id, b) in &real.baselines {
            println!(
                "  {id}: tilt {:.1} deg, {} reference points, RSRP_ref {:.1} dBm",
                b.theta_est_deg,
                b.subset_ids.len(),
                b.rsrp_ref_dbm().unwrap_or(f64::NAN)
            );
        }
        let sim = simulate_links(&SimConfig::covering(&env, 40.0, 20.0), &env, &real.baselines)?;
        println!("  grid: {} points, {} failed links", sim.grid_points, sim.failed);
        summary("real", real.samples.iter().map(|s| s.target));
        summary("synthetic", sim.samples.iter().map(|s| s.target));
    }
    Ok(())
}
