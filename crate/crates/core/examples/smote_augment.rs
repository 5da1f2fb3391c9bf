//! Oversamples a scarce real set with regression SMOTE and shows how each
//! synthetic row interpolates its two parents.
//!
//! cargo run --release --example smote_augment

use pathloss::augment::{smote_regression, SmoteAmount, SmoteConfig};
use pathloss::evaluation::scarcity_sample;
use pathloss::pipeline::process_environment;
use pathloss::reference::ReferenceConfig;
use pathloss::toy::{ToyConfig, ToyWorld};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = ToyWorld::generate(&ToyConfig {
        size_m: 800.0,
        measurements_per_env: 800,
        ..ToyConfig::default()
    })?;
    let toy = world.environment("flat").expect("flat environment");
    let real = process_environment(&toy.environment(), &toy.measurements, &ReferenceConfig::default())?;
    let scarce = scarcity_sample(&real.samples, 0.05, 3)?;
    let out = smote_regression(
        &scarce,
        &SmoteConfig {
            k_neighbors: 5,
            amount: SmoteAmount::Multiplier(2.0),
            seed: 9,
        },
    )?;
    println!("{} real samples, 5% = {}, SMOTE added {}", real.samples.len(), scarce.len(), out.samples.len());
    for (env, los, n) in &out.skipped_groups {
        println!("  skipped group {env} los={los}: {n} samples");
    }
    for s in out.samples.iter().take(5) {
        let a = scarce.iter().find(|r| r.id == s.parents[0]).expect("base parent");
        let b = scarce.iter().find(|r| r.id == s.parents[1]).expect("neighbor parent");
        println!(
            "  {}: d {:.0} m (parents {:.0}, {:.0}), target {:+.2} dB (parents {:+.2}, {:+.2})",
            s.id, s.features.d_bs_m, a.features.d_bs_m, b.features.d_bs_m, s.target, a.target, b.target
        );
    }
    Ok(())
}
