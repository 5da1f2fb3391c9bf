//! Extracts lidar profiles from a toy environment and reports line of sight,
//! blockage, roughness and the Deygout knife edges along each path.
//!
//! cargo run --release --example terrain_profile

use pathloss::diffraction::deygout_loss;
use pathloss::features::{blockage_fraction, los_classify, terrain_roughness, FeatureConfig, SiteContext};
use pathloss::geodesy::LocalXY;
use pathloss::toy::{ToyConfig, ToyWorld};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = ToyWorld::generate(&ToyConfig {
        size_m: 800.0,
        measurements_per_env: 0,
        ..ToyConfig::default()
    })?;
    let toy = world.environment("hilly").expect("hilly environment");
    let terrain = &toy.terrain;
    let site = SiteContext::new(&toy.stations[0], terrain, &FeatureConfig::default())?;
    println!(
        "{}: ground {:.1} m, antenna {:.1} m ASL, HAAT {:.1} m",
        toy.stations[0].id, site.ground_asl, site.antenna_asl, site.tx_haat
    );
    let rx_h = 1.5;
    let tx_h = toy.stations[0].tower_height_agl;
    for (x, y) in [(400.0, 280.0), (600.0, 600.0), (100.0, 700.0), (750.0, 50.0)] {
        let rx = LocalXY::new(x, y, terrain.origin);
        let profile = terrain.extract_profile(&site.xy, &rx, terrain.default_step())?;
        let diff = deygout_loss(&profile, 1.9e9, tx_h, rx_h, 3)?;
        println!(
            "to ({x:.0}, {y:.0}): {:.0} m, {} samples, los={} blockage={:.0}% roughness={:.2} m",
            profile.length(),
            profile.len(),
            los_classify(&profile, tx_h, rx_h)?,
            100.0 * blockage_fraction(&profile, tx_h, rx_h)?,
            terrain_roughness(&profile)?,
        );
        println!("  diffraction {:.1} dB", diff.loss_db);
        for e in &diff.edges {
            println!(
                "    edge at {:.0} m: h={:+.1} m nu={:+.2}",
                profile.distances[e.index], e.h, e.nu
            );
        }
    }
    Ok(())
}
