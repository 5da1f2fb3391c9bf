//! Fits real, synthetic and combined learners and searches the weight simplex
//! for the blend with the lowest validation error.
//!
//! cargo run --release --example weighted_ensemble

use pathloss::ensemble::{fit_ensemble, EnsembleConfig};
use pathloss::learner::TrainConfig;
use pathloss::pipeline::{environment_data, SimSettings};
use pathloss::reference::ReferenceConfig;
use pathloss::toy::{ToyConfig, ToyWorld};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = ToyWorld::generate(&ToyConfig {
        size_m: 800.0,
        measurements_per_env: 800,
        ..ToyConfig::default()
    })?;
    let sim = SimSettings {
        spacing: 40.0,
        ..SimSettings::default()
    };
    let config = EnsembleConfig {
        train: TrainConfig {
            n_trees: 60,
            ..TrainConfig::default()
        },
        seed: 5,
        ..EnsembleConfig::default()
    };
    for toy in &world.environments {
        let data = environment_data(&toy.environment(), &toy.measurements, &ReferenceConfig::default(), &sim)?;
        let fit = fit_ensemble(&data.real, &data.synth, &config)?;
        let [wr, ws, wc] = fit.model.w;
        let [lr, ls, lc] = fit.corner_losses;
        println!("{}: {} real, {} synthetic, {} validation rows", data.name, data.real.len(), data.synth.len(), fit.n_val);
        println!("  alone: real {lr:.3}  synthetic {ls:.3}  combined {lc:.3}");
        println!("  blend w=({wr:.2}, {ws:.2}, {wc:.2}): {:.3}", fit.val_loss);
    }
    Ok(())
}
