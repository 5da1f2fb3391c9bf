//! Trains on one environment and tests on another, with and without the
//! target environment's synthetic data, and prints the MAE heatmaps.
//!
//! cargo run --release --example cross_environment

use pathloss::ensemble::EnsembleConfig;
use pathloss::evaluation::{cross_env_matrix, EvalConfig, MatrixMode};
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
    let envs = world
        .environments
        .iter()
        .map(|t| environment_data(&t.environment(), &t.measurements, &ReferenceConfig::default(), &sim))
        .collect::<Result<Vec<_>, _>>()?;
    let config = EvalConfig {
        ensemble: EnsembleConfig {
            train: TrainConfig {
                n_trees: 60,
                ..TrainConfig::default()
            },
            ..EnsembleConfig::default()
        },
        ..EvalConfig::default()
    };
    for mode in [MatrixMode::RealOnly, MatrixMode::Ensemble] {
        let runs = cross_env_matrix(&envs, mode, 7, &config)?;
        println!("{mode} MAE (rows train, columns test)");
        print!("{:>8}", "");
        for e in &envs {
            print!("{:>8}", e.name);
        }
        println!();
        for train in &envs {
            print!("{:>8}", train.name);
            for test in &envs {
                let r = runs
                    .iter()
                    .find(|r| r.row.train_env == train.name && r.row.test_env == test.name)
                    .expect("every pair is present");
                print!("{:>8.2}", r.row.mae_db);
            }
            println!();
        }
    }
    Ok(())
}
