//! Runs the five data-scarcity scenarios on both toy environments and prints
//! held-out MAE and RMSE.
//!
//! cargo run --release --example scarcity_scenarios -- [seed]

use pathloss::ensemble::EnsembleConfig;
use pathloss::evaluation::{run_scenario, EvalConfig, Scenario};
use pathloss::learner::TrainConfig;
use pathloss::pipeline::{environment_data, SimSettings};
use pathloss::reference::ReferenceConfig;
use pathloss::toy::{ToyConfig, ToyWorld};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let world = ToyWorld::generate(&ToyConfig::default())?;
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
    for env in &envs {
        println!("{} (seed {seed})", env.name);
        for scenario in Scenario::ALL {
            let run = run_scenario(scenario, &env.name, &envs, seed, &config)?;
            let r = &run.row;
            println!(
                "  {:<24} MAE {:>5.2}  RMSE {:>5.2}  train {:>5}  test {:>4}",
                r.label, r.mae_db, r.rmse_db, r.n_train, r.n_test
            );
        }
    }
    Ok(())
}
