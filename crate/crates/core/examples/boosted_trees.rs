//! Trains the gradient-boosted tree learner on measured samples, prints the
//! training loss curve and round-trips the model through its text format.
//!
//! cargo run --release --example boosted_trees

use pathloss::dataset::{feature_matrix, targets};
use pathloss::evaluation::split_dataset;
use pathloss::features::FEATURE_NAMES;
use pathloss::learner::{fit_with_history, GbdtModel, TrainConfig};
use pathloss::metrics::{mae, rmse};
use pathloss::pipeline::process_environment;
use pathloss::reference::ReferenceConfig;
use pathloss::toy::{ToyConfig, ToyWorld};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = ToyWorld::generate(&ToyConfig {
        size_m: 800.0,
        measurements_per_env: 800,
        ..ToyConfig::default()
    })?;
    let toy = world.environment("hilly").expect("hilly environment");
    let real = process_environment(&toy.environment(), &toy.measurements, &ReferenceConfig::default())?;
    let split = split_dataset(&real.samples, 1);
    let x = feature_matrix(&split.train_pool);
    let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
    let config = TrainConfig {
        n_trees: 100,
        max_depth: 4,
        ..TrainConfig::default()
    };
    let names = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let (model, history) = fit_with_history(&rows, &targets(&split.train_pool), names, &config)?;
    for (i, loss) in history.iter().enumerate().step_by(10) {
        println!("trees {i:>3}: train MSE {loss:.3}");
    }
    let pred = model.predict_samples(&split.test)?;
    let truth = targets(&split.test);
    println!("held-out MAE {:.2} dB, RMSE {:.2} dB", mae(&pred, &truth)?, rmse(&pred, &truth)?);

    let text = model.serialize();
    let back = GbdtModel::deserialize(&text)?;
    let same = back.predict_samples(&split.test)? == pred;
    println!("serialized to {} bytes, predictions identical after reload: {same}", text.len());
    Ok(())
}
