//! Median path loss of the five empirical models over distance, with the
//! validity-window clamp flag.
//!
//! cargo run --release --example path_loss_models

use pathloss::empirical::{EmpiricalModelId, EnvironmentClass, LinkBudgetInput, ModelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ModelParams::default();
    let freq = 1.9e9;
    for env in [EnvironmentClass::Rural, EnvironmentClass::Suburban, EnvironmentClass::Urban] {
        println!("{env:?} at {:.0} MHz, BS 30 m, UE 1.5 m", freq / 1e6);
        print!("{:>8}", "d (m)");
        for m in EmpiricalModelId::CONSENSUS {
            print!("{:>15}", m.name());
        }
        println!();
        for d in [50.0, 100.0, 250.0, 500.0, 1000.0, 2500.0, 5000.0] {
            let input = LinkBudgetInput::new(freq, d, 30.0, 1.5, env)?;
            print!("{d:>8.0}");
            for m in EmpiricalModelId::CONSENSUS {
                let out = params.path_loss(m, &input);
                let mark = if out.clamped { "*" } else { " " };
                print!("{:>14.1}{mark}", out.loss_db);
            }
            println!();
        }
        println!();
    }
    println!("* input clamped into the model's validity window");
    Ok(())
}
