//! Recovers a planted antenna downtilt from LoS measurements by scanning
//! main-lobe subsets against the empirical consensus.
//!
//! cargo run --release --example downtilt_baseline

use pathloss::reference::{estimate_downtilt, select_los_candidates, ReferenceConfig};
use pathloss::toy::planted_downtilt_site;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ReferenceConfig::default();
    let vbw = 7.0;
    for theta_star in [2.0, 5.0, 9.0] {
        let links = planted_downtilt_site(theta_star, vbw, 700, 2.0, 11);
        let candidates = select_los_candidates(&links, cfg.threshold_dbm);
        let est = estimate_downtilt("planted", &candidates, &cfg.consensus, vbw, cfg.n_min, &cfg.tilts_deg)?;
        println!(
            "planted {theta_star:>4.1} deg, {} candidates, estimated {:.1} deg",
            candidates.len(),
            est.theta_est_deg
        );
        for s in &est.scores {
            match s.mean_mae {
                Some(m) => println!("    theta {:>4.1}: n={:>3} mae={m:.2} dB", s.theta_deg, s.n_points),
                None => println!("    theta {:>4.1}: n={:>3} (too few)", s.theta_deg, s.n_points),
            }
        }
    }
    Ok(())
}
