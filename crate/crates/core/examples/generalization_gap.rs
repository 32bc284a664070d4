//! Generalization gap of the averaged iterate as n grows.
//!
//! `cargo run --release --example generalization_gap`

use dpsgd_lab::analysis::{estimate_generalization_gap, TrainSetup};
use dpsgd_lab::problems::noisy_logistic;
use dpsgd_lab::sgd::Schedule;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = noisy_logistic(4, 1.0, 1.0, 0.1, 6)?;
    for n in [25, 100, 400] {
        let setup = TrainSetup { n, schedule: Schedule::fixed(0.5, 400)?, sigma2: 0.0, seed: 3 };
        let gap = estimate_generalization_gap(&problem, &setup, 100)?;
        println!("n = {n:>3}: gap {:.5} ± {:.5}", gap.mean, gap.std_err);
    }
    Ok(())
}
