//! Paired-trajectory stability against the smooth bound, at two sample sizes.
//!
//! `cargo run --release --example stability`

use dpsgd_lab::analysis::{estimate_stability, stability_bound_smooth, BoundInputs, StabilityOptions, TrainSetup};
use dpsgd_lab::problems::realizable_least_squares;
use dpsgd_lab::sgd::Schedule;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = realizable_least_squares(5, 1.0, 2.0, 4)?;
    let mut opts = StabilityOptions::new(100);
    opts.collect_risks = true;
    for n in [50, 200] {
        let setup = TrainSetup { n, schedule: Schedule::fixed(0.1, n as u64)?, sigma2: 0.25, seed: 1 };
        let est = estimate_stability(&problem, &setup, &opts)?;
        let inputs = BoundInputs::from_certificate(problem.loss().certificate(), n, n as u64, 5, 0.1, 0.25, 1.0)
            .with_risks(est.mean_risks.clone().unwrap_or_default());
        let bound = stability_bound_smooth(&inputs, n as u64)?;
        println!("n = {n:>3}: estimate {:.4e} ± {:.1e}, bound {bound:.4e}", est.value, est.std_err);
    }
    Ok(())
}
