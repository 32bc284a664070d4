//! Measured optimization error next to its bound, with and without noise.
//!
//! `cargo run --release --example optimization_bound`

use dpsgd_lab::analysis::{bound_inputs, measure_optimization, optimization_bound, TrainSetup};
use dpsgd_lab::problems::realizable_least_squares;
use dpsgd_lab::sgd::Schedule;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = realizable_least_squares(10, 1.0, 2.0, 1)?;
    for sigma2 in [0.0, 1.0, 10.0] {
        let setup = TrainSetup { n: 200, schedule: Schedule::fixed(0.05, 200)?, sigma2, seed: 2 };
        let m = measure_optimization(&problem, &setup, 50, &[50, 100])?;
        let inputs = bound_inputs(&problem, &setup, &m);
        for &(t, mean, se) in &m.opt_sums {
            let bound = optimization_bound(&inputs, t, true)?;
            println!("sigma^2 = {sigma2:>4}, t = {t:>3}: measured {mean:.4e} ± {se:.1e}, bound {bound:.4e}");
        }
    }
    Ok(())
}
