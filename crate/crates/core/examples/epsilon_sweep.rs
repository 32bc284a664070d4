//! Excess risk against 1/epsilon at fixed n, with a dry-run calibration table first.
//!
//! `cargo run --release --example epsilon_sweep`

use dpsgd_lab::experiments::{dry_run, dry_run_csv, run_sweep, SweepSpec};
use dpsgd_lab::problems::ProblemSpec;
use dpsgd_lab::sgd::Regime;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SweepSpec::over_epsilon(
        ProblemSpec::new("realizable_least_squares", 5, 1.0, 1),
        Regime::SmoothLownoise,
        512,
        vec![4.0, 8.0, 16.0, 32.0],
        1e-5,
    )
    .with_runs(20);
    print!("{}", dry_run_csv(&dry_run(&spec)?));
    let result = run_sweep(&spec)?;
    for row in &result.curves[0].rows {
        println!("epsilon = {:>4}: excess {:.4e} ± {:.1e}", row.epsilon, row.mean_excess, row.stderr);
    }
    Ok(())
}
