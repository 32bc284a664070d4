//! Step sizes and horizons chosen for each regime.
//!
//! `cargo run --example schedules`

use dpsgd_lab::losses::SmoothnessClass;
use dpsgd_lab::sgd::{make_schedule, Regime};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let smooth = SmoothnessClass::smooth(1.0)?;
    let cases = [
        (Regime::SmoothGeneral, smooth),
        (Regime::SmoothLownoise, smooth),
        (Regime::HolderGeneral, SmoothnessClass::holder(0.25, 1.0)?),
        (Regime::HolderGeneral, SmoothnessClass::holder(0.75, 1.0)?),
        (Regime::HolderLownoise, SmoothnessClass::holder(0.0, 1.0)?),
        (Regime::HolderLownoise, SmoothnessClass::holder(0.5, 1.0)?),
    ];
    for n in [256, 4096] {
        for (regime, class) in &cases {
            let s = make_schedule(*regime, n, 10, 2.0, 1e-5, class, 1.0)?;
            println!("n = {n:>4} {:<16} alpha = {:.2}: eta = {:.3e}, T = {}", regime.as_str(), class.alpha(), s.eta, s.t);
        }
    }
    Ok(())
}
