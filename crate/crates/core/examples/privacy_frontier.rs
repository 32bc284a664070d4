//! Smallest workable epsilon as n grows, next to the closed-form sufficient threshold.
//!
//! `cargo run --example privacy_frontier`

use dpsgd_lab::privacy::{min_epsilon_for_beta, min_feasible_epsilon, Which};

fn main() {
    println!("{:>7} {:>12} {:>12}", "n", "threshold", "searched");
    for n in [50usize, 100, 1000, 10_000, 100_000] {
        let nf = n as f64;
        let threshold = min_epsilon_for_beta(n).map(|e| format!("{e:.5}")).unwrap_or_else(|_| "-".into());
        let searched = min_feasible_epsilon(n, n as u64, 1.0, 1.0 / (nf * nf), Which::Pointwise)
            .map(|e| format!("{e:.5}"))
            .unwrap_or_else(|| "none".into());
        println!("{n:>7} {threshold:>12} {searched:>12}");
    }
}
