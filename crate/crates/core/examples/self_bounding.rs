//! Probes every builtin loss for the self-bounding inequality, then repeats with L halved.
//!
//! `cargo run --example self_bounding`

use dpsgd_lab::losses::{builtin_names, probe_self_bounding, Loss, LossBounds};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bounds = LossBounds::new(1.0, 2.0, 1.0)?;
    println!("{:<16} {:>10} {:>12} {:>14}", "loss", "violations", "worst ratio", "halved-L viol.");
    for name in builtin_names() {
        let loss = Loss::by_name(name, &bounds)?;
        let honest = probe_self_bounding(&loss, &bounds, 5, 10_000, 1);
        let halved = probe_self_bounding(&loss.with_scaled_l(0.5), &bounds, 5, 10_000, 1);
        println!("{name:<16} {:>10} {:>12.4} {:>14}", honest.violations, honest.worst_ratio, halved.violations);
    }
    Ok(())
}
