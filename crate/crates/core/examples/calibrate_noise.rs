//! Noise level for a pointwise and a pairwise run at the same budget.
//!
//! `cargo run --example calibrate_noise`

use dpsgd_lab::privacy::{find_beta, verify_run_privacy, DpTarget, Which};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, t, g) = (1000, 1000, 1.0);
    let target = DpTarget::new(2.0, 1e-5)?;
    for which in [Which::Pointwise, Which::Pairwise] {
        let cal = find_beta(n, t, g, &target, which);
        if !cal.feasible {
            println!("{which:?}: infeasible");
            continue;
        }
        let audit = verify_run_privacy(&cal)?;
        println!(
            "{which:?}: beta = {:.3}, lambda = {:.3}, sigma^2 = {:.5}, audited epsilon = {:.6}",
            cal.beta, cal.lambda, cal.sigma2, audit.epsilon_achieved
        );
    }
    Ok(())
}
