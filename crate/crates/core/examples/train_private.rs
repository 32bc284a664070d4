//! One private run on noisy logistic regression, scored against the population optimum.
//!
//! `cargo run --example train_private`

use dpsgd_lab::privacy::{find_beta, DpTarget, Which};
use dpsgd_lab::problems::noisy_logistic;
use dpsgd_lab::sgd::{make_schedule, Regime, SgdConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = noisy_logistic(10, 1.0, 1.0, 0.1, 1)?;
    let (n, eps, delta) = (2048, 4.0, 1e-5);
    let cert = problem.loss().certificate();
    let schedule = make_schedule(Regime::SmoothGeneral, n, problem.dim(), eps, delta, &cert.smoothness, 1.0)?;
    let cal = find_beta(n, schedule.t, cert.g, &DpTarget::new(eps, delta)?, Which::Pointwise);
    assert!(cal.feasible, "no feasible noise level");

    let data = problem.sample(n, 7);
    let report = problem.train(&SgdConfig::new(problem.radius(), schedule, cal.sigma2, 7), &data)?;
    let excess = problem.excess_risk(&report.w_priv);
    println!("eta = {:.4}, T = {}, sigma^2 = {:.3}", schedule.eta, schedule.t, cal.sigma2);
    println!("F* = {:.5}", problem.f_star());
    println!("excess risk = {:.5} ± {:.1e}", excess.value, excess.error);
    Ok(())
}
