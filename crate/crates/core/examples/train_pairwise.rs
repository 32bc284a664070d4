//! Private AUC maximisation: the pairwise calibration and the pairwise sampler.
//!
//! `cargo run --example train_pairwise`

use dpsgd_lab::privacy::{find_beta, DpTarget, Which};
use dpsgd_lab::problems::noisy_auc;
use dpsgd_lab::sgd::{make_schedule, Regime, SgdConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = noisy_auc(5, 1.0, 1.0, 0.1, 4.0, 2)?;
    let (n, eps, delta) = (1024, 8.0, 1e-5);
    let cert = problem.loss().certificate();
    let schedule = make_schedule(Regime::SmoothGeneral, n, problem.dim(), eps, delta, &cert.smoothness, 1.0)?;
    let target = DpTarget::new(eps, delta)?;
    let point = find_beta(n, schedule.t, cert.g, &target, Which::Pointwise);
    let pair = find_beta(n, schedule.t, cert.g, &target, Which::Pairwise);
    println!("sigma^2 pointwise {:.3}, pairwise {:.3}", point.sigma2, pair.sigma2);

    let data = problem.sample(n, 3);
    for (label, sigma2) in [("non-private", 0.0), ("private", pair.sigma2)] {
        let report = problem.train(&SgdConfig::new(problem.radius(), schedule, sigma2, 3), &data)?;
        let ex = problem.excess_risk(&report.w_priv);
        println!("{label:>11}: excess risk {:.5} ± {:.1e}", ex.value, ex.error);
    }
    Ok(())
}
