//! Excess risk against n from a TOML sweep spec, with a fitted log-log slope.
//!
//! `cargo run --release --example rate_sweep -- examples/configs/sweep.toml out/`

use std::path::PathBuf;

use dpsgd_lab::config::parse_sweep_spec;
use dpsgd_lab::experiments::{emit_report, run_sweep_resumable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let spec_path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/sweep.toml").into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| "sweep-out".into()));
    let spec = parse_sweep_spec(&std::fs::read_to_string(&spec_path)?)?;
    let result = run_sweep_resumable(&spec, &out)?;
    for row in &result.curves[0].rows {
        println!("n = {:>5}: excess {:.4e} ± {:.1e} (sigma^2 {:.3})", row.n, row.mean_excess, row.stderr, row.sigma2);
    }
    match &result.curves[0].fit {
        Some(fit) => println!("slope {:.3}, r^2 {:.3}", fit.slope, fit.r2),
        None => println!("no fit: {}", result.curves[0].fit_error.as_deref().unwrap_or("")),
    }
    for path in emit_report(&result, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
