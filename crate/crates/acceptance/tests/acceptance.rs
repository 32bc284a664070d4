use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dpsgd_lab::analysis::{
    bound_inputs, estimate_stability, measure_optimization, optimization_bound, stability_bound_smooth, BoundInputs,
    StabilityEstimate, StabilityOptions, TrainSetup,
};
use dpsgd_lab::experiments::{run_sweep, NoiseMode, SweepResult, SweepSpec};
use dpsgd_lab::losses::{builtin_names, probe_self_bounding, Loss, LossBounds, SmoothnessClass};
use dpsgd_lab::privacy::{find_beta, min_epsilon_for_beta, verify_run_privacy, DpTarget, Which};
use dpsgd_lab::problems::{Problem, ProblemSpec};
use dpsgd_lab::sgd::{make_schedule, Regime};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    limit: Duration,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria = [
        Criterion { id: 1, limit: Duration::from_secs(5), check: accountant_grid },
        Criterion { id: 2, limit: Duration::from_secs(2), check: threshold_sufficiency },
        Criterion { id: 3, limit: Duration::from_secs(5), check: self_bounding },
        Criterion { id: 4, limit: Duration::from_secs(120), check: optimization_error },
        Criterion { id: 5, limit: Duration::from_secs(600), check: stability_trend },
        Criterion { id: 6, limit: Duration::from_secs(1800), check: general_rate },
        Criterion { id: 7, limit: Duration::from_secs(2400), check: lownoise_rate },
        Criterion { id: 8, limit: Duration::from_secs(900), check: privacy_scaling },
        Criterion { id: 9, limit: Duration::from_secs(1), check: holder_horizons },
        Criterion { id: 10, limit: Duration::from_secs(60), check: cli_determinism },
    ];
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.check)();
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if took <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {:.0}s budget", c.limit.as_secs_f64())),
            Err(d) => (false, d),
        };
        println!("criterion {} {} ({:.1}s): {detail}", c.id, if pass { "PASS" } else { "FAIL" }, took.as_secs_f64());
        if !pass {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
}

fn accountant_grid() -> Outcome {
    let mut tuples = 0;
    let mut feasible = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for (i, n) in log_grid(50.0, 1e5, 20).into_iter().map(|x| x.round() as usize).enumerate() {
        let nf = n as f64;
        for t in [n as u64, nf.powf(1.5).ceil() as u64, (n as u64) * (n as u64)] {
            for eps in log_grid(0.5, 8.0, 9) {
                for delta in [1.0 / (nf * nf), 1e-5] {
                    let which = if (i + tuples) % 2 == 0 { Which::Pointwise } else { Which::Pairwise };
                    let target = DpTarget::new(eps, delta).map_err(|e| e.to_string())?;
                    let cal = find_beta(n, t, 1.0, &target, which);
                    tuples += 1;
                    if !cal.feasible {
                        continue;
                    }
                    feasible += 1;
                    let audit = verify_run_privacy(&cal).map_err(|e| format!("n={n} T={t} eps={eps}: {e}"))?;
                    worst = worst.max(audit.epsilon_achieved - eps);
                    if audit.epsilon_achieved > eps + 1e-12 {
                        return Err(format!("n={n} T={t} eps={eps} delta={delta}: achieved {}", audit.epsilon_achieved));
                    }
                }
            }
        }
    }
    ensure(
        tuples >= 1000 && feasible > 0,
        format!("{tuples} tuples, {feasible} feasible, max(eps_achieved - eps) = {worst:.3e}"),
    )
}

fn threshold_sufficiency() -> Outcome {
    let mut checked = 0;
    for n in [100usize, 1000, 10_000] {
        let nf = n as f64;
        let threshold = min_epsilon_for_beta(n).map_err(|e| e.to_string())?;
        for eps in log_grid(1.01 * threshold, 100.0 * threshold, 40) {
            let target = DpTarget::new(eps, 1.0 / (nf * nf)).map_err(|e| e.to_string())?;
            if !find_beta(n, n as u64, 1.0, &target, Which::Pointwise).feasible {
                return Err(format!("n={n}: infeasible at eps={eps} (threshold {threshold:.6})"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} (n, eps) pairs above 1.01 x threshold all feasible"))
}

fn self_bounding() -> Outcome {
    let bounds = LossBounds::new(1.0, 2.0, 1.0).map_err(|e| e.to_string())?;
    let mut caught = Vec::new();
    let mut controls = 0;
    for (k, name) in builtin_names().into_iter().enumerate() {
        let loss = Loss::by_name(name, &bounds).map_err(|e| e.to_string())?;
        let report = probe_self_bounding(&loss, &bounds, 5, 10_000, k as u64);
        if report.violations > 0 {
            return Err(format!("{name}: {} violations, worst ratio {}", report.violations, report.worst_ratio));
        }
        let halved = probe_self_bounding(&loss.with_scaled_l(0.5), &bounds, 5, 10_000, k as u64);
        controls += halved.violations;
        if halved.violations > 0 {
            caught.push(name);
        }
    }
    ensure(
        controls >= 1,
        format!("0 violations over {} losses; halved L gives {controls} violations ({})", builtin_names().len(), caught.join(" ")),
    )
}

fn calibrated_setup(problem: &Problem, n: usize, epsilon: f64, delta: f64, seed: u64) -> Result<TrainSetup, String> {
    let cert = problem.loss().certificate();
    let schedule = make_schedule(Regime::SmoothGeneral, n, problem.dim(), epsilon, delta, &cert.smoothness, 1.0)
        .map_err(|e| e.to_string())?;
    let target = DpTarget::new(epsilon, delta).map_err(|e| e.to_string())?;
    let cal = find_beta(n, schedule.t, cert.g, &target, Which::Pointwise);
    if !cal.feasible {
        return Err(format!("no feasible calibration at n={n}, eps={epsilon}"));
    }
    Ok(TrainSetup { n, schedule, sigma2: cal.sigma2, seed })
}

fn least_squares() -> Result<Problem, String> {
    ProblemSpec::new("realizable_least_squares", 10, 1.0, 1).build().map_err(|e| e.to_string())
}

fn optimization_error() -> Outcome {
    let problem = least_squares()?;
    let setup = calibrated_setup(&problem, 200, 8.0, 1e-5, 4)?;
    let m = measure_optimization(&problem, &setup, 50, &[]).map_err(|e| e.to_string())?;
    let inputs = bound_inputs(&problem, &setup, &m);
    let bound = optimization_bound(&inputs, setup.schedule.t, true).map_err(|e| e.to_string())?;
    let &(t, mean, se) = m.opt_sums.last().ok_or("no optimization sums")?;
    ensure(
        mean <= 2.0 * bound,
        format!("T={t} sigma2={:.4}: measured {mean:.4e} (se {se:.1e}) vs bound {bound:.4e}", setup.sigma2),
    )
}

fn stability_at(problem: &Problem, n: usize) -> Result<(StabilityEstimate, f64), String> {
    let setup = calibrated_setup(problem, n, 8.0, 1e-5, 9)?;
    let mut opts = StabilityOptions::new(200);
    opts.random_indices = 8;
    opts.collect_risks = true;
    let est = estimate_stability(problem, &setup, &opts).map_err(|e| e.to_string())?;
    let risks = est.mean_risks.clone().ok_or("no risks collected")?;
    let inputs = BoundInputs::from_certificate(
        problem.loss().certificate(),
        n,
        setup.schedule.t,
        problem.dim(),
        setup.schedule.eta,
        setup.sigma2,
        problem.w_star().norm(),
    )
    .with_risks(risks);
    let bound = stability_bound_smooth(&inputs, setup.schedule.t).map_err(|e| e.to_string())?;
    Ok((est, bound))
}

fn stability_trend() -> Outcome {
    let problem = least_squares()?;
    let (small, b_small) = stability_at(&problem, 50)?;
    let (large, b_large) = stability_at(&problem, 200)?;
    let gap = small.value - large.value;
    let sep = 2.0 * (small.std_err.powi(2) + large.std_err.powi(2)).sqrt();
    let under = |e: &StabilityEstimate, b: f64| e.value <= b * (1.0 + 2.0 * e.std_err / e.value);
    ensure(
        gap > sep && under(&small, b_small) && under(&large, b_large),
        format!(
            "n=50: {:.4e} ± {:.1e} (bound {b_small:.3e}); n=200: {:.4e} ± {:.1e} (bound {b_large:.3e}); gap {gap:.3e} vs 2 sigma {sep:.3e}",
            small.value, small.std_err, large.value, large.std_err
        ),
    )
}

const N_GRID: [usize; 6] = [128, 256, 512, 1024, 2048, 4096];

fn sweep(spec: &SweepSpec) -> Result<SweepResult, String> {
    run_sweep(spec).map_err(|e| format!("{}: {e}", spec.problem.name))
}

fn fit_summary(result: &SweepResult) -> Result<(f64, f64), String> {
    let curve = &result.curves[0];
    let fit = curve.fit.as_ref().ok_or_else(|| curve.fit_error.clone().unwrap_or_default())?;
    Ok((fit.slope, fit.r2))
}

fn general_rate() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["noisy_logistic", "noisy_auc"] {
        let problem = ProblemSpec::new(name, 10, 2.0, 3).with_radius(1.0).with_flip(0.1).with_signal(4.0);
        let spec = SweepSpec::over_n(problem, Regime::SmoothGeneral, N_GRID.to_vec(), 8.0, 1e-5)
            .with_runs(50)
            .with_seed(6)
            .with_noise(NoiseMode::Off);
        let (slope, r2) = fit_summary(&sweep(&spec)?)?;
        ok &= (slope + 0.5).abs() <= 0.15 && r2 >= 0.9;
        details.push(format!("{name}: slope {slope:.3}, r2 {r2:.3}"));
    }
    ensure(ok, details.join("; "))
}

fn lownoise_rate() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["realizable_least_squares", "realizable_pairwise"] {
        let spec = SweepSpec::over_n(ProblemSpec::new(name, 10, 1.0, 3), Regime::SmoothLownoise, N_GRID.to_vec(), 8.0, 1e-5)
            .with_runs(50)
            .with_seed(7);
        let (slope, r2) = fit_summary(&sweep(&spec)?)?;
        ok &= slope <= -0.8;
        details.push(format!("{name}: slope {slope:.3}, r2 {r2:.3}"));
    }
    ensure(ok, details.join("; ") + " (target slope <= -0.8)")
}

fn privacy_scaling() -> Outcome {
    let spec = SweepSpec::over_epsilon(
        ProblemSpec::new("realizable_least_squares", 10, 1.0, 3),
        Regime::SmoothLownoise,
        1024,
        vec![0.5, 1.0, 2.0, 4.0, 8.0],
        1e-5,
    )
    .with_runs(50)
    .with_seed(8);
    let (slope, r2) = fit_summary(&sweep(&spec)?)?;
    ensure((slope - 1.0).abs() <= 0.3, format!("slope vs 1/eps {slope:.3}, r2 {r2:.3} (target 1 ± 0.3)"))
}

/// Smallest `m` with `m^q ≥ n^p`.
fn ceil_root(n: u128, p: u32, q: u32) -> u64 {
    let target = n.pow(p);
    let mut m = (n as f64).powf(p as f64 / q as f64).floor() as u128;
    while m > 0 && (m - 1).pow(q) >= target {
        m -= 1;
    }
    while m.pow(q) < target {
        m += 1;
    }
    m as u64
}

fn holder_horizons() -> Outcome {
    for n in 64..=1024usize {
        for (alpha, p, q) in [(0.0, 2, 1), (0.5, 4, 3)] {
            let class = SmoothnessClass::holder(alpha, 1.0).map_err(|e| e.to_string())?;
            let s = make_schedule(Regime::HolderLownoise, n, 10, 1.0, 1e-5, &class, 1.0).map_err(|e| e.to_string())?;
            let want = ceil_root(n as u128, p, q);
            if s.t != want {
                return Err(format!("n={n} alpha={alpha}: T={} expected {want}", s.t));
            }
        }
    }
    Ok(format!("T = n^2 and ceil(n^(4/3)) for all {} values of n", 1024 - 64 + 1))
}

fn cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = dpsgd_lab::cli::run(std::iter::once("dpsgd").chain(args.iter().copied()), &mut out, &mut err);
    (code, out)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.file_name() != "journal.csv")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap_or_default()))
        .collect();
    files.sort();
    files
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = tmp.path().join("sweep.toml");
    std::fs::write(
        &spec,
        "regime = \"smooth_general\"\nn_values = [32, 64, 128, 256]\nepsilon = 8.0\ndelta = 1e-5\nmc_runs = 20\n\
         [problem]\nname = \"noisy_logistic\"\nd = 3\n",
    )
    .map_err(|e| e.to_string())?;
    let spec = spec.to_str().ok_or("non-UTF-8 temp path")?.to_string();
    let run = ["--problem", "noisy_logistic", "--d", "3", "--n", "64", "--epsilon", "8", "--delta", "1e-5", "--runs", "20", "--seed", "5"];
    let with = |cmd: &str| std::iter::once(cmd).chain(run).map(String::from).collect::<Vec<_>>();
    let commands: Vec<Vec<String>> = vec![
        ["calibrate", "--n", "500", "--epsilon", "2", "--delta", "1e-5"].map(String::from).to_vec(),
        ["min-eps", "--n", "500"].map(String::from).to_vec(),
        with("train"),
        with("stability"),
        with("gap"),
        with("bounds"),
        vec!["sweep".into(), "--spec".into(), spec.clone(), "--dry-run".into()],
    ];
    for args in &commands {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let (c1, o1) = cli(&args);
        let (c2, o2) = cli(&args);
        if c1 != 0 || c1 != c2 || o1 != o2 {
            return Err(format!("{}: exit {c1}/{c2}, output identical: {}", args[0], o1 == o2));
        }
    }
    let verdicts = |o: &[u8]| -> Vec<String> {
        String::from_utf8_lossy(o).lines().map(|l| l.split_whitespace().take(2).collect::<Vec<_>>().join(" ")).collect()
    };
    let (s1, v1) = cli(&["selftest"]);
    let (s2, v2) = cli(&["selftest"]);
    if s1 != 0 || s1 != s2 || verdicts(&v1) != verdicts(&v2) {
        return Err(format!("selftest: exit {s1}/{s2}, verdicts differ: {}", verdicts(&v1) != verdicts(&v2)));
    }
    let mut outs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("out{k}"));
        let (code, _) = cli(&["sweep", "--spec", &spec, "--out", out.to_str().ok_or("non-UTF-8 temp path")?]);
        if code != 0 {
            return Err(format!("sweep exited {code}"));
        }
        outs.push(dir_bytes(&out));
    }
    ensure(outs[0] == outs[1] && !outs[0].is_empty(), format!("{} subcommands byte-identical on re-run; selftest verdicts stable", commands.len() + 1))
}
