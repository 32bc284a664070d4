//! The `dpsgd` command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 privacy infeasible,
//! 4 runtime failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    bound_inputs, estimate_generalization_gap, estimate_stability, fit_rate, measure_optimization,
    optimization_bound, stability_bound_for, AnalysisError, StabilityOptions, TrainSetup,
};
use crate::config::{parse_strict, parse_sweep_spec, Config, ConfigError};
use crate::experiments::{dry_run, dry_run_csv, emit_report, run_sweep_resumable, ExperimentError, NoiseMode};
use crate::losses::{builtin_names, probe_self_bounding, Loss, LossBounds};
use crate::numerics::{project_ball, RngState, Vector};
use crate::privacy::{
    audit_meets_target, beta_grid, calibrate_for, find_beta, min_epsilon_for_beta, min_feasible_epsilon,
    verify_run_privacy, Calibration, DpTarget, Which,
};
use crate::problems::{Problem, ProblemSpec};
use crate::sgd::{make_schedule, Recording, Regime, RunReport, Schedule, SgdConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug)]
enum Failure {
    Config(String),
    Infeasible(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Infeasible(_) => EXIT_INFEASIBLE,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Infeasible(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::TooFewRuns { .. } | AnalysisError::TooManyIndices { .. } | AnalysisError::IndexOutOfRange { .. } => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidSpec(_) | ExperimentError::Problem(_) | ExperimentError::JournalMismatch { .. } => {
                Failure::Config(e.to_string())
            }
            ExperimentError::Sgd(crate::sgd::SgdError::RegimeMismatch { .. }) => Failure::Config(e.to_string()),
            ExperimentError::Infeasible { .. } | ExperimentError::Audit { .. } | ExperimentError::AuditExceeded { .. } => {
                Failure::Infeasible(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::Runtime(format!("output error: {e}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "dpsgd",
    version,
    about = "Differentially private projected SGD: noise calibration, training, stability and rate experiments",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 privacy infeasible, 4 runtime failure."
)]
pub struct Cli {
    /// Seed for all randomness (default 0; for `sweep`, overrides the spec's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Noise level for (n, T, G, ε, δ). CSV columns: beta,lambda,sigma2,feasible,eps_achieved.
    Calibrate(CalibrateArgs),
    /// Smallest ε with a feasible β. CSV columns: n,threshold,min_feasible_epsilon.
    MinEps(MinEpsArgs),
    /// One training run; prints the run report as JSON.
    Train(RunArgs),
    /// Paired-trajectory stability estimate. CSV columns: t,estimate,std_err,mc_runs,bound.
    Stability(StabilityArgs),
    /// Generalization gap of the private output. CSV columns: n,gap_mean,std_err,mc_runs.
    Gap(RunArgs),
    /// Measured optimization error against the bounds.
    /// CSV columns: t,measured_opt_sum,opt_sum_stderr,optimization_bound,stability_bound.
    Bounds(RunArgs),
    /// Excess-risk sweep from a TOML spec; writes CSV and JSON under --out.
    Sweep(SweepArgs),
    /// Fast invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    n: usize,
    /// Iterations (default n).
    #[arg(long = "steps", short = 'T')]
    t: Option<u64>,
    #[arg(long)]
    epsilon: f64,
    /// Default 1/n².
    #[arg(long)]
    delta: Option<f64>,
    /// Lipschitz constant.
    #[arg(long, default_value_t = 1.0)]
    g: f64,
    #[arg(long, default_value = "pointwise")]
    which: Which,
    /// Print every β of the scan instead of the best one.
    #[arg(long)]
    grid: bool,
}

#[derive(Debug, Args)]
struct MinEpsArgs {
    #[arg(long)]
    n: usize,
    /// Iterations for the numerical search (default n).
    #[arg(long = "steps", short = 'T')]
    t: Option<u64>,
    /// Default 1/n².
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    g: f64,
    #[arg(long, default_value = "pointwise")]
    which: Which,
}

/// A run configuration: a TOML file, flags, or a file with flag overrides.
#[derive(Debug, Args, Clone, Default)]
struct RunArgs {
    /// TOML run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    feature_bound: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    flip: Option<f64>,
    #[arg(long)]
    signal: Option<f64>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// calibrated or off.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    regime: Option<Regime>,
    #[arg(long)]
    c: Option<f64>,
    /// Hand-picked step size (with --steps).
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "steps", short = 'T')]
    t: Option<u64>,
    /// Monte-Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Random replacement positions per run.
    #[arg(long, default_value_t = 8)]
    indices: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// TOML sweep spec.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory (also holds the resumable journal).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the calibration table only.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, hide = true)]
    corrupt_l: bool,
}

/// Parses `args` (including the program name) and runs the command,
/// writing results to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    let (buf, result) = pool.install(|| {
        let mut buf = Vec::new();
        let r = dispatch(&cli, &mut buf);
        (buf, r)
    });
    if let Err(e) = out.write_all(&buf).and_then(|_| out.flush()) {
        let _ = writeln!(err, "error: output error: {e}");
        return EXIT_RUNTIME;
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Calibrate(a) => calibrate(a, out),
        Command::MinEps(a) => min_eps(a, out),
        Command::Train(a) => train(a, seed, out),
        Command::Stability(a) => stability(a, seed, out),
        Command::Gap(a) => gap(a, seed, out),
        Command::Bounds(a) => bounds(a, seed, out),
        Command::Sweep(a) => sweep(a, cli.seed, out),
        Command::Selftest(a) => selftest(a, out),
    }
}

fn target(epsilon: f64, delta: f64) -> Result<DpTarget, Failure> {
    DpTarget::new(epsilon, delta).map_err(|e| Failure::Config(e.to_string()))
}

fn default_delta(n: usize) -> f64 {
    1.0 / (n as f64 * n as f64)
}

const CALIBRATE_HEADER: &str = "beta,lambda,sigma2,feasible,eps_achieved";

fn calibration_line(c: &Calibration) -> String {
    let achieved = if c.feasible {
        verify_run_privacy(c).map(|a| format!("{:.16e}", a.epsilon_achieved)).unwrap_or_default()
    } else {
        String::new()
    };
    format!("{:.16e},{:.16e},{:.16e},{},{}", c.beta, c.lambda, c.sigma2, c.feasible, achieved)
}

fn calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.n == 0 {
        return Err(Failure::Config("n must be positive".into()));
    }
    if !(a.g > 0.0 && a.g.is_finite()) {
        return Err(Failure::Config(format!("g must be positive and finite, got {}", a.g)));
    }
    let t = a.t.unwrap_or(a.n as u64);
    let tg = target(a.epsilon, a.delta.unwrap_or_else(|| default_delta(a.n)))?;
    let mut s = format!("{CALIBRATE_HEADER}\n");
    let feasible = if a.grid {
        let mut any = false;
        for beta in beta_grid() {
            let c = calibrate_for(a.which, a.n, t, a.g, &tg, beta);
            any |= c.feasible;
            s.push_str(&calibration_line(&c));
            s.push('\n');
        }
        any
    } else {
        let c = find_beta(a.n, t, a.g, &tg, a.which);
        s.push_str(&calibration_line(&c));
        s.push('\n');
        c.feasible
    };
    out.write_all(s.as_bytes()).map_err(io_failure)?;
    if feasible {
        Ok(())
    } else {
        let hint = min_feasible_epsilon(a.n, t, a.g, tg.delta, a.which)
            .map(|e| format!("; smallest feasible epsilon is about {e:.6}"))
            .unwrap_or_default();
        Err(Failure::Infeasible(format!("no feasible beta at epsilon = {}{hint}", a.epsilon)))
    }
}

fn min_eps(a: &MinEpsArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.n == 0 {
        return Err(Failure::Config("n must be positive".into()));
    }
    let delta = a.delta.unwrap_or_else(|| default_delta(a.n));
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Failure::Config(format!("delta must lie in (0,1), got {delta}")));
    }
    let threshold = min_epsilon_for_beta(a.n).map(|e| format!("{e:.16e}")).unwrap_or_default();
    let numeric = min_feasible_epsilon(a.n, a.t.unwrap_or(a.n as u64), a.g, delta, a.which)
        .map(|e| format!("{e:.16e}"))
        .unwrap_or_default();
    writeln!(out, "n,threshold,min_feasible_epsilon\n{},{threshold},{numeric}", a.n).map_err(io_failure)
}

fn load_config(a: &RunArgs) -> Result<Config, Failure> {
    let mut config = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            parse_strict::<Config>(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let mut missing = Vec::new();
            if a.problem.is_none() {
                missing.push("--problem");
            }
            if a.n.is_none() {
                missing.push("--n");
            }
            if a.epsilon.is_none() {
                missing.push("--epsilon");
            }
            if !missing.is_empty() {
                return Err(Failure::Config(format!("without --config, {} required", missing.join(", "))));
            }
            let n = a.n.unwrap_or(0);
            Config::new(
                ProblemSpec::new(a.problem.as_deref().unwrap_or(""), 10, 1.0, 0),
                n,
                a.epsilon.unwrap_or(1.0),
                a.delta.unwrap_or(1e-5),
            )
        }
    };
    let p = &mut config.problem;
    if let Some(v) = &a.problem {
        p.name = v.clone();
    }
    if let Some(v) = a.d {
        p.d = v;
    }
    if let Some(v) = a.feature_bound {
        p.feature_bound = v;
    }
    p.radius = a.radius.or(p.radius);
    p.margin = a.margin.or(p.margin);
    p.label_flip = a.flip.or(p.label_flip);
    p.signal = a.signal.or(p.signal);
    if let Some(v) = &a.loss {
        p.loss = Some(v.clone());
    }
    if let Some(v) = a.n {
        config.n = v;
    }
    if let Some(v) = a.epsilon {
        config.privacy.epsilon = v;
    }
    if let Some(v) = a.delta {
        config.privacy.delta = v;
    }
    if let Some(v) = &a.noise {
        config.privacy.noise = match v.as_str() {
            "calibrated" => NoiseMode::Calibrated,
            "off" => NoiseMode::Off,
            other => return Err(Failure::Config(format!("--noise must be calibrated or off, got '{other}'"))),
        };
    }
    let s = &mut config.schedule;
    if a.regime.is_some() {
        s.regime = a.regime;
    }
    s.c = a.c.or(s.c);
    s.eta = a.eta.or(s.eta);
    s.t = a.t.or(s.t);
    if let Some(v) = a.runs {
        config.mc_runs = v;
    }
    let v = config.violations();
    if !v.is_empty() {
        return Err(ConfigError::Invalid(v).into());
    }
    Ok(config)
}

/// Problem, schedule and noise of a run config.
struct Plan {
    config: Config,
    problem: Problem,
    schedule: Schedule,
    sigma2: f64,
    calibration: Option<Calibration>,
    epsilon_achieved: Option<f64>,
}

fn plan(config: Config) -> Result<Plan, Failure> {
    let problem = config.problem.build().map_err(|e| Failure::Config(format!("problem: {e}")))?;
    let cert = *problem.loss().certificate();
    if let Some(a) = config.schedule.alpha {
        if a != cert.smoothness.alpha() {
            return Err(Failure::Config(format!(
                "schedule: alpha = {a} does not match the loss '{}' (alpha = {})",
                problem.loss().name(),
                cert.smoothness.alpha()
            )));
        }
    }
    let s = &config.schedule;
    let p = &config.privacy;
    let schedule = match (s.eta, s.t, s.effective_regime()) {
        (Some(eta), Some(t), _) => Schedule::fixed(eta, t),
        (_, _, Some(regime)) => make_schedule(
            regime,
            config.n,
            problem.dim(),
            p.epsilon,
            p.delta,
            &cert.smoothness,
            s.c.unwrap_or(1.0),
        ),
        _ => unreachable!("validated configs name a regime or a fixed schedule"),
    }
    .map_err(|e| Failure::Config(format!("schedule: {e}")))?;
    let which = if problem.is_pairwise() { Which::Pairwise } else { Which::Pointwise };
    let (sigma2, calibration, epsilon_achieved) = match p.noise {
        NoiseMode::Off => (0.0, None, None),
        NoiseMode::Calibrated => {
            let tg = target(p.epsilon, p.delta)?;
            let cal = find_beta(config.n, schedule.t, cert.g, &tg, which);
            if !cal.feasible {
                let hint = min_feasible_epsilon(config.n, schedule.t, cert.g, p.delta, which)
                    .map(|e| format!("; smallest feasible epsilon is about {e:.6}"))
                    .unwrap_or_default();
                return Err(Failure::Infeasible(format!(
                    "no feasible calibration for n = {}, T = {}, epsilon = {}{hint}",
                    config.n, schedule.t, p.epsilon
                )));
            }
            let audit = verify_run_privacy(&cal).map_err(|e| Failure::Infeasible(e.to_string()))?;
            if !audit_meets_target(&audit, &tg) {
                return Err(Failure::Infeasible(format!(
                    "audit gives epsilon {} above the target {}",
                    audit.epsilon_achieved, p.epsilon
                )));
            }
            (cal.sigma2, Some(cal), Some(audit.epsilon_achieved))
        }
    };
    Ok(Plan { config, problem, schedule, sigma2, calibration, epsilon_achieved })
}

impl Plan {
    fn setup(&self, seed: u64) -> TrainSetup {
        TrainSetup { n: self.config.n, schedule: self.schedule, sigma2: self.sigma2, seed }
    }
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    problem: &'a str,
    loss: &'a str,
    n: usize,
    seed: u64,
    schedule: &'a Schedule,
    calibration: &'a Option<Calibration>,
    epsilon_achieved: Option<f64>,
    empirical_risk: f64,
    population_risk: f64,
    excess_risk: f64,
    oracle_error: f64,
    report: &'a RunReport,
}

fn train(a: &RunArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let plan = plan(load_config(a)?)?;
    let data = plan.problem.sample(plan.config.n, seed);
    let config = SgdConfig::new(plan.problem.radius(), plan.schedule, plan.sigma2, seed).with_record(Recording::Auto);
    let report = plan.problem.train(&config, &data).map_err(|e| Failure::Runtime(e.to_string()))?;
    let emp = plan.problem.empirical_risk(&report.w_priv, &data).map_err(|e| Failure::Runtime(e.to_string()))?;
    let pop = plan.problem.population_risk_with_error(&report.w_priv);
    let excess = plan.problem.excess_risk(&report.w_priv);
    let body = TrainOutput {
        problem: plan.problem.name(),
        loss: plan.problem.loss().name(),
        n: plan.config.n,
        seed,
        schedule: &plan.schedule,
        calibration: &plan.calibration,
        epsilon_achieved: plan.epsilon_achieved,
        empirical_risk: emp,
        population_risk: pop.value,
        excess_risk: excess.value,
        oracle_error: excess.error,
        report: &report,
    };
    let json = serde_json::to_string_pretty(&body).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(out, "{json}").map_err(io_failure)
}

fn stability(a: &StabilityArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let plan = plan(load_config(&a.run)?)?;
    let t = plan.schedule.t;
    let mut opts = StabilityOptions::new(plan.config.mc_runs);
    opts.random_indices = a.indices;
    opts.extra_steps = vec![t / 4, t / 2];
    opts.collect_risks = true;
    let est = estimate_stability(&plan.problem, &plan.setup(seed), &opts)?;
    let m = crate::analysis::OptimizationMeasurement {
        t,
        mc_runs: est.mc_runs,
        mean_risks: est.mean_risks.clone().unwrap_or_default(),
        mean_powered_risks: est.mean_powered_risks.clone(),
        f_star_empirical: 0.0,
        opt_sums: Vec::new(),
    };
    let inputs = bound_inputs(&plan.problem, &plan.setup(seed), &m);
    let mut s = String::from("t,estimate,std_err,mc_runs,bound\n");
    let rows = est.at_steps.iter().copied().chain(std::iter::once((est.t, est.value, est.std_err)));
    for (step, value, se) in rows {
        let bound = stability_bound_for(&inputs, step, plan.problem.is_pairwise())?;
        let _ = writeln!(s, "{step},{value:.16e},{se:.16e},{},{bound:.16e}", est.mc_runs);
    }
    out.write_all(s.as_bytes()).map_err(io_failure)
}

fn gap(a: &RunArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let plan = plan(load_config(a)?)?;
    let g = estimate_generalization_gap(&plan.problem, &plan.setup(seed), plan.config.mc_runs)?;
    writeln!(out, "n,gap_mean,std_err,mc_runs\n{},{:.16e},{:.16e},{}", plan.config.n, g.mean, g.std_err, g.mc_runs)
        .map_err(io_failure)
}

fn bounds(a: &RunArgs, seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let plan = plan(load_config(a)?)?;
    let t = plan.schedule.t;
    let setup = plan.setup(seed);
    let m = measure_optimization(&plan.problem, &setup, plan.config.mc_runs, &[t / 4, t / 2])?;
    let inputs = bound_inputs(&plan.problem, &setup, &m);
    let smooth = plan.problem.loss().certificate().smoothness.is_smooth();
    let mut s = String::from("t,measured_opt_sum,opt_sum_stderr,optimization_bound,stability_bound\n");
    for &(step, mean, se) in &m.opt_sums {
        let ob = optimization_bound(&inputs, step, smooth)?;
        let sb = stability_bound_for(&inputs, step, plan.problem.is_pairwise())?;
        let _ = writeln!(s, "{step},{mean:.16e},{se:.16e},{ob:.16e},{sb:.16e}");
    }
    out.write_all(s.as_bytes()).map_err(io_failure)
}

fn sweep(a: &SweepArgs, seed: Option<u64>, out: &mut dyn Write) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.spec).map_err(|e| Failure::Config(format!("{}: {e}", a.spec.display())))?;
    let mut spec = parse_sweep_spec(&text).map_err(|e| Failure::Config(format!("{}: {e}", a.spec.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if a.dry_run {
        let rows = dry_run(&spec)?;
        return out.write_all(dry_run_csv(&rows).as_bytes()).map_err(io_failure);
    }
    let Some(dir) = &a.out else {
        return Err(Failure::Config("sweep needs --out (or --dry-run)".into()));
    };
    let result = run_sweep_resumable(&spec, dir)?;
    let files = emit_report(&result, dir)?;
    let mut s = String::new();
    for (curve, f) in result.curves.iter().zip(&files) {
        match &curve.fit {
            Some(fit) => {
                let _ = writeln!(s, "c={} slope={:.6} r2={:.6} -> {}", curve.c, fit.slope, fit.r2, f.display());
            }
            None => {
                let _ = writeln!(
                    s,
                    "c={} no fit ({}) -> {}",
                    curve.c,
                    curve.fit_error.as_deref().unwrap_or("unknown"),
                    f.display()
                );
            }
        }
    }
    out.write_all(s.as_bytes()).map_err(io_failure)
}

/// Name, outcome and detail of one self-test check.
struct Check {
    name: &'static str,
    result: Result<String, String>,
    seconds: f64,
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    let start = Instant::now();
    let result = f();
    Check { name, result, seconds: start.elapsed().as_secs_f64() }
}

fn check_projection() -> Result<String, String> {
    let mut rng = RngState::new(1, 9).start();
    for k in 0..2000 {
        let d = 1 + k % 7;
        let radius = 0.1 + 3.0 * rng.uniform();
        let v: Vec<f64> = (0..d).map(|_| 4.0 * rng.standard_normal()).collect();
        let w = Vector::new(v).map_err(|e| e.to_string())?;
        let p = project_ball(&w, radius).map_err(|e| e.to_string())?;
        if p.norm() > radius * (1.0 + 1e-12) {
            return Err(format!("projection left the ball: {} > {radius}", p.norm()));
        }
        let pp = project_ball(&p, radius).map_err(|e| e.to_string())?;
        if pp.dist_sq(&p) > 1e-24 {
            return Err("projection is not idempotent".into());
        }
        if w.norm() <= radius && p != w {
            return Err("projection moved an interior point".into());
        }
    }
    Ok("2000 points".into())
}

fn check_self_bounding(corrupt: bool) -> Result<String, String> {
    let bounds = LossBounds::new(1.0, 2.0, 1.0).map_err(|e| e.to_string())?;
    let mut total = 0;
    let mut failing = Vec::new();
    for (k, name) in builtin_names().into_iter().enumerate() {
        let mut loss = Loss::by_name(name, &bounds).map_err(|e| e.to_string())?;
        if corrupt {
            loss = loss.with_scaled_l(0.5);
        }
        let r = probe_self_bounding(&loss, &bounds, 5, 1000, k as u64);
        total += r.probes;
        if r.violations > 0 {
            failing.push(format!("{name} ({} violations)", r.violations));
        }
    }
    if failing.is_empty() {
        Ok(format!("{total} probes"))
    } else {
        Err(format!("violations: {}", failing.join(", ")))
    }
}

fn check_accountant() -> Result<String, String> {
    let mut rng = RngState::new(2, 9).start();
    let mut audited = 0;
    for _ in 0..300 {
        let n = (50.0 * (2000f64).powf(rng.uniform())) as usize;
        let t = n as u64 * (1 + (rng.uniform() * n as f64) as u64);
        let eps = 0.5 * 16f64.powf(rng.uniform());
        let delta = if rng.uniform() < 0.5 { 1e-5 } else { default_delta(n) };
        let which = if rng.uniform() < 0.5 { Which::Pointwise } else { Which::Pairwise };
        let tg = DpTarget::new(eps, delta).map_err(|e| e.to_string())?;
        let cal = find_beta(n, t, 1.0, &tg, which);
        if cal.feasible {
            let audit = verify_run_privacy(&cal).map_err(|e| format!("n={n} T={t} eps={eps}: {e}"))?;
            if !audit_meets_target(&audit, &tg) {
                return Err(format!("n={n} T={t}: achieved {} > {eps}", audit.epsilon_achieved));
            }
            audited += 1;
        }
    }
    Ok(format!("{audited} feasible calibrations audited"))
}

fn check_fit() -> Result<String, String> {
    let ns = [128.0, 256.0, 512.0, 1024.0, 2048.0, 4096.0];
    for (slope, scale) in [(-0.5, 4.0), (-1.0, 3.0), (-2.0 / 3.0, 0.7)] {
        let pts: Vec<(f64, f64)> = ns.iter().map(|&n: &f64| (n, scale * n.powf(slope))).collect();
        let f = fit_rate(&pts).map_err(|e| e.to_string())?;
        if (f.slope - slope).abs() > 1e-9 {
            return Err(format!("planted slope {slope}, fitted {}", f.slope));
        }
    }
    Ok("3 planted slopes".into())
}

fn check_determinism() -> Result<String, String> {
    let problem = crate::problems::realizable_least_squares(4, 1.0, 2.0, 3).map_err(|e| e.to_string())?;
    let data = problem.sample(64, 5);
    let cfg = SgdConfig::new(problem.radius(), Schedule::fixed(0.1, 64).map_err(|e| e.to_string())?, 1.0, 7);
    let a = problem.train(&cfg, &data).map_err(|e| e.to_string())?;
    let b = problem.train(&cfg, &data).map_err(|e| e.to_string())?;
    if a.w_priv != b.w_priv || a.w_last != b.w_last {
        return Err("identical seeds gave different iterates".into());
    }
    Ok("paired runs identical".into())
}

fn check_schedules() -> Result<String, String> {
    let holder = |alpha: f64| crate::losses::SmoothnessClass::holder(alpha, 1.0).map_err(|e| e.to_string());
    for n in (64..=1024).step_by(64) {
        let s0 = make_schedule(Regime::HolderLownoise, n, 10, 8.0, 1e-5, &holder(0.0)?, 1.0).map_err(|e| e.to_string())?;
        if s0.t != (n * n) as u64 {
            return Err(format!("alpha=0, n={n}: T={}", s0.t));
        }
    }
    Ok("holder_lownoise T at alpha = 0".into())
}

fn selftest(a: &SelftestArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let checks = vec![
        timed("projection", check_projection),
        timed("self_bounding", || check_self_bounding(a.corrupt_l)),
        timed("accountant_grid", check_accountant),
        timed("fit_rate_planted", check_fit),
        timed("schedule_shape", check_schedules),
        timed("determinism", check_determinism),
    ];
    let mut s = String::new();
    let mut failed = Vec::new();
    for c in &checks {
        let (tag, detail) = match &c.result {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => {
                failed.push(c.name);
                ("FAIL", d.as_str())
            }
        };
        let _ = writeln!(s, "{tag} {:<18} {:>8.3}s  {detail}", c.name, c.seconds);
    }
    out.write_all(s.as_bytes()).map_err(io_failure)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("selftest failed: {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("dpsgd").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn calibrate_prints_csv() {
        let (code, out, _) = run_str(&["calibrate", "--n", "1000", "--epsilon", "1", "--delta", "1e-5"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("beta,lambda,sigma2,feasible,eps_achieved\n"));
        let (code, _, err) = run_str(&["calibrate", "--n", "100", "--epsilon", "0.01", "--delta", "1e-5"]);
        assert_eq!(code, EXIT_INFEASIBLE, "{err}");
    }

    #[test]
    fn config_errors_exit_2() {
        let (code, _, err) = run_str(&["train", "--problem", "realizable_least_squares", "--n", "10", "--epsilon", "1", "--delta", "1.5"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("delta must lie in (0,1)"), "{err}");
        let (code, _, _) = run_str(&["no-such-command"]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn selftest_and_negative_control() {
        let (code, out, _) = run_str(&["selftest"]);
        assert_eq!(code, 0, "{out}");
        assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 6);
        let (code, out, _) = run_str(&["selftest", "--corrupt-l"]);
        assert_ne!(code, 0);
        assert!(out.lines().any(|l| l.starts_with("FAIL self_bounding")), "{out}");
    }

    #[test]
    fn train_is_deterministic() {
        let args = [
            "train", "--problem", "realizable_least_squares", "--d", "3", "--n", "64", "--epsilon", "8",
            "--delta", "1e-5", "--seed", "3",
        ];
        let (c1, o1, e1) = run_str(&args);
        let (c2, o2, _) = run_str(&args);
        assert_eq!((c1, c2), (0, 0), "{e1}");
        assert_eq!(o1, o2);
    }
}
