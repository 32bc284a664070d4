//! Excess-risk sweeps over `n` (or over ε at fixed `n`), with rate fits,
//! CSV/JSON reports and a resumable per-run journal.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{fit_rate, RateFit};
use crate::numerics::{derive_seed, mean_and_stderr};
use crate::privacy::{
    audit_meets_target, find_beta, min_epsilon_for_beta, min_feasible_epsilon, verify_run_privacy, Calibration,
    DpTarget, PrivacyError, Which,
};
use crate::problems::{Problem, ProblemError, ProblemSpec};
use crate::sgd::{make_schedule, Recording, Regime, Schedule, SgdConfig, SgdError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid sweep spec:\n  {}", .0.join("\n  "))]
    InvalidSpec(Vec<String>),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Sgd(#[from] SgdError),
    #[error("privacy calibration infeasible at n = {n}, T = {t}, epsilon = {epsilon}{}", guidance(*.min_feasible, *.threshold))]
    Infeasible { n: usize, t: u64, epsilon: f64, min_feasible: Option<f64>, threshold: Option<f64> },
    #[error("privacy audit failed at n = {n}: {source}")]
    Audit { n: usize, source: PrivacyError },
    #[error("privacy audit at n = {n} gives epsilon {achieved} above the target {target}")]
    AuditExceeded { n: usize, achieved: f64, target: f64 },
    #[error("oracle inconsistency at n = {n}, run {run}: excess risk {excess} is below -3 x oracle error {error}")]
    Oracle { n: usize, run: usize, excess: f64, error: f64 },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: malformed journal record: {message}")]
    Journal { path: PathBuf, line: usize, message: String },
    #[error("{path} belongs to a different spec (hash {found}, expected {expected})")]
    JournalMismatch { path: PathBuf, expected: String, found: String },
}

fn guidance(min_feasible: Option<f64>, threshold: Option<f64>) -> String {
    let mut s = String::new();
    match min_feasible {
        Some(e) => {
            let _ = write!(s, "; smallest feasible epsilon here is about {e:.6}");
        }
        None => s.push_str("; no epsilon up to 1e4 is feasible"),
    }
    if let Some(t) = threshold {
        let _ = write!(s, " (the T = n, delta = 1/n^2 sufficient threshold is {t:.6})");
    }
    s
}

fn io_err(path: &Path, e: std::io::Error) -> ExperimentError {
    ExperimentError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Whether the runs add calibrated DP noise or none (a non-private baseline
/// on the same schedule).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Calibrated,
    Off,
}

/// A sweep over `n_values`, or over `epsilon_values` at a single `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub problem: ProblemSpec,
    pub regime: Regime,
    pub n_values: Vec<usize>,
    /// Target ε of an n-sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// When non-empty the sweep runs over ε at the single n in `n_values`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilon_values: Vec<f64>,
    pub delta: f64,
    #[serde(default = "default_mc_runs")]
    pub mc_runs: usize,
    /// Step-size multipliers; one curve each.
    #[serde(default = "default_c_values")]
    pub c_values: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_mc_runs() -> usize {
    50
}

fn default_c_values() -> Vec<f64> {
    vec![1.0]
}

pub const MIN_SWEEP_POINTS: usize = 4;
pub const MIN_SWEEP_RUNS: usize = 20;

/// Axis a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    Epsilon,
}

impl SweepSpec {
    /// An n-sweep with default runs and a single `c = 1`.
    pub fn over_n(problem: ProblemSpec, regime: Regime, n_values: Vec<usize>, epsilon: f64, delta: f64) -> Self {
        SweepSpec {
            problem,
            regime,
            n_values,
            epsilon: Some(epsilon),
            epsilon_values: Vec::new(),
            delta,
            mc_runs: default_mc_runs(),
            c_values: default_c_values(),
            noise: NoiseMode::Calibrated,
            seed: 0,
        }
    }

    /// An ε-sweep at fixed `n`.
    pub fn over_epsilon(problem: ProblemSpec, regime: Regime, n: usize, epsilons: Vec<f64>, delta: f64) -> Self {
        SweepSpec { epsilon: None, epsilon_values: epsilons, ..SweepSpec::over_n(problem, regime, vec![n], 1.0, delta) }
    }

    pub fn with_runs(mut self, mc_runs: usize) -> Self {
        self.mc_runs = mc_runs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_c_values(mut self, c: Vec<f64>) -> Self {
        self.c_values = c;
        self
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn axis(&self) -> Axis {
        if self.epsilon_values.is_empty() {
            Axis::N
        } else {
            Axis::Epsilon
        }
    }

    /// Every violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = self.problem.violations().iter().map(|e| format!("problem: {e}")).collect();
        match self.axis() {
            Axis::N => {
                if self.n_values.len() < MIN_SWEEP_POINTS {
                    out.push(format!(
                        "n_values needs at least {MIN_SWEEP_POINTS} entries, got {}",
                        self.n_values.len()
                    ));
                }
                if !self.n_values.windows(2).all(|w| w[0] < w[1]) {
                    out.push("n_values must be strictly increasing".into());
                }
                match self.epsilon {
                    None => out.push("epsilon is required for a sweep over n".into()),
                    Some(e) if !(e > 0.0 && e.is_finite()) => out.push(format!("epsilon must be positive, got {e}")),
                    _ => {}
                }
            }
            Axis::Epsilon => {
                if self.n_values.len() != 1 {
                    out.push("a sweep over epsilon_values takes exactly one n in n_values".into());
                }
                if self.epsilon.is_some() {
                    out.push("epsilon and epsilon_values are mutually exclusive".into());
                }
                if self.epsilon_values.len() < MIN_SWEEP_POINTS {
                    out.push(format!(
                        "epsilon_values needs at least {MIN_SWEEP_POINTS} entries, got {}",
                        self.epsilon_values.len()
                    ));
                }
                if !self.epsilon_values.windows(2).all(|w| w[0] < w[1]) {
                    out.push("epsilon_values must be strictly increasing".into());
                }
                for &e in &self.epsilon_values {
                    if !(e > 0.0 && e.is_finite()) {
                        out.push(format!("epsilon values must be positive, got {e}"));
                    }
                }
            }
        }
        if self.n_values.contains(&0) {
            out.push("n values must be positive".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            out.push(format!("delta must lie in (0,1), got {}", self.delta));
        }
        if self.mc_runs < MIN_SWEEP_RUNS {
            out.push(format!("mc_runs must be at least {MIN_SWEEP_RUNS}, got {}", self.mc_runs));
        }
        if self.c_values.is_empty() {
            out.push("c_values must not be empty".into());
        }
        for &c in &self.c_values {
            if !(c > 0.0 && c.is_finite()) {
                out.push(format!("c values must be positive, got {c}"));
            }
        }
        out
    }

    /// Canonical TOML echo of the spec.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("sweep specs always serialize")
    }

    /// Git-style content hash: SHA-256 of `"blob <len>\0" + canonical`.
    pub fn config_hash(&self) -> String {
        content_hash(&self.canonical())
    }

    /// `(c index, n, ε)` of every cell, c-major.
    fn cells(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for k in 0..self.c_values.len() {
            match self.axis() {
                Axis::N => {
                    for &n in &self.n_values {
                        out.push((k, n, self.epsilon.unwrap_or(f64::NAN)));
                    }
                }
                Axis::Epsilon => {
                    for &e in &self.epsilon_values {
                        out.push((k, self.n_values[0], e));
                    }
                }
            }
        }
        out
    }
}

pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

/// Seed of Monte-Carlo run `run` at sample size `n`: `derive_seed(base, [n, run])`.
/// Shared across `c` and ε so curves use common random numbers.
pub fn run_seed(base: u64, n: usize, run: usize) -> u64 {
    derive_seed(base, &[n as u64, run as u64])
}

/// Schedule and noise level of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPlan {
    pub cell: usize,
    pub c: f64,
    pub n: usize,
    pub epsilon: f64,
    pub schedule: Schedule,
    pub sigma2: f64,
    /// Chosen calibration (also reported, but unused, when noise is off).
    pub calibration: Calibration,
    pub epsilon_achieved: Option<f64>,
}

/// Computes schedules and calibrations for every cell without training.
pub fn plan_sweep(spec: &SweepSpec, problem: &Problem) -> Result<Vec<CellPlan>, ExperimentError> {
    let violations = spec.violations();
    if !violations.is_empty() {
        return Err(ExperimentError::InvalidSpec(violations));
    }
    let cert = *problem.loss().certificate();
    let which = if problem.is_pairwise() { Which::Pairwise } else { Which::Pointwise };
    spec.cells()
        .into_iter()
        .enumerate()
        .map(|(cell, (k, n, epsilon))| {
            let c = spec.c_values[k];
            let schedule = make_schedule(spec.regime, n, problem.dim(), epsilon, spec.delta, &cert.smoothness, c)?;
            let target = DpTarget::new(epsilon, spec.delta).map_err(|source| ExperimentError::Audit { n, source })?;
            let calibration = find_beta(n, schedule.t, cert.g, &target, which);
            let epsilon_achieved = calibration
                .feasible
                .then(|| verify_run_privacy(&calibration).ok().map(|a| a.epsilon_achieved))
                .flatten();
            let sigma2 = match spec.noise {
                NoiseMode::Calibrated => calibration.sigma2,
                NoiseMode::Off => 0.0,
            };
            Ok(CellPlan { cell, c, n, epsilon, schedule, sigma2, calibration, epsilon_achieved })
        })
        .collect()
}

/// Fails closed: every calibrated cell must be feasible and pass the audit.
fn check_privacy(spec: &SweepSpec, plans: &[CellPlan]) -> Result<(), ExperimentError> {
    if spec.noise == NoiseMode::Off {
        return Ok(());
    }
    for p in plans {
        let cal = &p.calibration;
        if !cal.feasible {
            return Err(ExperimentError::Infeasible {
                n: p.n,
                t: p.schedule.t,
                epsilon: p.epsilon,
                min_feasible: min_feasible_epsilon(p.n, p.schedule.t, cal.g, spec.delta, cal.which),
                threshold: min_epsilon_for_beta(p.n).ok(),
            });
        }
        let audit = verify_run_privacy(cal).map_err(|source| ExperimentError::Audit { n: p.n, source })?;
        if !audit_meets_target(&audit, &cal.target) {
            return Err(ExperimentError::AuditExceeded {
                n: p.n,
                achieved: audit.epsilon_achieved,
                target: cal.target.epsilon,
            });
        }
    }
    Ok(())
}

/// One Monte-Carlo training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: usize,
    pub run: usize,
    pub seed: u64,
    /// `F(w_priv) − F(w*)`.
    pub excess: f64,
    pub oracle_error: f64,
}

/// Aggregate of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub epsilon: f64,
    pub mean_excess: f64,
    pub stderr: f64,
    pub sigma2: f64,
    pub eta: f64,
    #[serde(rename = "T")]
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub c: f64,
    pub rows: Vec<SweepRow>,
    /// Fit of `ln mean_excess` on `ln n` (or on `ln(1/ε)`).
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub config_hash: String,
    pub axis: Axis,
    pub f_star: f64,
    pub curves: Vec<Curve>,
    pub records: Vec<RunRecord>,
}

fn run_one(problem: &Problem, plan: &CellPlan, run: usize, base: u64) -> Result<RunRecord, ExperimentError> {
    let seed = run_seed(base, plan.n, run);
    let data = problem.sample(plan.n, seed);
    let config = SgdConfig::new(problem.radius(), plan.schedule, plan.sigma2, seed).with_record(Recording::Off);
    let report = problem.train(&config, &data)?;
    let ex = problem.excess_risk(&report.w_priv);
    if ex.value < -3.0 * ex.error - 1e-12 {
        return Err(ExperimentError::Oracle { n: plan.n, run, excess: ex.value, error: ex.error });
    }
    Ok(RunRecord { cell: plan.cell, run, seed, excess: ex.value, oracle_error: ex.error })
}

/// Runs the sweep in memory.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    execute(spec, None)
}

/// Runs the sweep, journaling each finished run under `out_dir`; runs
/// already in the journal are not repeated.
pub fn run_sweep_resumable(spec: &SweepSpec, out_dir: &Path) -> Result<SweepResult, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let journal = Journal::open(&out_dir.join(JOURNAL_FILE), &spec.config_hash())?;
    execute(spec, Some(&journal))
}

fn execute(spec: &SweepSpec, journal: Option<&Journal>) -> Result<SweepResult, ExperimentError> {
    let problem = spec.problem.build()?;
    let plans = plan_sweep(spec, &problem)?;
    check_privacy(spec, &plans)?;
    let mut done: BTreeMap<(usize, usize), RunRecord> = journal.map(|j| j.existing.clone()).unwrap_or_default();
    for plan in &plans {
        let todo: Vec<usize> = (0..spec.mc_runs).filter(|r| !done.contains_key(&(plan.cell, *r))).collect();
        let fresh: Vec<RunRecord> = todo
            .par_iter()
            .map(|&run| {
                let rec = run_one(&problem, plan, run, spec.seed)?;
                if let Some(j) = journal {
                    j.append(&rec)?;
                }
                Ok(rec)
            })
            .collect::<Result<_, ExperimentError>>()?;
        for rec in fresh {
            done.insert((rec.cell, rec.run), rec);
        }
    }
    let records: Vec<RunRecord> = done.into_values().filter(|r| r.cell < plans.len() && r.run < spec.mc_runs).collect();
    Ok(assemble(spec, &problem, &plans, records))
}

fn assemble(spec: &SweepSpec, problem: &Problem, plans: &[CellPlan], records: Vec<RunRecord>) -> SweepResult {
    let axis = spec.axis();
    let cells = spec.cells();
    let mut curves = Vec::new();
    for (k, &c) in spec.c_values.iter().enumerate() {
        let rows: Vec<SweepRow> = plans
            .iter()
            .filter(|p| cells[p.cell].0 == k)
            .map(|p| {
                let vals: Vec<f64> = records.iter().filter(|r| r.cell == p.cell).map(|r| r.excess).collect();
                let (mean_excess, stderr) = mean_and_stderr(&vals);
                SweepRow {
                    n: p.n,
                    epsilon: p.epsilon,
                    mean_excess,
                    stderr,
                    sigma2: p.sigma2,
                    eta: p.schedule.eta,
                    t: p.schedule.t,
                }
            })
            .collect();
        let points: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| match axis {
                Axis::N => (r.n as f64, r.mean_excess),
                Axis::Epsilon => (1.0 / r.epsilon, r.mean_excess),
            })
            .collect();
        let (fit, fit_error) = match fit_rate(&points) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        curves.push(Curve { c, rows, fit, fit_error });
    }
    SweepResult {
        spec: spec.clone(),
        config_hash: spec.config_hash(),
        axis,
        f_star: problem.f_star(),
        curves,
        records,
    }
}

pub const JOURNAL_FILE: &str = "journal.csv";
const JOURNAL_MAGIC: &str = "# sweep journal";

/// Append-only `cell,run,seed,excess,oracle_error` records, floats in
/// shortest round-trip form.
struct Journal {
    path: PathBuf,
    file: Mutex<File>,
    existing: BTreeMap<(usize, usize), RunRecord>,
}

impl Journal {
    fn open(path: &Path, hash: &str) -> Result<Self, ExperimentError> {
        let mut existing = BTreeMap::new();
        let header = format!("{JOURNAL_MAGIC} {hash}");
        let mut fresh = true;
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let complete = match text.rfind('\n') {
                Some(i) => &text[..=i],
                None => "",
            };
            let mut lines = complete.lines();
            if let Some(first) = lines.next() {
                fresh = false;
                let found = first.strip_prefix(JOURNAL_MAGIC).map(str::trim).unwrap_or("");
                if found != hash {
                    return Err(ExperimentError::JournalMismatch {
                        path: path.to_path_buf(),
                        expected: hash.to_string(),
                        found: found.to_string(),
                    });
                }
                for (i, line) in lines.enumerate() {
                    let rec = parse_journal_line(line).map_err(|message| ExperimentError::Journal {
                        path: path.to_path_buf(),
                        line: i + 2,
                        message,
                    })?;
                    existing.insert((rec.cell, rec.run), rec);
                }
            }
            if complete.len() != text.len() {
                fs::write(path, complete).map_err(|e| io_err(path, e))?;
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_err(path, e))?;
        if fresh {
            writeln!(file, "{header}").map_err(|e| io_err(path, e))?;
        }
        Ok(Journal { path: path.to_path_buf(), file: Mutex::new(file), existing })
    }

    fn append(&self, r: &RunRecord) -> Result<(), ExperimentError> {
        let line = format!("{},{},{},{:e},{:e}\n", r.cell, r.run, r.seed, r.excess, r.oracle_error);
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| io_err(&self.path, e))
    }
}

fn parse_journal_line(line: &str) -> Result<RunRecord, String> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 5 {
        return Err(format!("expected 5 fields, got {}", f.len()));
    }
    let bad = |k: &str| format!("unparsable {k}");
    Ok(RunRecord {
        cell: f[0].parse().map_err(|_| bad("cell"))?,
        run: f[1].parse().map_err(|_| bad("run"))?,
        seed: f[2].parse().map_err(|_| bad("seed"))?,
        excess: f[3].parse().map_err(|_| bad("excess"))?,
        oracle_error: f[4].parse().map_err(|_| bad("oracle_error"))?,
    })
}

pub const CSV_HEADER: &str = "n,mean_excess,stderr,sigma2,eta,T";
pub const EPSILON_CSV_HEADER: &str = "epsilon,mean_excess,stderr,sigma2,eta,T";

/// Curve as CSV; numbers use 17 significant digits.
pub fn curve_csv(curve: &Curve, axis: Axis) -> String {
    let mut s = String::new();
    s.push_str(match axis {
        Axis::N => CSV_HEADER,
        Axis::Epsilon => EPSILON_CSV_HEADER,
    });
    s.push('\n');
    for r in &curve.rows {
        match axis {
            Axis::N => {
                let _ = write!(s, "{}", r.n);
            }
            Axis::Epsilon => {
                let _ = write!(s, "{:.16e}", r.epsilon);
            }
        }
        let _ = writeln!(s, ",{:.16e},{:.16e},{:.16e},{:.16e},{}", r.mean_excess, r.stderr, r.sigma2, r.eta, r.t);
    }
    s
}

/// One parsed CSV line: the axis value then the five columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub x: f64,
    pub mean_excess: f64,
    pub stderr: f64,
    pub sigma2: f64,
    pub eta: f64,
    pub t: u64,
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER || h == EPSILON_CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(format!("line {}: expected 6 fields", i + 2));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
            Ok(CsvRow {
                x: num(0)?,
                mean_excess: num(1)?,
                stderr: num(2)?,
                sigma2: num(3)?,
                eta: num(4)?,
                t: f[5].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
            })
        })
        .collect()
}

/// Run-level CSV: `cell,c,n,epsilon,run,seed,excess,oracle_error`.
pub fn runs_csv(result: &SweepResult) -> String {
    let cells = result.spec.cells();
    let mut s = String::from("cell,c,n,epsilon,run,seed,excess,oracle_error\n");
    for r in &result.records {
        let (k, n, e) = cells[r.cell];
        let _ = writeln!(
            s,
            "{},{:.16e},{},{:.16e},{},{},{:.16e},{:.16e}",
            r.cell, result.spec.c_values[k], n, e, r.run, r.seed, r.excess, r.oracle_error
        );
    }
    s
}

#[derive(Serialize)]
struct Metadata<'a> {
    spec: &'a SweepSpec,
    config_hash: &'a str,
    axis: Axis,
    f_star: f64,
    seed_rule: &'static str,
    curves: Vec<CurveMeta<'a>>,
    runs_file: &'static str,
}

#[derive(Serialize)]
struct CurveMeta<'a> {
    c: f64,
    file: String,
    fit: &'a Option<RateFit>,
    fit_error: &'a Option<String>,
}

fn curve_file(k: usize, total: usize) -> String {
    if total == 1 {
        "sweep.csv".to_string()
    } else {
        format!("sweep-c{k}.csv")
    }
}

/// Writes one CSV per curve, `runs.csv` and `sweep.json`; returns the paths.
pub fn emit_report(result: &SweepResult, out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: &str, body: &str| -> Result<(), ExperimentError> {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| io_err(&p, e))?;
        written.push(p);
        Ok(())
    };
    let total = result.curves.len();
    for (k, c) in result.curves.iter().enumerate() {
        write(&curve_file(k, total), &curve_csv(c, result.axis))?;
    }
    write("runs.csv", &runs_csv(result))?;
    let meta = Metadata {
        spec: &result.spec,
        config_hash: &result.config_hash,
        axis: result.axis,
        f_star: result.f_star,
        seed_rule: "run seed = derive_seed(seed, [n, run]); data, index and noise streams all derive from it",
        curves: result
            .curves
            .iter()
            .enumerate()
            .map(|(k, c)| CurveMeta { c: c.c, file: curve_file(k, total), fit: &c.fit, fit_error: &c.fit_error })
            .collect(),
        runs_file: "runs.csv",
    };
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
    write("sweep.json", &json)?;
    Ok(written)
}

/// One row of the calibration table printed by a dry run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DryRunRow {
    pub c: f64,
    pub n: usize,
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub t: u64,
    pub eta: f64,
    pub beta: f64,
    pub lambda: f64,
    pub sigma2: f64,
    pub feasible: bool,
    pub epsilon_achieved: Option<f64>,
}

pub fn dry_run(spec: &SweepSpec) -> Result<Vec<DryRunRow>, ExperimentError> {
    let problem = spec.problem.build()?;
    Ok(plan_sweep(spec, &problem)?
        .into_iter()
        .map(|p| DryRunRow {
            c: p.c,
            n: p.n,
            epsilon: p.epsilon,
            t: p.schedule.t,
            eta: p.schedule.eta,
            beta: p.calibration.beta,
            lambda: p.calibration.lambda,
            sigma2: p.calibration.sigma2,
            feasible: p.calibration.feasible,
            epsilon_achieved: p.epsilon_achieved,
        })
        .collect())
}

pub const DRY_RUN_HEADER: &str = "c,n,epsilon,T,eta,beta,lambda,sigma2,feasible,eps_achieved";

pub fn dry_run_csv(rows: &[DryRunRow]) -> String {
    let mut s = format!("{DRY_RUN_HEADER}\n");
    for r in rows {
        let achieved = r.epsilon_achieved.map(|e| format!("{e:.16e}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{:.16e},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            r.c, r.n, r.epsilon, r.t, r.eta, r.beta, r.lambda, r.sigma2, r.feasible, achieved
        );
    }
    s
}
