//! Projected noisy SGD for pointwise and pairwise losses, and the
//! step-size / horizon schedules that go with each regime.
//!
//! Both engines start at `w₁ = 0`, draw a fresh uniform index (or ordered
//! pair of distinct indices) every step, add `N(0, σ² I)` noise to the
//! sampled gradient, project onto the ball of radius `R` and return the
//! average of the iterates `w₁ … w_T`.
//!
//! Indices are drawn from stream [`streams::INDICES`] and noise from
//! [`streams::NOISE`] of the run seed, so two runs with the same seed share
//! both sequences.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{Example, PairwiseLoss, PointwiseLoss, SmoothnessClass};
use crate::numerics::{
    check_radius, compensated_sum, dot, project_ball_in_place, streams, uniform_distinct_pair, CompensatedSum,
    NumericsError, RngState, RngStream, Vector,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SgdError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("dataset is empty")]
    EmptyData,
    #[error("example {index} has dimension {got}, expected {expected}")]
    RaggedData { index: usize, got: usize, expected: usize },
    #[error("regime {regime} needs a {needs} loss")]
    RegimeMismatch { regime: Regime, needs: &'static str },
    #[error("step size must be finite and nonnegative, got {0}")]
    InvalidStep(f64),
    #[error("noise variance must be finite and nonnegative, got {0}")]
    InvalidSigma2(f64),
    #[error("schedule constant c must be positive, got {0}")]
    InvalidC(f64),
    #[error("number of steps T must be at least 1")]
    ZeroSteps,
    #[error("n and d must be at least 1")]
    ZeroSize,
    #[error("epsilon must be positive and delta in (0,1), got ({0}, {1})")]
    InvalidTarget(f64, f64),
    #[error("non-finite iterate after step {step}")]
    NonFiniteIterate { step: u64 },
}

/// Which utility theorem a schedule follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SmoothGeneral,
    SmoothLownoise,
    HolderGeneral,
    HolderLownoise,
}

impl Regime {
    pub const ALL: [Regime; 4] =
        [Regime::SmoothGeneral, Regime::SmoothLownoise, Regime::HolderGeneral, Regime::HolderLownoise];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::SmoothGeneral => "smooth_general",
            Regime::SmoothLownoise => "smooth_lownoise",
            Regime::HolderGeneral => "holder_general",
            Regime::HolderLownoise => "holder_lownoise",
        }
    }

    pub fn is_holder(self) -> bool {
        matches!(self, Regime::HolderGeneral | Regime::HolderLownoise)
    }

    pub fn is_lownoise(self) -> bool {
        matches!(self, Regime::SmoothLownoise | Regime::HolderLownoise)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smooth_general" => Ok(Regime::SmoothGeneral),
            "smooth_lownoise" => Ok(Regime::SmoothLownoise),
            "holder_general" | "hölder_general" => Ok(Regime::HolderGeneral),
            "holder_lownoise" | "hölder_lownoise" => Ok(Regime::HolderLownoise),
            other => Err(format!(
                "unknown regime '{other}' (expected smooth_general, smooth_lownoise, holder_general or holder_lownoise)"
            )),
        }
    }
}

/// Constant step size `eta` for `t` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eta: f64,
    pub t: u64,
    /// `None` for hand-built schedules.
    pub regime: Option<Regime>,
    pub c: f64,
}

impl Schedule {
    /// A hand-picked schedule, not tied to any regime.
    pub fn fixed(eta: f64, t: u64) -> Result<Self, SgdError> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(SgdError::InvalidStep(eta));
        }
        if t == 0 {
            return Err(SgdError::ZeroSteps);
        }
        Ok(Schedule { eta, t, regime: None, c: 1.0 })
    }
}

/// Largest step the utility theorems allow: `min{2/L, 1}`.
pub fn step_cap(smoothness: &SmoothnessClass) -> f64 {
    (2.0 / smoothness.l()).min(1.0)
}

/// Builds the schedule of a regime with unit proportionality in `T` (ceiled)
/// and step size capped at `min{2/L, 1}`:
///
/// * `smooth_general`: `η = c·min{n^{-1/2}, ε/√(d log(1/δ))}`, `T = n`
/// * `smooth_lownoise`: `η = c·ε/√(d log(1/δ))`, `T = n`
/// * `holder_general`: as `smooth_general` when `α ≥ 1/2`; otherwise
///   `η = c·min{n^{3(α−1)/(2(1+α))}, ε/√(d log(1/δ))}`, `T = ⌈n^{(2−α)/(1+α)}⌉`
/// * `holder_lownoise`: `T = ⌈n^{2/(1+α)}⌉`,
///   `η = c·min{n^{(α²+2α−3)/(2(1+α))}, nε/(T√(d log(1/δ)))}`
pub fn make_schedule(
    regime: Regime,
    n: usize,
    d: usize,
    epsilon: f64,
    delta: f64,
    smoothness: &SmoothnessClass,
    c: f64,
) -> Result<Schedule, SgdError> {
    if n == 0 || d == 0 {
        return Err(SgdError::ZeroSize);
    }
    if !(epsilon > 0.0 && epsilon.is_finite() && delta > 0.0 && delta < 1.0) {
        return Err(SgdError::InvalidTarget(epsilon, delta));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(SgdError::InvalidC(c));
    }
    match (regime.is_holder(), smoothness.is_smooth()) {
        (true, true) => return Err(SgdError::RegimeMismatch { regime, needs: "Hölder-smooth" }),
        (false, false) => return Err(SgdError::RegimeMismatch { regime, needs: "smooth" }),
        _ => {}
    }
    let nf = n as f64;
    let private = epsilon / (d as f64 * (1.0 / delta).ln()).sqrt();
    let alpha = smoothness.alpha();
    let (raw, t) = match regime {
        Regime::SmoothGeneral => (nf.powf(-0.5).min(private), n as u64),
        Regime::SmoothLownoise => (private, n as u64),
        Regime::HolderGeneral if alpha >= 0.5 => (nf.powf(-0.5).min(private), n as u64),
        Regime::HolderGeneral => {
            let t = ceil_pow(n as u64, (2.0 - alpha) / (1.0 + alpha));
            (nf.powf(3.0 * (alpha - 1.0) / (2.0 * (1.0 + alpha))).min(private), t)
        }
        Regime::HolderLownoise => {
            let t = ceil_pow(n as u64, 2.0 / (1.0 + alpha));
            let stat = nf.powf((alpha * alpha + 2.0 * alpha - 3.0) / (2.0 * (1.0 + alpha)));
            (stat.min(nf * private / t as f64), t)
        }
    };
    let eta = (c * raw).min(step_cap(smoothness));
    Ok(Schedule { eta, t: t.max(1), regime: Some(regime), c })
}

/// `⌈n^e⌉`, exact when `e` is a small-denominator rational and the powers
/// fit in 128 bits; otherwise a float ceiling that snaps values within
/// 1e-9 (relative) of an integer.
pub fn ceil_pow(n: u64, e: f64) -> u64 {
    if let Some((p, q)) = small_rational(e) {
        if let Some(m) = exact_ceil_root(n, p, q) {
            return m;
        }
    }
    let x = (n as f64).powf(e);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

fn small_rational(x: f64) -> Option<(u32, u32)> {
    if !(x >= 0.0 && x.is_finite()) {
        return None;
    }
    (1..=64u32).find_map(|q| {
        let p = (x * q as f64).round();
        ((x * q as f64 - p).abs() < 1e-9 && p <= u32::MAX as f64).then_some((p as u32, q))
    })
}

/// Smallest `m` with `m^q ≥ n^p`.
fn exact_ceil_root(n: u64, p: u32, q: u32) -> Option<u64> {
    let target = (n as u128).checked_pow(p)?;
    let pow = |m: u128| m.checked_pow(q);
    let mut m = ((n as f64).powf(p as f64 / q as f64).floor() as u128).max(1);
    while m > 1 && pow(m - 1)? >= target {
        m -= 1;
    }
    while pow(m)? < target {
        m += 1;
    }
    u64::try_from(m).ok()
}

/// How often the engines evaluate the empirical risk of the iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    /// Neither per-iterate nor final empirical risk.
    Off,
    /// Every `max(1, T/256)` steps, plus the last iterate.
    #[default]
    Auto,
    /// Every `k` steps, plus the last iterate.
    Every(u64),
}

impl Recording {
    fn interval(self, t: u64) -> Option<u64> {
        match self {
            Recording::Off => None,
            Recording::Auto => Some((t / 256).max(1)),
            Recording::Every(k) => Some(k.max(1)),
        }
    }
}

/// Everything one run needs besides the loss and the data.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    /// Projection radius; `f64::INFINITY` means unconstrained.
    pub radius: f64,
    pub schedule: Schedule,
    /// Per-coordinate noise variance; 0 for a non-private baseline.
    pub sigma2: f64,
    pub seed: u64,
    pub record: Recording,
    /// Keep every iterate `w₁ … w_T` in the report.
    pub store_iterates: bool,
    /// Steps `t` after which `w_{t+1}` is kept in the report.
    pub checkpoints: Vec<u64>,
}

impl SgdConfig {
    pub fn new(radius: f64, schedule: Schedule, sigma2: f64, seed: u64) -> Self {
        SgdConfig {
            radius,
            schedule,
            sigma2,
            seed,
            record: Recording::Auto,
            store_iterates: false,
            checkpoints: Vec::new(),
        }
    }

    pub fn with_record(mut self, record: Recording) -> Self {
        self.record = record;
        self
    }

    pub fn with_iterates(mut self) -> Self {
        self.store_iterates = true;
        self
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn index_stream(&self) -> RngState {
        RngState::new(self.seed, streams::INDICES)
    }

    pub fn noise_stream(&self) -> RngState {
        RngState::new(self.seed, streams::NOISE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSample {
    pub t: u64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub w: Vector,
}

/// Summary of the Gaussian perturbations actually drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub draws: u64,
    /// Average of `b²` over all drawn coordinates (0 when none were drawn).
    pub mean_square: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// `(1/T) Σ_{t=1}^T w_t`.
    pub w_priv: Vector,
    /// `w_{T+1}`, the iterate after the last update.
    pub w_last: Vector,
    pub iterate_risks: Vec<RiskSample>,
    /// Empirical risk at `w_priv`, unless recording is off.
    pub final_risk: Option<f64>,
    pub index_stream: RngState,
    pub noise_stream: RngState,
    pub sigma2: f64,
    pub eta: f64,
    pub t: u64,
    pub noise: NoiseSummary,
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Vector>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<Checkpoint>,
}

fn check_data(data: &[Example]) -> Result<usize, SgdError> {
    let d = data.first().ok_or(SgdError::EmptyData)?.x.dim();
    for (index, z) in data.iter().enumerate() {
        if z.x.dim() != d {
            return Err(SgdError::RaggedData { index, got: z.x.dim(), expected: d });
        }
    }
    Ok(d)
}

fn check_config(config: &SgdConfig) -> Result<(), SgdError> {
    check_radius(config.radius)?;
    if !(config.sigma2 >= 0.0 && config.sigma2.is_finite()) {
        return Err(SgdError::InvalidSigma2(config.sigma2));
    }
    if !(config.schedule.eta >= 0.0 && config.schedule.eta.is_finite()) {
        return Err(SgdError::InvalidStep(config.schedule.eta));
    }
    if config.schedule.t == 0 {
        return Err(SgdError::ZeroSteps);
    }
    Ok(())
}

/// Shared driver. `grad` writes the sampled (pair) gradient at `w` into its
/// output buffer using the index stream; `risk` evaluates `F_S`.
fn drive<G, R>(config: &SgdConfig, d: usize, mut grad: G, risk: R) -> Result<RunReport, SgdError>
where
    G: FnMut(&[f64], &mut RngStream, &mut [f64]),
    R: Fn(&[f64]) -> f64,
{
    let start = Instant::now();
    let total = config.schedule.t;
    let eta = config.schedule.eta;
    let sigma = config.sigma2.sqrt();
    let interval = config.record.interval(total);

    let mut indices = config.index_stream().start();
    let mut noise = config.noise_stream().start();
    let mut w = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut sum = CompensatedSum::new(d);
    let mut risks = Vec::new();
    let mut iterates = config.store_iterates.then(Vec::new);
    let mut checkpoints = Vec::new();
    let mut noise_sq = 0.0;
    let mut draws = 0u64;

    for t in 1..=total {
        sum.add(&w);
        if let Some(v) = iterates.as_mut() {
            v.push(Vector::from_finite(w.clone()));
        }
        if let Some(k) = interval {
            if (t - 1) % k == 0 || t == total {
                risks.push(RiskSample { t, risk: risk(&w) });
            }
        }
        grad(&w, &mut indices, &mut g);
        if sigma > 0.0 {
            for (wi, gi) in w.iter_mut().zip(&g) {
                let b = sigma * noise.standard_normal();
                noise_sq += b * b;
                *wi -= eta * (gi + b);
            }
            draws += d as u64;
        } else {
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= eta * gi;
            }
        }
        if !w.iter().all(|x| x.is_finite()) {
            return Err(SgdError::NonFiniteIterate { step: t });
        }
        project_ball_in_place(&mut w, config.radius);
        if config.checkpoints.contains(&t) {
            checkpoints.push(Checkpoint { t, w: Vector::from_finite(w.clone()) });
        }
    }

    let mut avg = sum.mean(total as usize);
    project_ball_in_place(&mut avg, config.radius);
    let final_risk = interval.map(|_| risk(&avg));
    Ok(RunReport {
        w_priv: Vector::from_finite(avg),
        w_last: Vector::from_finite(w),
        iterate_risks: risks,
        final_risk,
        index_stream: config.index_stream(),
        noise_stream: config.noise_stream(),
        sigma2: config.sigma2,
        eta,
        t: total,
        noise: NoiseSummary { draws, mean_square: if draws > 0 { noise_sq / draws as f64 } else { 0.0 } },
        wall_time: start.elapsed(),
        iterates,
        checkpoints,
    })
}

/// Noisy projected SGD on single examples.
pub fn run_pointwise(config: &SgdConfig, loss: &PointwiseLoss, data: &[Example]) -> Result<RunReport, SgdError> {
    let d = check_data(data)?;
    check_config(config)?;
    let n = data.len();
    drive(
        config,
        d,
        |w, rng, out| {
            let z = &data[rng.below(n)];
            let k = loss.grad_coeff(w, z);
            for (o, x) in out.iter_mut().zip(z.x.as_slice()) {
                *o = k * x;
            }
        },
        |w| pointwise_risk(loss, w, data),
    )
}

/// Noisy projected SGD on ordered pairs of distinct examples.
pub fn run_pairwise(config: &SgdConfig, loss: &PairwiseLoss, data: &[Example]) -> Result<RunReport, SgdError> {
    let d = check_data(data)?;
    check_config(config)?;
    let n = data.len();
    if n < 2 {
        return Err(NumericsError::PairNeedsTwo(n).into());
    }
    drive(
        config,
        d,
        |w, rng, out| {
            // n >= 2 was checked above
            let (i, j) = uniform_distinct_pair(rng, n).unwrap_or((0, 1));
            let (a, b) = (&data[i], &data[j]);
            let u = dot(w, a.x.as_slice()) - dot(w, b.x.as_slice());
            let k = loss.grad_coeff_at(u, a.y, b.y);
            for ((o, xa), xb) in out.iter_mut().zip(a.x.as_slice()).zip(b.x.as_slice()) {
                *o = k * (xa - xb);
            }
        },
        |w| pairwise_risk(loss, w, data),
    )
}

fn pointwise_risk(loss: &PointwiseLoss, w: &[f64], data: &[Example]) -> f64 {
    compensated_sum(data.iter().map(|z| loss.value_raw(w, z))) / data.len() as f64
}

const PARALLEL_ROWS: usize = 256;

fn pairwise_risk(loss: &PairwiseLoss, w: &[f64], data: &[Example]) -> f64 {
    let n = data.len();
    let u: Vec<f64> = data.iter().map(|z| dot(w, z.x.as_slice())).collect();
    let row = |i: usize| {
        let (ui, yi) = (u[i], data[i].y);
        compensated_sum(
            (0..n).filter(|&j| j != i).map(|j| loss.value_at(ui - u[j], yi, data[j].y)),
        )
    };
    let rows: Vec<f64> = if n >= PARALLEL_ROWS {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    compensated_sum(rows) / (n as f64 * (n - 1) as f64)
}

/// `F_S(w) = (1/n) Σ f(w; z_i)`.
pub fn empirical_risk(loss: &PointwiseLoss, w: &Vector, data: &[Example]) -> Result<f64, SgdError> {
    let d = check_data(data)?;
    if w.dim() != d {
        return Err(NumericsError::DimensionMismatch(w.dim(), d).into());
    }
    Ok(pointwise_risk(loss, w.as_slice(), data))
}

/// `F̄_S(w) = (1/(n(n−1))) Σ_{i≠j} f(w; z_i, z_j)` over all ordered pairs.
pub fn empirical_pairwise_risk(loss: &PairwiseLoss, w: &Vector, data: &[Example]) -> Result<f64, SgdError> {
    let d = check_data(data)?;
    if data.len() < 2 {
        return Err(NumericsError::PairNeedsTwo(data.len()).into());
    }
    if w.dim() != d {
        return Err(NumericsError::DimensionMismatch(w.dim(), d).into());
    }
    Ok(pairwise_risk(loss, w.as_slice(), data))
}
